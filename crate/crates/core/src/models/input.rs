use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Mention, Sentence};
use crate::subword::{Vocab, CLS, CLS_ID, PAD, PAD_ID, SEP, SEP_ID};
use crate::{Error, Result};

/// Default span detection question.
pub const DETECTION_QUESTION: &str = "Extract important entity spans from the following text.";

/// Detection questions compared in the question ablation. The last is empty.
pub const QUESTION_VARIANTS: [&str; 4] = [
    DETECTION_QUESTION,
    "Where is the entity mentioned in the text?",
    "Find named entities in the following text.",
    "",
];

/// Per-type question of the single-model QA baseline.
pub fn type_question(entity_type: &str) -> String {
    format!("Where is the {} mentioned in the text?", entity_type.to_lowercase())
}

/// Question asked of the span classifier.
pub fn classification_question(mention_text: &str) -> String {
    format!("What is {mention_text}?")
}

/// Splits question text on whitespace and isolates every ASCII punctuation
/// character as its own word.
pub fn question_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars() {
            if c.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// One encoder input. Every list has the same length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub subtokens: Vec<String>,
    pub ids: Vec<u32>,
    /// 0 for `[CLS]` and the question, 1 for the sentence part.
    pub segments: Vec<u32>,
    pub attention_mask: Vec<bool>,
    /// True exactly at the first subtoken of each sentence word.
    pub loss_mask: Vec<bool>,
    /// Input position of the first subtoken of each kept sentence word.
    pub word_positions: Vec<usize>,
    /// Words of the sentence, including any dropped by truncation.
    pub sentence_len: usize,
    pub truncated: bool,
}

impl ModelInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of positions before padding.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m).count()
    }

    /// Post-pads to `len` positions.
    pub fn padded(&self, len: usize) -> Self {
        let mut out = self.clone();
        let extra = len.saturating_sub(self.len());
        out.subtokens.extend(core::iter::repeat(PAD.to_string()).take(extra));
        out.ids.extend(core::iter::repeat(PAD_ID).take(extra));
        out.segments.extend(core::iter::repeat(0).take(extra));
        out.attention_mask.extend(core::iter::repeat(false).take(extra));
        out.loss_mask.extend(core::iter::repeat(false).take(extra));
        out
    }

    /// Drops padding added by [`ModelInput::padded`].
    pub fn unpadded(&self) -> Self {
        let n = self.real_len();
        let mut out = self.clone();
        out.subtokens.truncate(n);
        out.ids.truncate(n);
        out.segments.truncate(n);
        out.attention_mask.truncate(n);
        out.loss_mask.truncate(n);
        out
    }
}

/// Pads every input to the longest in the batch.
pub fn pad_batch(inputs: &[ModelInput]) -> Vec<ModelInput> {
    let len = inputs.iter().map(ModelInput::len).max().unwrap_or(0);
    inputs.iter().map(|i| i.padded(len)).collect()
}

/// `[CLS] question [SEP] sentence [SEP]`, or `[CLS] sentence [SEP]` when
/// `question` is `None`. Whole words are dropped from the right of the
/// sentence when the input would exceed `max_len`.
pub fn build_input(
    sentence: &Sentence,
    question: Option<&[String]>,
    vocab: &Vocab,
    max_len: usize,
) -> Result<ModelInput> {
    let mut input = ModelInput {
        subtokens: Vec::new(),
        ids: Vec::new(),
        segments: Vec::new(),
        attention_mask: Vec::new(),
        loss_mask: Vec::new(),
        word_positions: Vec::new(),
        sentence_len: sentence.len(),
        truncated: false,
    };
    let push = |input: &mut ModelInput, piece: String, id: u32, segment: u32, first: bool| {
        input.subtokens.push(piece);
        input.ids.push(id);
        input.segments.push(segment);
        input.attention_mask.push(true);
        input.loss_mask.push(first);
    };
    push(&mut input, CLS.into(), CLS_ID, 0, false);
    if let Some(q) = question {
        for w in q {
            for piece in vocab.tokenize_word(w) {
                let id = vocab.id_or_unk(&piece);
                push(&mut input, piece, id, 0, false);
            }
        }
        push(&mut input, SEP.into(), SEP_ID, 0, false);
    }
    for w in sentence.words() {
        let pieces = vocab.tokenize_word(w);
        if input.len() + pieces.len() + 1 > max_len {
            if input.word_positions.is_empty() {
                return Err(Error::QuestionTooLong { needed: input.len() + pieces.len() + 1, max: max_len });
            }
            input.truncated = true;
            break;
        }
        input.word_positions.push(input.len());
        for (k, piece) in pieces.into_iter().enumerate() {
            let id = vocab.id_or_unk(&piece);
            push(&mut input, piece, id, 1, k == 0);
        }
    }
    push(&mut input, SEP.into(), SEP_ID, 1, false);
    Ok(input)
}

/// Detection input with the given question text; an empty question still
/// keeps its `[SEP]`.
pub fn build_detection_input(sentence: &Sentence, question: &str, vocab: &Vocab, max_len: usize) -> Result<ModelInput> {
    build_input(sentence, Some(&question_words(question)), vocab, max_len)
}

/// Classification input asking "What is <mention>?" about `span`.
pub fn build_classification_input(
    sentence: &Sentence,
    span: &Mention,
    vocab: &Vocab,
    max_len: usize,
) -> Result<ModelInput> {
    if span.start > span.end || span.end >= sentence.len() {
        return Err(Error::SpanOutOfBounds { start: span.start, end: span.end, len: sentence.len() });
    }
    let mut q = question_words("What is");
    q.extend(sentence.tokens[span.start..=span.end].iter().map(|t| t.text.clone()));
    q.push("?".into());
    build_input(sentence, Some(&q), vocab, max_len)
}
