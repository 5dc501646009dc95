//! Greedy longest-match-first WordPiece tokenization and word/subtoken label
//! alignment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Dataset, Tag, TagSequence};
use crate::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];
pub const CONTINUATION: &str = "##";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<String>,
    lookup: BTreeMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from entries in id order. The four specials must
    /// come first, in `SPECIALS` order.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        if entries.len() < SPECIALS.len() || entries.iter().zip(SPECIALS).any(|(e, s)| e != s) {
            return Err(Error::Vocab(format!("the first entries must be {SPECIALS:?}")));
        }
        let mut lookup = BTreeMap::new();
        for (id, e) in entries.iter().enumerate() {
            if e.is_empty() || e.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid entry `{e}` at id {id}")));
            }
            if lookup.insert(e.clone(), id as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate entry `{e}`")));
            }
        }
        Ok(Self { entries, lookup })
    }

    /// Parses the vocabulary file format: one entry per line, line order is id order.
    pub fn from_text(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .filter(|l| !l.is_empty())
            .map(ToString::to_string)
            .collect();
        Self::from_entries(entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    /// Specials, then every character and its `##` form, then the most
    /// frequent multi-character words (ties broken lexicographically) until
    /// `size` entries.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>, size: usize) -> Result<Self> {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        let mut charset = BTreeSet::new();
        for w in words {
            charset.extend(w.chars());
            *freq.entry(w).or_default() += 1;
        }
        let minimum = SPECIALS.len() + 2 * charset.len();
        if size < minimum {
            return Err(Error::VocabTooSmall { size, minimum });
        }
        let mut entries: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        entries.extend(charset.iter().map(|c| c.to_string()));
        entries.extend(charset.iter().map(|c| format!("{CONTINUATION}{c}")));
        let mut words: Vec<(&str, usize)> = freq.into_iter().filter(|(w, _)| w.chars().nth(1).is_some()).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let taken: BTreeSet<String> = entries.iter().cloned().collect();
        for (w, _) in words {
            if entries.len() >= size {
                break;
            }
            if !taken.contains(w) {
                entries.push(w.to_string());
            }
        }
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.lookup.get(piece).copied()
    }

    pub fn id_or_unk(&self, piece: &str) -> u32 {
        self.id(piece).unwrap_or(UNK_ID)
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.lookup.contains_key(piece)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Greedy longest-match-first split. If any position has no match the
    /// whole word becomes `[UNK]`.
    pub fn tokenize_word(&self, word: &str) -> Vec<String> {
        let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain([word.len()]).collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start + 1 < bounds.len() {
            let mut found = None;
            for end in (start + 1..bounds.len()).rev() {
                let sub = &word[bounds[start]..bounds[end]];
                let candidate = if start == 0 { sub.to_string() } else { format!("{CONTINUATION}{sub}") };
                if self.contains(&candidate) {
                    found = Some((end, candidate));
                    break;
                }
            }
            match found {
                Some((end, piece)) => {
                    pieces.push(piece);
                    start = end;
                }
                None => return alloc::vec![UNK.to_string()],
            }
        }
        pieces
    }
}

/// Vocabulary over the dataset's words plus any extra words (question text).
pub fn build_vocab(corpus: &Dataset, size: usize) -> Result<Vocab> {
    Vocab::build(corpus.sentences.iter().flat_map(|s| s.words()), size)
}

/// Subtokens of a word sequence with their word of origin.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubtokenAlignment {
    pub subtokens: Vec<String>,
    pub word_of: Vec<usize>,
    pub is_first: Vec<bool>,
    pub num_words: usize,
}

impl SubtokenAlignment {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>, vocab: &Vocab) -> Self {
        let mut out = Self::default();
        for (w, word) in words.into_iter().enumerate() {
            for (k, piece) in vocab.tokenize_word(word).into_iter().enumerate() {
                out.subtokens.push(piece);
                out.word_of.push(w);
                out.is_first.push(k == 0);
            }
            out.num_words = w + 1;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.subtokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtokens.is_empty()
    }

    /// Index of the first subtoken of every word.
    pub fn first_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_first[i]).collect()
    }
}

/// Projects word tags onto subtokens. The first subtoken of each word carries
/// the word's tag and mask; continuations copy the tag with the mask off.
pub fn align_labels(word_tags: &TagSequence, alignment: &SubtokenAlignment) -> Result<TagSequence> {
    if word_tags.len() != alignment.num_words || word_tags.loss_mask.len() != word_tags.len() {
        return Err(Error::LengthMismatch {
            what: "word tags vs aligned words",
            expected: alignment.num_words,
            got: word_tags.len(),
        });
    }
    let mut tags = Vec::with_capacity(alignment.len());
    let mut loss_mask = Vec::with_capacity(alignment.len());
    for (&w, &first) in alignment.word_of.iter().zip(&alignment.is_first) {
        tags.push(word_tags.tags[w].clone());
        loss_mask.push(first && word_tags.loss_mask[w]);
    }
    Ok(TagSequence { tags, loss_mask })
}

/// Word-level tags read back from the first subtoken of each word.
pub fn first_subtoken_tags(subtoken_tags: &[Tag], alignment: &SubtokenAlignment) -> Result<TagSequence> {
    if subtoken_tags.len() != alignment.len() {
        return Err(Error::LengthMismatch {
            what: "subtoken tags vs alignment",
            expected: alignment.len(),
            got: subtoken_tags.len(),
        });
    }
    let tags = alignment.first_positions().into_iter().map(|i| subtoken_tags[i].clone()).collect();
    Ok(TagSequence::from_tags(tags))
}
