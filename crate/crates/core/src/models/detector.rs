use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::encoder::{Encoder, EncoderConfig};
use super::input::{build_input, question_words, type_question, ModelInput, DETECTION_QUESTION};
use crate::corpus::{decode_tags, encode_tags, Dataset, Mention, Prefix, Sentence, Tag, TagSequence};
use crate::features::{CharFeature, CharFeatureConfig, PatternFeature, PatternFeatureConfig, SymbolTable};
use crate::nn::layers::Affine;
use crate::nn::{Graph, ParamStore, Scalar, Var};
use crate::subword::Vocab;
use crate::{Error, Result};

/// Output symbols of a tagging head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagSet {
    /// `O, B, I, E`.
    Untyped,
    /// `O`, then `B-t, I-t, E-t` for every type `t` in order: `3T + 1` symbols.
    Typed(Vec<String>),
}

impl TagSet {
    pub fn len(&self) -> usize {
        match self {
            TagSet::Untyped => 4,
            TagSet::Typed(types) => 3 * types.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn prefix_offset(p: Prefix) -> u32 {
        match p {
            Prefix::O => 0,
            Prefix::B => 1,
            Prefix::I => 2,
            Prefix::E => 3,
        }
    }

    pub fn id(&self, tag: &Tag) -> Result<u32> {
        if tag.is_outside() {
            return Ok(0);
        }
        let offset = Self::prefix_offset(tag.prefix);
        match (self, &tag.entity_type) {
            (TagSet::Untyped, _) => Ok(offset),
            (TagSet::Typed(types), Some(t)) => match types.iter().position(|x| x == t) {
                Some(i) => Ok(3 * i as u32 + offset),
                None => Err(Error::IllegalTag(format!("{tag}"))),
            },
            (TagSet::Typed(_), None) => Err(Error::IllegalTag(format!("{tag} (typed tag set)"))),
        }
    }

    pub fn tag(&self, id: u32) -> Tag {
        if id == 0 {
            return Tag::OUTSIDE;
        }
        let prefix = [Prefix::B, Prefix::I, Prefix::E][(id as usize - 1) % 3];
        match self {
            TagSet::Untyped => Tag::new(prefix, None),
            TagSet::Typed(types) => Tag::new(prefix, Some(types[(id as usize - 1) / 3].clone())),
        }
    }

    pub fn symbols(&self) -> Vec<String> {
        (0..self.len() as u32).map(|i| format!("{}", self.tag(i))).collect()
    }
}

/// What precedes the sentence in a detector input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Framing {
    /// One fixed question for every sentence.
    Question(String),
    /// One input per entity type asking about that type.
    PerType,
    /// No question: `[CLS] sentence [SEP]`.
    SeqTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub encoder: EncoderConfig,
    pub char_feature: Option<CharFeatureConfig>,
    pub pattern_feature: Option<PatternFeatureConfig>,
    pub framing: Framing,
    /// Typed `3T + 1` head instead of the entity-agnostic one.
    pub typed: bool,
}

impl DetectorConfig {
    /// Question-framed untyped detector with both features, widths tied to
    /// the encoder.
    pub fn new(encoder: EncoderConfig) -> Self {
        let h = encoder.hidden_dim;
        Self {
            char_feature: Some(CharFeatureConfig::scaled(h)),
            pattern_feature: Some(PatternFeatureConfig::scaled(h)),
            encoder,
            framing: Framing::Question(DETECTION_QUESTION.into()),
            typed: false,
        }
    }

    pub fn without_features(mut self) -> Self {
        self.char_feature = None;
        self.pattern_feature = None;
        self
    }

    pub fn head_input_dim(&self) -> usize {
        self.encoder.hidden_dim
            + self.char_feature.as_ref().map_or(0, |c| c.output_dim)
            + self.pattern_feature.as_ref().map_or(0, PatternFeatureConfig::output_dim)
    }
}

/// One training input with a target symbol per position; only positions in
/// the input's loss mask count.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionExample {
    pub input: ModelInput,
    pub targets: Vec<u32>,
}

/// Token tagger: encoder output, optionally concatenated with character and
/// pattern features, fed to an affine layer over the tag set.
#[derive(Debug, Clone)]
pub struct Detector {
    pub config: DetectorConfig,
    pub vocab: Vocab,
    pub types: Vec<String>,
    pub tagset: TagSet,
    pub store: ParamStore<f32>,
    encoder: Encoder,
    char_feature: Option<CharFeature>,
    pattern_feature: Option<PatternFeature>,
    head: Affine,
}

impl Detector {
    pub fn new(config: DetectorConfig, vocab: Vocab, types: Vec<String>, seed: u64) -> Result<Self> {
        if types.is_empty() && (config.typed || config.framing == Framing::PerType) {
            return Err(Error::Config("a typed or per-type detector needs at least one entity type".into()));
        }
        let mut store = ParamStore::new(seed);
        let encoder = Encoder::new(&mut store, "encoder", config.encoder.clone(), vocab.len())?;
        let char_feature = match &config.char_feature {
            Some(c) => Some(CharFeature::new(&mut store, "char", c.clone(), SymbolTable::characters(&vocab))?),
            None => None,
        };
        let pattern_feature = match &config.pattern_feature {
            Some(p) => Some(PatternFeature::new(&mut store, "pattern", p.clone(), SymbolTable::patterns(&vocab))?),
            None => None,
        };
        let tagset = if config.typed { TagSet::Typed(types.clone()) } else { TagSet::Untyped };
        let head = Affine::new(&mut store, "head", config.head_input_dim(), tagset.len())?;
        Ok(Self { config, vocab, types, tagset, store, encoder, char_feature, pattern_feature, head })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    /// Parameters of the character and pattern modules.
    pub fn feature_parameters(&self) -> usize {
        self.store.num_parameters_with_prefix("char.") + self.store.num_parameters_with_prefix("pattern.")
    }

    /// Encoder inputs needed per sentence.
    pub fn inputs_per_sentence(&self) -> usize {
        match self.config.framing {
            Framing::PerType => self.types.len(),
            _ => 1,
        }
    }

    /// Inputs for one sentence, each paired with the type it asks about
    /// under per-type framing.
    pub fn inputs(&self, sentence: &Sentence) -> Result<Vec<(Option<usize>, ModelInput)>> {
        let max = self.config.encoder.max_seq_len;
        match &self.config.framing {
            Framing::Question(q) => {
                Ok(alloc::vec![(None, build_input(sentence, Some(&question_words(q)), &self.vocab, max)?)])
            }
            Framing::SeqTag => Ok(alloc::vec![(None, build_input(sentence, None, &self.vocab, max)?)]),
            Framing::PerType => self
                .types
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Ok((Some(i), build_input(sentence, Some(&question_words(&type_question(t))), &self.vocab, max)?))
                })
                .collect(),
        }
    }

    /// Tag logits `[len, tags]` for the unpadded part of `input`.
    pub fn logits<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        input: &ModelInput,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let input = input.unpadded();
        let mut parts = alloc::vec![self.encoder.forward(g, &input.ids, &input.segments, None, rng)?];
        if let Some(c) = &self.char_feature {
            parts.push(c.forward(g, &input.subtokens)?);
        }
        if let Some(p) = &self.pattern_feature {
            parts.push(p.forward(g, &input.subtokens)?);
        }
        let x = if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts)? };
        self.head.forward(g, x)
    }

    /// Per-position distributions over the tag set.
    pub fn forward(&self, input: &ModelInput) -> Result<Vec<Vec<f32>>> {
        let mut g = Graph::new(&self.store);
        let logits = self.logits(&mut g, input, None)?;
        let probs = g.softmax(logits);
        Ok(g.value(probs).chunks(self.tagset.len()).map(<[f32]>::to_vec).collect())
    }

    /// Word-level tags: argmax at the first subtoken of each word, `O` for
    /// words lost to truncation.
    pub fn word_tags(&self, input: &ModelInput) -> Result<TagSequence> {
        let probs = self.forward(input)?;
        Ok(word_tags_from(&self.tagset, &probs, input))
    }

    /// Mentions found in `sentence`. Untyped unless the head is typed or
    /// framing is per type.
    pub fn detect_spans(&self, sentence: &Sentence) -> Result<Vec<Mention>> {
        Ok(self.detect_scored(sentence)?.into_iter().map(|(m, _)| m).collect())
    }

    /// As [`Detector::detect_spans`], each mention with the mean probability
    /// of its winning tags.
    pub fn detect_scored(&self, sentence: &Sentence) -> Result<Vec<(Mention, f32)>> {
        Ok(self.detect_counted(sentence)?.0)
    }

    /// As [`Detector::detect_scored`], plus the number of encoder inputs run.
    pub fn detect_counted(&self, sentence: &Sentence) -> Result<(Vec<(Mention, f32)>, usize)> {
        let mut candidates = Vec::new();
        let inputs = self.inputs(sentence)?;
        let runs = inputs.len();
        for (ty, input) in inputs {
            let probs = self.forward(&input)?;
            let tags = word_tags_from(&self.tagset, &probs, &input);
            for m in decode_tags(&tags) {
                let score = (m.start..=m.end)
                    .map(|w| input.word_positions.get(w).map_or(0.0, |&p| probs[p].iter().copied().fold(0.0, f32::max)))
                    .sum::<f32>()
                    / m.len() as f32;
                let (m, t) = match ty {
                    Some(t) => (Mention::typed(m.start, m.end, self.types[t].clone()), t),
                    None => (m, 0),
                };
                candidates.push(((m, t), score));
            }
        }
        let kept = resolve_overlaps(candidates.iter().map(|(c, _)| c.clone()).collect());
        let scored = kept
            .into_iter()
            .map(|m| {
                let score = candidates.iter().find(|((c, _), _)| *c == m).map_or(0.0, |(_, s)| *s);
                (m, score)
            })
            .collect();
        Ok((scored, runs))
    }

    /// Examples for one pass over `data`: per sentence, or per sentence and
    /// type under per-type framing.
    pub fn examples(&self, data: &Dataset) -> Result<Vec<DetectionExample>> {
        let mut out = Vec::with_capacity(data.len() * self.inputs_per_sentence());
        for s in &data.sentences {
            let gold = data.gold_of(s);
            for (ty, input) in self.inputs(s)? {
                let mentions: Vec<Mention> = match ty {
                    Some(t) => {
                        gold.iter().filter(|m| m.entity_type.as_deref() == Some(&self.types[t])).cloned().collect()
                    }
                    None => gold.to_vec(),
                };
                let tags = encode_tags(&mentions, s.len(), self.config.typed)?;
                let mut targets = alloc::vec![0; input.len()];
                for (w, &pos) in input.word_positions.iter().enumerate() {
                    targets[pos] = self.tagset.id(&tags.tags[w])?;
                }
                out.push(DetectionExample { input, targets });
            }
        }
        Ok(out)
    }

    /// Masked cross entropy of one example.
    pub fn loss<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ex: &DetectionExample,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let logits = self.logits(g, &ex.input, rng)?;
        let n = ex.input.real_len();
        g.cross_entropy(logits, &ex.targets[..n], &ex.input.loss_mask[..n])
    }
}

pub(crate) fn word_tags_from(tagset: &TagSet, probs: &[Vec<f32>], input: &ModelInput) -> TagSequence {
    let mut tags = alloc::vec![Tag::OUTSIDE; input.sentence_len];
    for (w, &pos) in input.word_positions.iter().enumerate() {
        tags[w] = tagset.tag(argmax(&probs[pos]) as u32);
    }
    TagSequence::from_tags(tags)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Keeps a non-overlapping subset of `(mention, type index)` candidates:
/// longer spans first, then leftmost, then lower type index. Output is sorted.
pub fn resolve_overlaps(mut candidates: Vec<(Mention, usize)>) -> Vec<Mention> {
    candidates.sort_by(|(a, ta), (b, tb)| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)).then(ta.cmp(tb)));
    let mut kept: Vec<Mention> = Vec::new();
    for (m, _) in candidates {
        if !kept.iter().any(|k| k.overlaps(&m)) {
            kept.push(m);
        }
    }
    kept.sort();
    kept
}
