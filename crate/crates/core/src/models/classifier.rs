use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::detector::argmax;
use super::encoder::{Encoder, EncoderConfig};
use super::input::{build_classification_input, ModelInput};
use crate::corpus::{Dataset, Mention, Sentence};
use crate::nn::layers::Affine;
use crate::nn::{Graph, ParamStore, Scalar, Var};
use crate::subword::Vocab;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierLoss {
    Dice { gamma: f64 },
    CrossEntropy,
}

impl Default for ClassifierLoss {
    fn default() -> Self {
        ClassifierLoss::Dice { gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub encoder: EncoderConfig,
    pub loss: ClassifierLoss,
}

/// One gold mention with its question input and type index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationExample {
    pub input: ModelInput,
    pub target: usize,
}

/// Types a span from the `[CLS]` output of a "What is <mention>?" input.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub vocab: Vocab,
    pub types: Vec<String>,
    pub store: ParamStore<f32>,
    encoder: Encoder,
    head: Affine,
}

impl Classifier {
    pub fn new(config: ClassifierConfig, vocab: Vocab, types: Vec<String>, seed: u64) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::Config("the classifier needs at least one entity type".into()));
        }
        let mut store = ParamStore::new(seed);
        let encoder = Encoder::new(&mut store, "encoder", config.encoder.clone(), vocab.len())?;
        let head = Affine::new(&mut store, "head", config.encoder.hidden_dim, types.len())?;
        Ok(Self { config, vocab, types, store, encoder, head })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    pub fn input(&self, sentence: &Sentence, span: &Mention) -> Result<ModelInput> {
        build_classification_input(sentence, span, &self.vocab, self.config.encoder.max_seq_len)
    }

    /// Type logits `[1, T]`.
    pub fn logits<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        input: &ModelInput,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let input = input.unpadded();
        let h = self.encoder.forward(g, &input.ids, &input.segments, None, rng)?;
        let pooled = g.slice_rows(h, 0, 1)?;
        self.head.forward(g, pooled)
    }

    pub fn distribution(&self, input: &ModelInput) -> Result<Vec<f32>> {
        let mut g = Graph::new(&self.store);
        let logits = self.logits(&mut g, input, None)?;
        let p = g.softmax(logits);
        Ok(g.value(p).to_vec())
    }

    /// Most probable type (lowest index on ties) and the full distribution.
    pub fn classify_span(&self, sentence: &Sentence, span: &Mention) -> Result<(String, Vec<f32>)> {
        let p = self.distribution(&self.input(sentence, span)?)?;
        Ok((self.types[argmax(&p)].clone(), p))
    }

    /// One example per gold mention.
    pub fn examples(&self, data: &Dataset) -> Result<Vec<ClassificationExample>> {
        let mut out = Vec::with_capacity(data.total_mentions());
        for s in &data.sentences {
            for m in data.gold_of(s) {
                let ty = m
                    .entity_type
                    .as_deref()
                    .ok_or_else(|| Error::Config(alloc::format!("untyped gold mention {m}")))?;
                let target = self.types.iter().position(|t| t == ty).ok_or_else(|| {
                    Error::Incompatible(alloc::format!("type `{ty}` is not in the classifier inventory"))
                })?;
                out.push(ClassificationExample { input: self.input(s, m)?, target });
            }
        }
        Ok(out)
    }

    pub fn loss<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ex: &ClassificationExample,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let logits = self.logits(g, &ex.input, rng)?;
        match self.config.loss {
            ClassifierLoss::CrossEntropy => g.cross_entropy(logits, &[ex.target as u32], &[true]),
            ClassifierLoss::Dice { gamma } => {
                let p = g.softmax(logits);
                let mut y = alloc::vec![T::zero(); self.types.len()];
                y[ex.target] = T::one();
                g.dice(p, &y, T::of(gamma))
            }
        }
    }
}
