//! Model variants: question-framed and sequence-tagging detectors, the span
//! classifier, and the single-model baselines.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::corpus::Dataset;
use crate::subword::Vocab;
use crate::{Error, Result};

mod classifier;
mod detector;
mod encoder;
mod input;
mod train;

pub use classifier::{ClassificationExample, Classifier, ClassifierConfig, ClassifierLoss};
pub use detector::{argmax, resolve_overlaps, DetectionExample, Detector, DetectorConfig, Framing, TagSet};
pub use encoder::{Encoder, EncoderConfig};
pub use input::{
    build_classification_input, build_detection_input, build_input, classification_question, pad_batch, question_words,
    type_question, ModelInput, DETECTION_QUESTION, QUESTION_VARIANTS,
};
pub use train::{EpochStats, TrainConfig, Trainable, Trainer, DEFAULT_LR};

/// The compared systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Question-framed detector with features, question-framed classifier.
    SplitQaQa,
    /// As `SplitQaQa` without character and pattern features.
    SplitQaNoCharPatternQa,
    /// Sequence-tagging detector, question-framed classifier.
    SplitSeqTagQa,
    /// One untyped tagger queried once per entity type.
    SingleQa,
    /// One typed tagger.
    SingleSeqTag,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SplitQaQa,
        Variant::SplitQaNoCharPatternQa,
        Variant::SplitSeqTagQa,
        Variant::SingleQa,
        Variant::SingleSeqTag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SplitQaQa => "split_qa_qa",
            Variant::SplitQaNoCharPatternQa => "split_qa_nocharpattern_qa",
            Variant::SplitSeqTagQa => "split_seqtag_qa",
            Variant::SingleQa => "single_qa",
            Variant::SingleSeqTag => "single_seqtag",
        }
    }

    pub fn is_split(self) -> bool {
        matches!(self, Variant::SplitQaQa | Variant::SplitQaNoCharPatternQa | Variant::SplitSeqTagQa)
    }

    /// Detector configuration of this variant around a base configuration.
    /// The base supplies the encoder, feature widths and detection question.
    pub fn detector_config(self, base: &DetectorConfig) -> DetectorConfig {
        let mut cfg = base.clone();
        cfg.typed = false;
        match self {
            Variant::SplitQaQa => {}
            Variant::SplitQaNoCharPatternQa => cfg = cfg.without_features(),
            Variant::SplitSeqTagQa => cfg.framing = Framing::SeqTag,
            Variant::SingleQa => cfg.framing = Framing::PerType,
            Variant::SingleSeqTag => {
                cfg.framing = Framing::SeqTag;
                cfg.typed = true;
            }
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown variant `{s}`")))
    }
}

/// Vocabulary over the corpus words plus every question any variant may ask,
/// so that vocabularies agree across variants and question ablations.
pub fn model_vocab(data: &Dataset, size: usize, extra_questions: &[&str]) -> Result<Vocab> {
    let mut question_text: Vec<String> = QUESTION_VARIANTS.iter().map(|q| String::from(*q)).collect();
    question_text.push(classification_question(""));
    question_text.extend(data.type_inventory.iter().map(|t| type_question(t)));
    question_text.extend(extra_questions.iter().map(|q| String::from(*q)));
    let q_words: Vec<String> = question_text.iter().flat_map(|q| question_words(q)).collect();
    let words = data.sentences.iter().flat_map(|s| s.words()).chain(q_words.iter().map(String::as_str));
    Vocab::build(words, size)
}
