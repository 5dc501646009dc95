//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys are rejected. Relative paths resolve against the
//! directory of the config file.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use splitner_core::models::{
    ClassifierConfig, ClassifierLoss, DetectorConfig, EncoderConfig, Framing, TrainConfig, Variant, DEFAULT_LR,
    DETECTION_QUESTION,
};
use splitner_core::nn::OptimizerConfig;
use splitner_core::pipeline::{SyntheticConfig, TypeSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    /// Detection question; may be empty.
    pub question_text: String,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub classifier_loss: LossKind,
    pub gamma: f64,
    pub char_feature: bool,
    pub pattern_feature: bool,
    pub layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    /// Existing vocabulary file; built from `train` when absent.
    pub vocab: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Predictions to score: JSON lines (`.jsonl`) or CoNLL.
    pub predictions: Option<PathBuf>,
    pub detector_checkpoint: Option<PathBuf>,
    pub classifier_checkpoint: Option<PathBuf>,
    pub benchmark_runs: usize,
    pub benchmark_variants: Vec<Variant>,
    pub synthetic_sentences: usize,
    pub synthetic_types: usize,
    pub synthetic_density: f64,
    pub synthetic_lexicon_seed: u64,
    pub synthetic_lexicon_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Dice,
    CrossEntropy,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::desk();
        Self {
            variant: Variant::SplitQaQa,
            question_text: DETECTION_QUESTION.to_string(),
            batch_size: 16,
            max_seq_len: enc.max_seq_len,
            epochs: 10,
            seed: 0,
            lr: DEFAULT_LR,
            classifier_loss: LossKind::Dice,
            gamma: 1.0,
            char_feature: true,
            pattern_feature: true,
            layers: enc.layers,
            heads: enc.heads,
            hidden_dim: enc.hidden_dim,
            ff_dim: enc.ff_dim,
            dropout: enc.dropout,
            vocab_size: 2000,
            vocab: None,
            train: None,
            test: None,
            predictions: None,
            detector_checkpoint: None,
            classifier_checkpoint: None,
            benchmark_runs: 10,
            benchmark_variants: vec![Variant::SplitQaQa, Variant::SingleQa, Variant::SingleSeqTag],
            synthetic_sentences: 200,
            synthetic_types: 4,
            synthetic_density: 1.5,
            synthetic_lexicon_seed: 0,
            synthetic_lexicon_size: 40,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got `{v}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_variants(key: &str, v: &str) -> Result<Vec<Variant>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Variant>().map_err(|e| Error::Config(format!("{key}: {e}"))))
        .collect()
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl RunConfig {
    /// Parses config text. Relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
            cfg.set(key, value, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let abs = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, abs.parent().unwrap_or(Path::new("/")))
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let path = |v: &str| if v.is_empty() { None } else { Some(base.join(v)) };
        match key {
            "variant" => self.variant = v.parse().map_err(|e| Error::Config(format!("variant: {e}")))?,
            "question_text" => self.question_text = v.to_string(),
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "max_seq_len" => self.max_seq_len = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "classifier_loss" => {
                self.classifier_loss = match v {
                    "dice" => LossKind::Dice,
                    "cross_entropy" => LossKind::CrossEntropy,
                    _ => {
                        return Err(Error::Config(format!(
                            "classifier_loss: expected dice or cross_entropy, got `{v}`"
                        )))
                    }
                }
            }
            "gamma" => self.gamma = parse_num(key, v)?,
            "char_feature" => self.char_feature = parse_bool(key, v)?,
            "pattern_feature" => self.pattern_feature = parse_bool(key, v)?,
            "layers" => self.layers = parse_num(key, v)?,
            "heads" => self.heads = parse_num(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_num(key, v)?,
            "ff_dim" => self.ff_dim = parse_num(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "vocab_size" => self.vocab_size = parse_num(key, v)?,
            "vocab" => self.vocab = path(v),
            "train" => self.train = path(v),
            "test" => self.test = path(v),
            "predictions" => self.predictions = path(v),
            "detector_checkpoint" => self.detector_checkpoint = path(v),
            "classifier_checkpoint" => self.classifier_checkpoint = path(v),
            "benchmark_runs" => self.benchmark_runs = parse_num(key, v)?,
            "benchmark_variants" => self.benchmark_variants = parse_variants(key, v)?,
            "synthetic_sentences" => self.synthetic_sentences = parse_num(key, v)?,
            "synthetic_types" => self.synthetic_types = parse_num(key, v)?,
            "synthetic_density" => self.synthetic_density = parse_num(key, v)?,
            "synthetic_lexicon_seed" => self.synthetic_lexicon_seed = parse_num(key, v)?,
            "synthetic_lexicon_size" => self.synthetic_lexicon_size = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(1..=6).contains(&self.synthetic_types) {
            return Err(Error::Config(format!("synthetic_types must be in 1..=6, got {}", self.synthetic_types)));
        }
        Ok(())
    }

    /// Canonical text: every key, in a fixed order, with absolute paths.
    pub fn to_text(&self) -> String {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let variants: Vec<&str> = self.benchmark_variants.iter().map(|v| v.name()).collect();
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("variant", self.variant.name().into());
        put("question_text", self.question_text.clone());
        put("batch_size", self.batch_size.to_string());
        put("max_seq_len", self.max_seq_len.to_string());
        put("epochs", self.epochs.to_string());
        put("seed", self.seed.to_string());
        put("lr", self.lr.to_string());
        put(
            "classifier_loss",
            match self.classifier_loss {
                LossKind::Dice => "dice",
                LossKind::CrossEntropy => "cross_entropy",
            }
            .into(),
        );
        put("gamma", self.gamma.to_string());
        put("char_feature", on_off(self.char_feature).into());
        put("pattern_feature", on_off(self.pattern_feature).into());
        put("layers", self.layers.to_string());
        put("heads", self.heads.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("ff_dim", self.ff_dim.to_string());
        put("dropout", self.dropout.to_string());
        put("vocab_size", self.vocab_size.to_string());
        put("vocab", p(&self.vocab));
        put("train", p(&self.train));
        put("test", p(&self.test));
        put("predictions", p(&self.predictions));
        put("detector_checkpoint", p(&self.detector_checkpoint));
        put("classifier_checkpoint", p(&self.classifier_checkpoint));
        put("benchmark_runs", self.benchmark_runs.to_string());
        put("benchmark_variants", variants.join(","));
        put("synthetic_sentences", self.synthetic_sentences.to_string());
        put("synthetic_types", self.synthetic_types.to_string());
        put("synthetic_density", self.synthetic_density.to_string());
        put("synthetic_lexicon_seed", self.synthetic_lexicon_seed.to_string());
        put("synthetic_lexicon_size", self.synthetic_lexicon_size.to_string());
        out
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            heads: self.heads,
            hidden_dim: self.hidden_dim,
            ff_dim: self.ff_dim,
            max_seq_len: self.max_seq_len,
            dropout: self.dropout,
        }
    }

    /// Detector configuration for `variant`, honouring the feature switches
    /// and question text.
    pub fn detector(&self, variant: Variant) -> DetectorConfig {
        let mut base = DetectorConfig::new(self.encoder());
        base.framing = Framing::Question(self.question_text.clone());
        let mut cfg = variant.detector_config(&base);
        if !self.char_feature {
            cfg.char_feature = None;
        }
        if !self.pattern_feature {
            cfg.pattern_feature = None;
        }
        cfg
    }

    pub fn classifier(&self) -> ClassifierConfig {
        let loss = match self.classifier_loss {
            LossKind::Dice => ClassifierLoss::Dice { gamma: self.gamma },
            LossKind::CrossEntropy => ClassifierLoss::CrossEntropy,
        };
        ClassifierConfig { encoder: self.encoder(), loss }
    }

    /// Training settings; `offset` separates the detector and classifier
    /// shuffles.
    pub fn training(&self, offset: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            optimizer: OptimizerConfig::adam(self.lr),
            seed: self.seed.wrapping_add(offset),
        }
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            sentences: self.synthetic_sentences,
            spec: TypeSpec::first(self.synthetic_types),
            density: self.synthetic_density,
            lexicon_seed: self.synthetic_lexicon_seed,
            lexicon_size: self.synthetic_lexicon_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_setup() {
        let c = RunConfig::default();
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.max_seq_len, 256);
        assert_eq!(c.classifier_loss, LossKind::Dice);
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.question_text, DETECTION_QUESTION);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("seed = 3\nfoo = 1\n", Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "variant = single_qa\nquestion_text =\nchar_feature = off\ntrain = data/train.conll\nseed = 9\n";
        let c = RunConfig::parse(text, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.variant, Variant::SingleQa);
        assert!(c.question_text.is_empty());
        assert!(!c.char_feature);
        assert_eq!(c.train.as_deref(), Some(Path::new("/tmp/x/data/train.conll")));
        assert_eq!(RunConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap(), c);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in ["heads = 3", "lr = -1", "char_feature = maybe", "variant = nope", "seed", "seed = 1\nseed = 2"] {
            assert!(RunConfig::parse(text, Path::new(".")).is_err(), "{text}");
        }
    }
}
