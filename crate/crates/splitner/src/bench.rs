//! Wall-clock training and inference timing per variant, with exact
//! encoder-input counts.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use splitner_core::corpus::Dataset;
use splitner_core::models::{model_vocab, Classifier, Detector, EpochStats, Trainable, Trainer, Variant};
use splitner_core::pipeline::System;
use splitner_core::subword::Vocab;

use crate::config::RunConfig;
use crate::{Error, Result};

/// One training epoch and its wall time in seconds.
pub fn timed_epoch<M: Trainable>(trainer: &mut Trainer, model: &mut M, data: &Dataset) -> Result<(EpochStats, f64)> {
    let start = Instant::now();
    let stats = trainer.epoch(model, data)?;
    Ok((stats, start.elapsed().as_secs_f64()))
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantBench {
    pub variant: String,
    pub runs: usize,
    /// Detection plus classification for split variants.
    pub train_seconds_per_epoch: f64,
    pub train_seconds_std: f64,
    pub train_inputs_per_epoch: usize,
    pub inference_seconds: f64,
    pub inference_seconds_std: f64,
    pub encoder_input_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub types: usize,
    pub variants: Vec<VariantBench>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "train sentences {}, test sentences {}, types {}\n{:<28} {:>5} {:>16} {:>12} {:>16} {:>12}\n",
            self.train_sentences,
            self.test_sentences,
            self.types,
            "variant",
            "runs",
            "train s/epoch",
            "train inputs",
            "inference s",
            "inf inputs"
        );
        for v in &self.variants {
            let _ = writeln!(
                out,
                "{:<28} {:>5} {:>9.3}±{:<6.3} {:>12} {:>9.3}±{:<6.3} {:>12}",
                v.variant,
                v.runs,
                v.train_seconds_per_epoch,
                v.train_seconds_std,
                v.train_inputs_per_epoch,
                v.inference_seconds,
                v.inference_seconds_std,
                v.encoder_input_count
            );
        }
        out
    }
}

fn build(variant: Variant, cfg: &RunConfig, vocab: &Vocab, types: &[String]) -> Result<(Detector, Option<Classifier>)> {
    let d = Detector::new(cfg.detector(variant), vocab.clone(), types.to_vec(), cfg.seed)?;
    let c = if variant.is_split() {
        Some(Classifier::new(cfg.classifier(), vocab.clone(), types.to_vec(), cfg.seed.wrapping_add(1))?)
    } else {
        None
    };
    Ok((d, c))
}

/// Times each variant `runs` times from a fresh initialization: one training
/// epoch on `train`, then single-worker inference over `test`.
pub fn benchmark(
    variants: &[Variant],
    train: &Dataset,
    test: &Dataset,
    cfg: &RunConfig,
    runs: usize,
) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::Config("benchmark needs at least one run".into()));
    }
    let vocab = model_vocab(train, cfg.vocab_size, &[&cfg.question_text])?;
    let types = train.type_inventory.clone();
    let mut report = BenchReport {
        train_sentences: train.len(),
        test_sentences: test.len(),
        types: types.len(),
        variants: Vec::new(),
    };
    for &variant in variants {
        let (mut train_times, mut infer_times) = (Vec::new(), Vec::new());
        let (mut train_inputs, mut counted) = (None, None);
        for _ in 0..runs {
            let (mut d, mut c) = build(variant, cfg, &vocab, &types)?;
            let (ds, dt) = timed_epoch(&mut Trainer::new(cfg.training(0)), &mut d, train)?;
            let mut seconds = dt;
            let mut inputs = ds.samples;
            if let Some(c) = c.as_mut() {
                let (cs, ct) = timed_epoch(&mut Trainer::new(cfg.training(1)), c, train)?;
                seconds += ct;
                inputs += cs.samples;
            }
            train_times.push(seconds);
            let system = match c {
                Some(c) => System::split(d, c)?,
                None => System::single(d)?,
            };
            let start = Instant::now();
            let out = system.run(&test.sentences)?;
            infer_times.push(start.elapsed().as_secs_f64());
            for (slot, value) in [(&mut train_inputs, inputs), (&mut counted, out.encoder_inputs)] {
                if slot.is_some_and(|v| v != value) {
                    return Err(Error::Mismatch(format!("{variant}: input counts differ between runs")));
                }
                *slot = Some(value);
            }
        }
        let (tm, ts) = mean_std(&train_times);
        let (im, is) = mean_std(&infer_times);
        report.variants.push(VariantBench {
            variant: variant.name().to_string(),
            runs,
            train_seconds_per_epoch: tm,
            train_seconds_std: ts,
            train_inputs_per_epoch: train_inputs.unwrap_or(0),
            inference_seconds: im,
            inference_seconds_std: is,
            encoder_input_count: counted.unwrap_or(0),
        });
    }
    Ok(report)
}
