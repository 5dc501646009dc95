//! Command implementations behind the `splitner` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use splitner_core::corpus::Dataset;
use splitner_core::features::pattern_of;
use splitner_core::models::{model_vocab, Classifier, Detector, Trainer};
use splitner_core::pipeline::{generate_synthetic_corpus, micro_f1, Counts, EvalReport, Mode, System};
use splitner_core::subword::Vocab;

use crate::bench::{benchmark, timed_epoch};
use crate::config::RunConfig;
use crate::infer::{run_parallel, worker_count};
use crate::io::{
    load_classifier, load_detector, prediction_records, read_conll, read_predicted_mentions, read_vocab,
    save_classifier, save_detector, write_conll, write_predictions, write_text, write_vocab, Metadata, ModelKind,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "splitner", version, about = "Two-step span detection and classification NER")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (flat key = value file).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the span detector (or a single-model baseline) on `train`.
    TrainDetector(Common),
    /// Train the span classifier on the gold mentions of `train`.
    TrainClassifier(Common),
    /// Tag `test` and write predictions.jsonl.
    Predict(Common),
    /// Score `predictions` against the gold mentions of `test`.
    Evaluate(Common),
    /// Time training and inference of `benchmark_variants`.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Overrides `benchmark_runs`.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Dump word patterns and subword tokenizations.
    Featurize(Common),
    /// Write a synthetic CoNLL corpus.
    GenSynthetic(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainDetector(_) => "train-detector",
            Command::TrainClassifier(_) => "train-classifier",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Benchmark { .. } => "benchmark",
            Command::Featurize(_) => "featurize",
            Command::GenSynthetic(_) => "gen-synthetic",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::TrainDetector(c)
            | Command::TrainClassifier(c)
            | Command::Predict(c)
            | Command::Evaluate(c)
            | Command::Featurize(c)
            | Command::GenSynthetic(c)
            | Command::Benchmark { common: c, .. } => c,
        }
    }
}

/// Loaded configuration and absolute output directory of one command.
struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn prepare(command: &Command) -> Result<Run> {
    let common = command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Command::Benchmark { runs: Some(r), .. } = command {
        cfg.benchmark_runs = *r;
    }
    let out = std::path::absolute(&common.out).map_err(|e| Error::io(&common.out, e))?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_text(&out.join(format!("{}.conf", command.name())), &cfg.to_text())?;
    Ok(Run { cfg, out })
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))
}

/// Runs one command and returns its human-readable report.
pub fn execute(cli: &Cli) -> Result<String> {
    let run = prepare(&cli.command)?;
    match &cli.command {
        Command::TrainDetector(_) => train_detector(&run),
        Command::TrainClassifier(_) => train_classifier(&run),
        Command::Predict(_) => predict(&run),
        Command::Evaluate(_) => evaluate(&run),
        Command::Benchmark { .. } => bench(&run),
        Command::Featurize(_) => featurize(&run),
        Command::GenSynthetic(_) => gen_synthetic(&run),
    }
}

/// The configured vocabulary, or one built from the training data and
/// written next to the outputs.
fn vocabulary(run: &Run, train: &Dataset) -> Result<(Vocab, PathBuf)> {
    match &run.cfg.vocab {
        Some(p) => Ok((read_vocab(p)?, p.clone())),
        None => {
            let v = model_vocab(train, run.cfg.vocab_size, &[&run.cfg.question_text])?;
            let p = run.path("vocab.txt");
            write_vocab(&p, &v)?;
            Ok((v, p))
        }
    }
}

fn train_detector(run: &Run) -> Result<String> {
    let cfg = &run.cfg;
    let train = read_conll(required(&cfg.train, "train")?)?;
    let (vocab, vocab_path) = vocabulary(run, &train)?;
    let types = train.type_inventory.clone();
    let mut model = Detector::new(cfg.detector(cfg.variant), vocab, types.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(cfg.training(0));
    let mut log = String::new();
    let mut report = String::new();
    for _ in 0..cfg.epochs {
        let (stats, secs) = timed_epoch(&mut trainer, &mut model, &train)?;
        let _ = writeln!(log, "{}\t{:.8}\t{}", stats.epoch, stats.mean_loss, stats.samples);
        let _ = writeln!(
            report,
            "epoch {} loss {:.6} samples {} ({secs:.2}s)",
            stats.epoch, stats.mean_loss, stats.samples
        );
    }
    let ckpt = run.path("detector.ckpt");
    let meta =
        Metadata { kind: ModelKind::Detector, variant: cfg.variant, vocab: vocab_path, types, config: cfg.clone() };
    save_detector(&ckpt, &model, &meta)?;
    write_text(&run.path("detector.loss.log"), &log)?;
    let _ = writeln!(report, "wrote {}", ckpt.display());
    Ok(report)
}

fn train_classifier(run: &Run) -> Result<String> {
    let cfg = &run.cfg;
    if !cfg.variant.is_split() {
        return Err(Error::Config(format!("variant {} has no span classifier", cfg.variant)));
    }
    let train = read_conll(required(&cfg.train, "train")?)?;
    let (vocab, vocab_path) = vocabulary(run, &train)?;
    let types = train.type_inventory.clone();
    let mut model = Classifier::new(cfg.classifier(), vocab, types.clone(), cfg.seed.wrapping_add(1))?;
    let mut trainer = Trainer::new(cfg.training(1));
    let mut log = String::new();
    let mut report = String::new();
    for _ in 0..cfg.epochs {
        let (stats, secs) = timed_epoch(&mut trainer, &mut model, &train)?;
        let _ = writeln!(log, "{}\t{:.8}\t{}", stats.epoch, stats.mean_loss, stats.samples);
        let _ = writeln!(
            report,
            "epoch {} loss {:.6} samples {} ({secs:.2}s)",
            stats.epoch, stats.mean_loss, stats.samples
        );
    }
    let ckpt = run.path("classifier.ckpt");
    let mut meta_cfg = cfg.clone();
    meta_cfg.seed = cfg.seed.wrapping_add(1);
    let meta =
        Metadata { kind: ModelKind::Classifier, variant: cfg.variant, vocab: vocab_path, types, config: meta_cfg };
    save_classifier(&ckpt, &model, &meta)?;
    write_text(&run.path("classifier.loss.log"), &log)?;
    let _ = writeln!(report, "wrote {}", ckpt.display());
    Ok(report)
}

fn load_system(run: &Run) -> Result<System> {
    let det_path = run.cfg.detector_checkpoint.clone().unwrap_or_else(|| run.path("detector.ckpt"));
    let (detector, meta) = load_detector(&det_path)?;
    if meta.variant.is_split() {
        let cls_path = run.cfg.classifier_checkpoint.clone().unwrap_or_else(|| run.path("classifier.ckpt"));
        let (classifier, _) = load_classifier(&cls_path)?;
        Ok(System::split(detector, classifier)?)
    } else {
        Ok(System::single(detector)?)
    }
}

fn predict(run: &Run) -> Result<String> {
    let test = read_conll(required(&run.cfg.test, "test")?)?;
    let system = load_system(run)?;
    let out = run_parallel(&system, &test.sentences, worker_count(test.len()))?;
    let path = run.path("predictions.jsonl");
    write_predictions(&path, &prediction_records(&test.sentences, &out))?;
    let found: usize = out.mentions.iter().map(Vec::len).sum();
    Ok(format!(
        "{} sentences, {found} mentions, {} encoder inputs\nwrote {}\n",
        test.len(),
        out.encoder_inputs,
        path.display()
    ))
}

#[derive(Serialize)]
struct CountsJson {
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    precision: f64,
    recall: f64,
    f1: f64,
}

impl From<&Counts> for CountsJson {
    fn from(c: &Counts) -> Self {
        Self { tp: c.tp, fp: c.fp, fn_: c.fn_, precision: c.precision(), recall: c.recall(), f1: c.f1() }
    }
}

#[derive(Serialize)]
struct ReportJson {
    mode: &'static str,
    precision: f64,
    recall: f64,
    f1: f64,
    counts: CountsJson,
    per_type: std::collections::BTreeMap<String, CountsJson>,
}

fn report_json(r: &EvalReport) -> ReportJson {
    ReportJson {
        mode: match r.mode {
            Mode::Typed => "typed",
            Mode::Untyped => "untyped",
        },
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        counts: (&r.counts).into(),
        per_type: r.per_type.iter().map(|(k, c)| (k.clone(), c.into())).collect(),
    }
}

/// Table of typed and untyped scores with a per-type breakdown.
pub fn eval_table(typed: &EvalReport, untyped: &EvalReport) -> String {
    let mut out = format!("{:<10} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}\n", "", "P", "R", "F1", "TP", "FP", "FN");
    let mut row = |name: &str, p: f64, r: f64, f: f64, c: &Counts| {
        let _ = writeln!(out, "{name:<10} {p:>8.3} {r:>8.3} {f:>8.3} {:>6} {:>6} {:>6}", c.tp, c.fp, c.fn_);
    };
    row("typed", typed.precision, typed.recall, typed.f1, &typed.counts);
    row("untyped", untyped.precision, untyped.recall, untyped.f1, &untyped.counts);
    for (t, c) in &typed.per_type {
        row(t, c.precision(), c.recall(), c.f1(), c);
    }
    out.push_str(&format!("F1={:.3}\n", typed.f1));
    out
}

fn evaluate(run: &Run) -> Result<String> {
    let gold = read_conll(required(&run.cfg.test, "test")?)?;
    let pred_path = run.cfg.predictions.clone().unwrap_or_else(|| run.path("predictions.jsonl"));
    let pred = read_predicted_mentions(&pred_path, &gold)?;
    let gold_lists = gold.gold_lists();
    let typed = micro_f1(&gold_lists, &pred, Mode::Typed);
    let untyped = micro_f1(&gold_lists, &pred, Mode::Untyped);
    let json = serde_json::json!({ "typed": report_json(&typed), "untyped": report_json(&untyped) });
    write_text(&run.path("eval.json"), &format!("{}\n", serde_json::to_string_pretty(&json).expect("serializable")))?;
    Ok(eval_table(&typed, &untyped))
}

fn bench(run: &Run) -> Result<String> {
    let cfg = &run.cfg;
    let train = read_conll(required(&cfg.train, "train")?)?;
    let test = read_conll(required(&cfg.test, "test")?)?;
    let report = benchmark(&cfg.benchmark_variants, &train, &test, cfg, cfg.benchmark_runs)?;
    let text = serde_json::to_string_pretty(&report).expect("serializable");
    write_text(&run.path("bench.json"), &format!("{text}\n"))?;
    Ok(report.to_table())
}

fn featurize(run: &Run) -> Result<String> {
    let cfg = &run.cfg;
    let src = cfg
        .test
        .as_deref()
        .or(cfg.train.as_deref())
        .ok_or_else(|| Error::Config("`test` or `train` is required".into()))?;
    let data = read_conll(src)?;
    let vocab = match &cfg.vocab {
        Some(p) => read_vocab(p)?,
        None => model_vocab(&data, cfg.vocab_size, &[&cfg.question_text])?,
    };
    let mut out = String::new();
    for s in &data.sentences {
        for w in s.words() {
            let _ = writeln!(out, "{w}\t{}\t{}", pattern_of(w), vocab.tokenize_word(w).join(" "));
        }
        out.push('\n');
    }
    let path = run.path("features.tsv");
    write_text(&path, &out)?;
    Ok(format!("{} sentences\nwrote {}\n", data.len(), path.display()))
}

fn gen_synthetic(run: &Run) -> Result<String> {
    let data = generate_synthetic_corpus(&run.cfg.synthetic())?;
    let path = run.path("synthetic.conll");
    write_conll(&path, &data)?;
    Ok(format!(
        "{} sentences, {} mentions, types {}\nwrote {}\n",
        data.len(),
        data.total_mentions(),
        data.type_inventory.join(","),
        path.display()
    ))
}
