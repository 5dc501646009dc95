//! File formats: CoNLL corpora, vocabularies, checkpoints with their
//! metadata sidecars, and JSON-lines predictions.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splitner_core::corpus::{parse_conll, to_conll, Dataset, Mention, Sentence};
use splitner_core::models::{Classifier, Detector, Variant};
use splitner_core::nn::save_checkpoint;
use splitner_core::pipeline::PipelineOutput;
use splitner_core::subword::Vocab;

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, e: splitner_core::Error) -> Error {
    match e {
        splitner_core::Error::Parse { line, message } => Error::Format { path: path.to_path_buf(), line, message },
        other => Error::Mismatch(format!("{}: {other}", path.display())),
    }
}

pub fn read_conll(path: &Path) -> Result<Dataset> {
    parse_conll(&read_text(path)?).map_err(|e| format_err(path, e))
}

pub fn write_conll(path: &Path, data: &Dataset) -> Result<()> {
    write_text(path, &to_conll(data)?)
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    Vocab::from_text(&read_text(path)?).map_err(|e| format_err(path, e))
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    write_text(path, &vocab.to_text())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Detector,
    Classifier,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Detector => "detector",
            ModelKind::Classifier => "classifier",
        }
    }
}

/// Sidecar of a checkpoint: enough to rebuild the model before its
/// parameters are restored.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub kind: ModelKind,
    pub variant: Variant,
    pub vocab: PathBuf,
    pub types: Vec<String>,
    pub config: RunConfig,
}

const META_KEYS: [&str; 4] = ["kind", "variant", "vocab", "types"];

impl Metadata {
    pub fn to_text(&self) -> String {
        format!(
            "kind = {}\nvariant = {}\nvocab = {}\ntypes = {}\n{}",
            self.kind.name(),
            self.variant.name(),
            self.vocab.display(),
            self.types.join(","),
            self.config
                .to_text()
                .lines()
                .filter(|l| !l.starts_with("variant "))
                .map(|l| format!("config.{l}\n"))
                .collect::<String>()
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut fields = BTreeMap::new();
        let mut config = String::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Mismatch(format!("{}: malformed line `{line}`", path.display())))?;
            let k = k.trim();
            if let Some(key) = k.strip_prefix("config.") {
                config.push_str(&format!("{key} = {}\n", v.trim()));
            } else if META_KEYS.contains(&k) {
                fields.insert(k, v.trim().to_string());
            } else {
                return Err(Error::Mismatch(format!("{}: unknown metadata key `{k}`", path.display())));
            }
        }
        let get = |k: &str| {
            fields.get(k).cloned().ok_or_else(|| Error::Mismatch(format!("{}: missing `{k}`", path.display())))
        };
        let kind = match get("kind")?.as_str() {
            "detector" => ModelKind::Detector,
            "classifier" => ModelKind::Classifier,
            other => return Err(Error::Mismatch(format!("{}: unknown model kind `{other}`", path.display()))),
        };
        let variant: Variant = get("variant")?.parse()?;
        let mut config = RunConfig::parse(&config, Path::new("/"))?;
        config.variant = variant;
        let types = get("types")?.split(',').filter(|t| !t.is_empty()).map(String::from).collect();
        Ok(Self { kind, variant, vocab: PathBuf::from(get("vocab")?), types, config })
    }
}

/// Sidecar path of a checkpoint: `model.ckpt` → `model.meta`.
pub fn metadata_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("meta")
}

fn check_types(types: &[String]) -> Result<()> {
    match types.iter().find(|t| t.contains(',')) {
        Some(t) => Err(Error::Mismatch(format!("entity type `{t}` contains a comma"))),
        None => Ok(()),
    }
}

pub fn save_detector(path: &Path, detector: &Detector, meta: &Metadata) -> Result<()> {
    check_types(&detector.types)?;
    write_bytes(path, &save_checkpoint(&detector.store))?;
    write_text(&metadata_path(path), &meta.to_text())
}

pub fn save_classifier(path: &Path, classifier: &Classifier, meta: &Metadata) -> Result<()> {
    check_types(&classifier.types)?;
    write_bytes(path, &save_checkpoint(&classifier.store))?;
    write_text(&metadata_path(path), &meta.to_text())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_model(path: &Path, want: ModelKind) -> Result<(Metadata, Vocab, Vec<u8>)> {
    let meta_path = metadata_path(path);
    let meta = Metadata::parse(&read_text(&meta_path)?, &meta_path)?;
    if meta.kind != want {
        return Err(Error::Mismatch(format!(
            "{} holds a {}, expected a {}",
            path.display(),
            meta.kind.name(),
            want.name()
        )));
    }
    let vocab = read_vocab(&meta.vocab)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((meta, vocab, bytes))
}

/// Rebuilds a detector from its metadata and restores its parameters.
pub fn load_detector(path: &Path) -> Result<(Detector, Metadata)> {
    let (meta, vocab, bytes) = read_model(path, ModelKind::Detector)?;
    let cfg = meta.config.detector(meta.variant);
    let mut d = Detector::new(cfg, vocab, meta.types.clone(), meta.config.seed)?;
    d.store.restore(&bytes).map_err(|e| Error::Mismatch(format!("{}: {e}", path.display())))?;
    Ok((d, meta))
}

pub fn load_classifier(path: &Path) -> Result<(Classifier, Metadata)> {
    let (meta, vocab, bytes) = read_model(path, ModelKind::Classifier)?;
    let mut c = Classifier::new(meta.config.classifier(), vocab, meta.types.clone(), meta.config.seed)?;
    c.store.restore(&bytes).map_err(|e| Error::Mismatch(format!("{}: {e}", path.display())))?;
    Ok((c, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<MentionRecord>,
}

pub fn prediction_records(sentences: &[Sentence], output: &PipelineOutput) -> Vec<PredictionRecord> {
    sentences
        .iter()
        .zip(&output.mentions)
        .map(|(s, ms)| PredictionRecord {
            id: s.id.clone(),
            tokens: s.words().map(String::from).collect(),
            mentions: ms
                .iter()
                .map(|m| MentionRecord {
                    start: m.mention.start,
                    end: m.mention.end,
                    entity_type: m.mention.entity_type.clone().unwrap_or_default(),
                    score: m.score,
                })
                .collect(),
        })
        .collect()
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Predicted mentions aligned with `gold`'s sentences. JSON-lines files
/// match by sentence id; CoNLL files match by position.
pub fn read_predicted_mentions(path: &Path, gold: &Dataset) -> Result<Vec<Vec<Mention>>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut by_id: BTreeMap<String, Vec<Mention>> = BTreeMap::new();
        for r in read_predictions(path)? {
            let ms = r.mentions.into_iter().map(|m| Mention::typed(m.start, m.end, m.entity_type)).collect();
            if by_id.insert(r.id.clone(), ms).is_some() {
                return Err(Error::Mismatch(format!("{}: duplicate sentence id `{}`", path.display(), r.id)));
            }
        }
        let out = gold.sentences.iter().map(|s| by_id.remove(&s.id).unwrap_or_default()).collect();
        if let Some(id) = by_id.keys().next() {
            return Err(Error::Mismatch(format!("{}: sentence id `{id}` is not in the gold data", path.display())));
        }
        Ok(out)
    } else {
        let pred = read_conll(path)?;
        if pred.len() != gold.len() {
            return Err(Error::Mismatch(format!(
                "{}: {} sentences, gold has {}",
                path.display(),
                pred.len(),
                gold.len()
            )));
        }
        Ok(pred.gold_lists())
    }
}
