use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Mention, Sentence};
use crate::models::{Classifier, Detector, Framing};
use crate::subword::Vocab;
use crate::{Error, Result};

/// A predicted mention with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMention {
    pub mention: Mention,
    pub score: f32,
}

/// Typed predictions for a batch of sentences plus the number of encoder
/// inputs spent producing them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    pub mentions: Vec<Vec<ScoredMention>>,
    pub encoder_inputs: usize,
}

impl PipelineOutput {
    pub fn plain(&self) -> Vec<Vec<Mention>> {
        self.mentions.iter().map(|ms| ms.iter().map(|s| s.mention.clone()).collect()).collect()
    }
}

/// A complete typed NER system.
#[derive(Debug, Clone)]
pub enum System {
    /// Untyped detector followed by the span classifier.
    Split { detector: Detector, classifier: Classifier },
    /// A detector that emits typed mentions by itself.
    Single(Detector),
}

impl System {
    pub fn split(detector: Detector, classifier: Classifier) -> Result<Self> {
        check_compatible(&detector, &classifier)?;
        if detector.config.typed || detector.config.framing == Framing::PerType {
            return Err(Error::Incompatible("a split system needs an untyped, single-input detector".into()));
        }
        Ok(System::Split { detector, classifier })
    }

    pub fn single(detector: Detector) -> Result<Self> {
        if !detector.config.typed && detector.config.framing != Framing::PerType {
            return Err(Error::Incompatible("a single-model system needs a typed or per-type detector".into()));
        }
        Ok(System::Single(detector))
    }

    pub fn detector(&self) -> &Detector {
        match self {
            System::Split { detector, .. } | System::Single(detector) => detector,
        }
    }

    pub fn types(&self) -> &[String] {
        &self.detector().types
    }

    /// Typed mentions of one sentence and the encoder inputs used.
    pub fn predict(&self, sentence: &Sentence) -> Result<(Vec<ScoredMention>, usize)> {
        match self {
            System::Split { detector, classifier } => {
                let (spans, mut inputs) = detector.detect_counted(sentence)?;
                let mut out = Vec::with_capacity(spans.len());
                for (span, _) in &spans {
                    let (ty, p) = classifier.classify_span(sentence, span)?;
                    inputs += 1;
                    let score = p.iter().copied().fold(0.0, f32::max);
                    out.push(ScoredMention { mention: Mention::typed(span.start, span.end, ty), score });
                }
                Ok((out, inputs))
            }
            System::Single(detector) => {
                let (found, inputs) = detector.detect_counted(sentence)?;
                let out = found.into_iter().map(|(mention, score)| ScoredMention { mention, score }).collect();
                Ok((out, inputs))
            }
        }
    }

    pub fn run(&self, sentences: &[Sentence]) -> Result<PipelineOutput> {
        let mut out = PipelineOutput::default();
        for s in sentences {
            let (m, n) = self.predict(s)?;
            out.mentions.push(m);
            out.encoder_inputs += n;
        }
        Ok(out)
    }
}

fn check_compatible(detector: &Detector, classifier: &Classifier) -> Result<()> {
    check_parts(detector, classifier)
}

/// Span source of the two-step pipeline.
pub trait SpanDetector {
    fn detect(&self, sentence: &Sentence) -> Result<Vec<Mention>>;
    /// Subword vocabulary, when the detector has one.
    fn vocab(&self) -> Option<&Vocab> {
        None
    }
    /// Type inventory the detector was built for, when known.
    fn types(&self) -> Option<&[String]> {
        None
    }
}

/// Span typer of the two-step pipeline.
pub trait SpanClassifier {
    /// Chosen type and its probability.
    fn classify(&self, sentence: &Sentence, span: &Mention) -> Result<(String, f32)>;
    fn vocab(&self) -> Option<&Vocab> {
        None
    }
    fn types(&self) -> &[String];
}

impl SpanDetector for Detector {
    fn detect(&self, sentence: &Sentence) -> Result<Vec<Mention>> {
        self.detect_spans(sentence)
    }
    fn vocab(&self) -> Option<&Vocab> {
        Some(&self.vocab)
    }
    fn types(&self) -> Option<&[String]> {
        Some(&self.types)
    }
}

impl SpanClassifier for Classifier {
    fn classify(&self, sentence: &Sentence, span: &Mention) -> Result<(String, f32)> {
        let (ty, p) = self.classify_span(sentence, span)?;
        Ok((ty, p.iter().copied().fold(0.0, f32::max)))
    }
    fn vocab(&self) -> Option<&Vocab> {
        Some(&self.vocab)
    }
    fn types(&self) -> &[String] {
        &self.types
    }
}

fn check_parts<D: SpanDetector + ?Sized, C: SpanClassifier + ?Sized>(detector: &D, classifier: &C) -> Result<()> {
    if let (Some(a), Some(b)) = (detector.vocab(), classifier.vocab()) {
        if a != b {
            return Err(Error::Incompatible("detector and classifier vocabularies differ".into()));
        }
    }
    if let Some(t) = detector.types() {
        if t != classifier.types() {
            return Err(Error::Incompatible(alloc::format!(
                "type inventories differ: {:?} vs {:?}",
                t,
                classifier.types()
            )));
        }
    }
    Ok(())
}

/// Detects spans, then types each one. Sentences without detections yield
/// no mentions whatever the classifier would say.
pub fn run_pipeline<D, C>(sentences: &[Sentence], detector: &D, classifier: &C) -> Result<PipelineOutput>
where
    D: SpanDetector + ?Sized,
    C: SpanClassifier + ?Sized,
{
    check_parts(detector, classifier)?;
    let mut out = PipelineOutput::default();
    for s in sentences {
        let spans = detector.detect(s)?;
        out.encoder_inputs += 1;
        let mut typed = Vec::with_capacity(spans.len());
        for span in spans {
            let (ty, score) = classifier.classify(s, &span)?;
            out.encoder_inputs += 1;
            typed.push(ScoredMention { mention: Mention::typed(span.start, span.end, ty), score });
        }
        out.mentions.push(typed);
    }
    Ok(out)
}
