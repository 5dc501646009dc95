//! Inference, scoring, query accounting and synthetic corpora.

mod eval;
mod queries;
mod synthetic;
mod system;

pub use eval::{micro_f1, Counts, EvalReport, Mode};
pub use queries::{count_queries, variant_queries, QueryKind};
pub use synthetic::{generate_synthetic_corpus, Family, SyntheticConfig, TypeSpec};
pub use system::{run_pipeline, PipelineOutput, ScoredMention, SpanClassifier, SpanDetector, System};
