//! Inference over a worker pool of scoped threads reading a frozen system.

use std::num::NonZeroUsize;

use splitner_core::corpus::Sentence;
use splitner_core::pipeline::{PipelineOutput, System};

use crate::Result;

/// Environment variable capping the number of inference workers.
pub const THREADS_ENV: &str = "SPLITNER_THREADS";

/// Workers for `items` sentences: the available parallelism, capped by
/// `SPLITNER_THREADS` when set to a positive integer, and by `items`.
pub fn worker_count(items: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, NonZeroUsize::get);
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    cap.unwrap_or(available).min(items).max(1)
}

/// Runs `system` over contiguous chunks of `sentences` on `workers` threads
/// and merges the results in input order.
pub fn run_parallel(system: &System, sentences: &[Sentence], workers: usize) -> Result<PipelineOutput> {
    let workers = workers.clamp(1, sentences.len().max(1));
    if workers == 1 {
        return Ok(system.run(sentences)?);
    }
    let chunk = sentences.len().div_ceil(workers);
    let parts: Vec<splitner_core::Result<PipelineOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sentences.chunks(chunk).map(|part| scope.spawn(move || system.run(part))).collect();
        handles.into_iter().map(|h| h.join().expect("inference worker panicked")).collect()
    });
    let mut out = PipelineOutput::default();
    for part in parts {
        let part = part?;
        out.mentions.extend(part.mentions);
        out.encoder_inputs += part.encoder_inputs;
    }
    Ok(out)
}
