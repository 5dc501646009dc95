//! Independent mention-level scorer.

use splitner_core::corpus::Mention;

/// Independent counter: deduplicate each side with a linear scan, then count
/// matches pairwise.
pub fn brute_force(gold: &[Vec<Mention>], pred: &[Vec<Mention>], typed: bool) -> (usize, usize, usize) {
    let same =
        |a: &Mention, b: &Mention| a.start == b.start && a.end == b.end && (!typed || a.entity_type == b.entity_type);
    let dedup = |ms: &[Mention]| {
        let mut out: Vec<Mention> = Vec::new();
        for m in ms {
            if !out.iter().any(|o| same(o, m)) {
                out.push(m.clone());
            }
        }
        out
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let empty = Vec::new();
    for i in 0..gold.len().max(pred.len()) {
        let g = dedup(gold.get(i).unwrap_or(&empty));
        let p = dedup(pred.get(i).unwrap_or(&empty));
        let hits = p.iter().filter(|m| g.iter().any(|x| same(x, m))).count();
        tp += hits;
        fp += p.len() - hits;
        fn_ += g.len() - hits;
    }
    (tp, fp, fn_)
}

pub fn scores(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    if tp + fp + fn_ == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}
