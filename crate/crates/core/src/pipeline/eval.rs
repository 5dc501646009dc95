use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::Mention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// A prediction matches on `(start, end, type)`.
    Typed,
    /// A prediction matches on `(start, end)`.
    Untyped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Mention-level micro scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: Mode,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Typed mode only: counts per entity type.
    pub per_type: BTreeMap<String, Counts>,
}

fn key(m: &Mention, mode: Mode) -> Mention {
    match mode {
        Mode::Typed => m.clone(),
        Mode::Untyped => m.without_type(),
    }
}

/// Micro-averaged precision, recall and F1 over per-sentence mention sets.
/// Sentence `i` of `gold` is compared with sentence `i` of `pred`; a missing
/// side counts as empty. When gold and predictions are both empty overall,
/// every score is 1.
pub fn micro_f1(gold: &[Vec<Mention>], pred: &[Vec<Mention>], mode: Mode) -> EvalReport {
    let mut counts = Counts::default();
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for i in 0..gold.len().max(pred.len()) {
        let g: BTreeSet<Mention> = gold.get(i).into_iter().flatten().map(|m| key(m, mode)).collect();
        let p: BTreeSet<Mention> = pred.get(i).into_iter().flatten().map(|m| key(m, mode)).collect();
        for m in g.union(&p) {
            let (in_g, in_p) = (g.contains(m), p.contains(m));
            let bump = |c: &mut Counts| match (in_g, in_p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => {}
            };
            bump(&mut counts);
            if let (Mode::Typed, Some(t)) = (mode, &m.entity_type) {
                bump(per_type.entry(t.clone()).or_default());
            }
        }
    }
    let (precision, recall, f1) =
        if counts == Counts::default() { (1.0, 1.0, 1.0) } else { (counts.precision(), counts.recall(), counts.f1()) };
    EvalReport { mode, counts, precision, recall, f1, per_type }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_case() {
        let gold = vec![vec![Mention::typed(0, 0, "PER"), Mention::typed(3, 4, "LOC")]];
        let pred = vec![vec![Mention::typed(0, 0, "PER"), Mention::typed(3, 3, "LOC")]];
        let r = micro_f1(&gold, &pred, Mode::Typed);
        assert_eq!(r.counts, Counts { tp: 1, fp: 1, fn_: 1 });
        assert!((r.f1 - 0.5).abs() < 1e-12);
        assert!((r.precision - 0.5).abs() < 1e-12 && (r.recall - 0.5).abs() < 1e-12);
        assert_eq!(r.per_type["LOC"], Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn edge_cases() {
        let gold = vec![vec![Mention::typed(0, 0, "PER")]];
        assert_eq!(micro_f1(&gold, &gold, Mode::Typed).f1, 1.0);
        assert_eq!(micro_f1(&gold, &[], Mode::Typed).f1, 0.0);
        assert_eq!(micro_f1(&[vec![]], &[vec![]], Mode::Untyped).f1, 1.0);
        let wrong_type = vec![vec![Mention::typed(0, 0, "LOC")]];
        assert_eq!(micro_f1(&gold, &wrong_type, Mode::Typed).f1, 0.0);
        assert_eq!(micro_f1(&gold, &wrong_type, Mode::Untyped).f1, 1.0);
    }
}
