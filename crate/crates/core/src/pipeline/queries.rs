use crate::corpus::{Dataset, Mention};
use crate::models::Variant;

/// Encoder input families whose sizes are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    SplitDetection,
    SplitClassification,
    SingleQa,
    SingleSeqTag,
}

/// Exact number of encoder inputs of one kind over `data`. Classification
/// queries one input per mention: the predicted ones when given, otherwise
/// the gold ones (the training case).
pub fn count_queries(kind: QueryKind, data: &Dataset, predicted: Option<&[alloc::vec::Vec<Mention>]>) -> usize {
    let n = data.len();
    match kind {
        QueryKind::SplitDetection | QueryKind::SingleSeqTag => n,
        QueryKind::SplitClassification => match predicted {
            Some(p) => p.iter().map(alloc::vec::Vec::len).sum(),
            None => data.total_mentions(),
        },
        QueryKind::SingleQa => n * data.num_types(),
    }
}

/// Total encoder inputs of a variant over `data`.
pub fn variant_queries(variant: Variant, data: &Dataset, predicted: Option<&[alloc::vec::Vec<Mention>]>) -> usize {
    match variant {
        Variant::SingleQa => count_queries(QueryKind::SingleQa, data, predicted),
        Variant::SingleSeqTag => count_queries(QueryKind::SingleSeqTag, data, predicted),
        _ => {
            count_queries(QueryKind::SplitDetection, data, predicted)
                + count_queries(QueryKind::SplitClassification, data, predicted)
        }
    }
}
