//! Triplet decoding: predicted dependency cells serve as pivots, and spans are
//! recovered by walking left over the tag sequences from each pivot while the
//! tag is `I`.

use rayon::prelude::*;

use crate::dataio::Vocabulary;
use crate::model::{forward_inference, Hyperparams, ModelParams};
use crate::numerics::Tensor;
use crate::types::{DepTable, DepType, SentenceRecord, Sentiment, Span, Tag, TagSeq, Triplet};

/// A predicted word-level dependency: last aspect word, last opinion word, sentiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DepPivot {
    pub aspect_end: usize,
    pub opinion_end: usize,
    pub sentiment: Sentiment,
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Pivots from an `n × n × 4` table of dependency distributions, row-major.
pub fn extract_pivots(table: &Tensor) -> Vec<DepPivot> {
    extract_pivots_with_threshold(table, None)
}

/// Like [`extract_pivots`], optionally dropping cells whose winning
/// probability is below `threshold`.
pub fn extract_pivots_with_threshold(table: &Tensor, threshold: Option<f64>) -> Vec<DepPivot> {
    let shape = table.shape();
    assert!(
        shape.len() == 3 && shape[0] == shape[1] && shape[2] == DepType::COUNT,
        "dependency table must be n×n×4, got {shape:?}"
    );
    let n = shape[0];
    let data = table.data();
    let mut pivots = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let cell = &data[(i * n + j) * DepType::COUNT..(i * n + j + 1) * DepType::COUNT];
            let k = argmax(cell);
            let Some(sentiment) = DepType::from_code(k).and_then(DepType::sentiment) else {
                continue;
            };
            if threshold.is_some_and(|t| cell[k] < t) {
                continue;
            }
            pivots.push(DepPivot {
                aspect_end: i,
                opinion_end: j,
                sentiment,
            });
        }
    }
    pivots
}

/// Walks left from `end` while the tag is `I`, stopping at index 0.
fn span_start(tags: &[Tag], end: usize) -> usize {
    let mut start = end;
    while tags[start] == Tag::I {
        if start == 0 {
            break;
        }
        start -= 1;
    }
    start
}

/// Recovers the triplet anchored at `pivot`. A pivot whose own tag is not `I`
/// yields a single-token span.
pub fn decode_one(aspect_tags: &TagSeq, opinion_tags: &TagSeq, pivot: DepPivot) -> Triplet {
    Triplet::new(
        Span::new(span_start(aspect_tags.tags(), pivot.aspect_end), pivot.aspect_end),
        Span::new(span_start(opinion_tags.tags(), pivot.opinion_end), pivot.opinion_end),
        pivot.sentiment,
    )
}

/// All triplets of a sentence, deduplicated and sorted.
pub fn decode_sentence(aspect_tags: &TagSeq, opinion_tags: &TagSeq, table: &Tensor) -> Vec<Triplet> {
    decode_sentence_with_threshold(aspect_tags, opinion_tags, table, None)
}

pub fn decode_sentence_with_threshold(
    aspect_tags: &TagSeq,
    opinion_tags: &TagSeq,
    table: &Tensor,
    threshold: Option<f64>,
) -> Vec<Triplet> {
    let n = table.shape()[0];
    assert!(
        aspect_tags.len() == n && opinion_tags.len() == n,
        "tag sequences must match the table size"
    );
    let mut triplets: Vec<Triplet> = extract_pivots_with_threshold(table, threshold)
        .into_iter()
        .map(|p| decode_one(aspect_tags, opinion_tags, p))
        .collect();
    triplets.sort();
    triplets.dedup();
    triplets
}

/// One-hot `n × n × 4` distributions for a gold table.
pub fn one_hot_table(table: &DepTable) -> Tensor {
    let n = table.size();
    let mut t = Tensor::zeros(&[n, n, DepType::COUNT]);
    for i in 0..n {
        for j in 0..n {
            t.set(&[i, j, table.get(i, j).code()], 1.0);
        }
    }
    t
}

/// Runs the model in inference mode and decodes each record.
pub fn predict(
    records: &[SentenceRecord],
    params: &ModelParams,
    hyper: &Hyperparams,
    vocab: &Vocabulary,
) -> Vec<Vec<Triplet>> {
    records
        .par_iter()
        .map(|r| {
            let ids = vocab.encode(&r.tokens);
            let trace = forward_inference(&ids, params, hyper);
            let (aspect, opinion) = trace.predicted_tags();
            decode_sentence_with_threshold(&aspect, &opinion, &trace.dep_probs, hyper.pivot_threshold)
        })
        .collect()
}
