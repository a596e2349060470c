#![allow(dead_code)]

use std::path::PathBuf;

use ote_mtl::types::{SentenceRecord, Sentiment, Span, Triplet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Random record with pairwise-disjoint spans and at most one triplet per
/// (aspect, opinion) pair, so the gold encoding is lossless.
pub fn random_record(seed: u64, max_len: usize, max_triplets: usize) -> SentenceRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_len.max(1));
    let mut spans = Vec::new();
    let mut pos = rng.gen_range(0..2);
    while pos < n {
        let len = rng.gen_range(1..=3).min(n - pos);
        spans.push(Span::new(pos, pos + len - 1));
        pos += len + rng.gen_range(0..2);
    }
    spans.shuffle(&mut rng);
    let split = rng.gen_range(1..=spans.len().max(1)).min(spans.len());
    let (aspects, opinions) = spans.split_at(split);
    let mut pairs: Vec<(Span, Span)> = aspects
        .iter()
        .flat_map(|&a| opinions.iter().map(move |&o| (a, o)))
        .collect();
    pairs.shuffle(&mut rng);
    let k = rng.gen_range(0..=max_triplets).min(pairs.len());
    let triplets = pairs[..k]
        .iter()
        .map(|&(a, o)| Triplet::new(a, o, Sentiment::ALL[rng.gen_range(0..3)]))
        .collect();
    let tokens = (0..n).map(|i| format!("w{}", rng.gen_range(0..20) + i)).collect();
    SentenceRecord::new(format!("r{seed}"), tokens, triplets)
}
