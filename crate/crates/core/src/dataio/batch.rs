use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::encode_gold;
use super::vocab::{Vocabulary, PAD_INDEX};
use crate::types::{DepTable, GoldEncoding, SentenceRecord, Tag, TagSeq};

/// A padded mini-batch. Row `b` of every matrix belongs to `records[indices[b]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub max_len: usize,
    /// `batch × max_len`, padded with `<pad>`.
    pub token_ids: Vec<usize>,
    pub lengths: Vec<usize>,
    /// `batch × max_len`; true on real tokens.
    pub mask: Vec<bool>,
    /// Gold encodings padded to `max_len` (O tags, NO-DEP cells).
    pub gold: Vec<GoldEncoding>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Unpadded token ids of row `b`.
    pub fn tokens(&self, b: usize) -> &[usize] {
        let start = b * self.max_len;
        &self.token_ids[start..start + self.lengths[b]]
    }

    pub fn mask_row(&self, b: usize) -> &[bool] {
        &self.mask[b * self.max_len..(b + 1) * self.max_len]
    }
}

fn pad_gold(gold: GoldEncoding, max_len: usize) -> GoldEncoding {
    let n = gold.aspect_tags.len();
    let pad_tags = |tags: TagSeq| {
        let mut v = tags.0;
        v.resize(max_len, Tag::O);
        TagSeq(v)
    };
    let mut table = DepTable::no_dep(max_len);
    for (r, c, d) in gold.dep_table.dependencies() {
        table.set(r, c, d);
    }
    debug_assert!(n <= max_len);
    GoldEncoding {
        aspect_tags: pad_tags(gold.aspect_tags),
        opinion_tags: pad_tags(gold.opinion_tags),
        dep_table: table,
    }
}

/// Splits `records` into batches of `batch_size` (the last may be smaller).
/// With a seed the order is shuffled deterministically; without one, file
/// order is kept.
pub fn make_batches(
    records: &[SentenceRecord],
    vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let order = batch_order(records.len(), batch_size, shuffle_seed);
    order
        .into_iter()
        .map(|indices| {
            let max_len = indices.iter().map(|&i| records[i].len()).max().unwrap_or(0);
            let mut token_ids = vec![PAD_INDEX; indices.len() * max_len];
            let mut mask = vec![false; indices.len() * max_len];
            let mut lengths = Vec::with_capacity(indices.len());
            let mut gold = Vec::with_capacity(indices.len());
            for (b, &i) in indices.iter().enumerate() {
                let r = &records[i];
                for (t, id) in vocab.encode(&r.tokens).into_iter().enumerate() {
                    token_ids[b * max_len + t] = id;
                    mask[b * max_len + t] = true;
                }
                lengths.push(r.len());
                gold.push(pad_gold(encode_gold(r), max_len));
            }
            Batch {
                indices,
                max_len,
                token_ids,
                lengths,
                mask,
                gold,
            }
        })
        .collect()
}

/// Index groups only, for callers that keep their own per-record data.
pub fn batch_order(count: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..count).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::build_vocab;
    use crate::types::{DepType, Sentiment, Span, Triplet};

    fn records(n: usize) -> Vec<SentenceRecord> {
        (0..n)
            .map(|i| {
                let len = 2 + i % 5;
                SentenceRecord::new(
                    format!("s{i}"),
                    (0..len).map(|t| format!("w{}", (i + t) % 7)).collect(),
                    vec![Triplet::new(Span::single(0), Span::single(1), Sentiment::Pos)],
                )
            })
            .collect()
    }

    #[test]
    fn sizes_keep_final_partial_batch() {
        let rs = records(70);
        let v = build_vocab(&rs, 1);
        let sizes: Vec<usize> = make_batches(&rs, &v, 32, Some(1)).iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![32, 32, 6]);
    }

    #[test]
    fn same_seed_same_batches() {
        let rs = records(40);
        let v = build_vocab(&rs, 1);
        assert_eq!(make_batches(&rs, &v, 8, Some(9)), make_batches(&rs, &v, 8, Some(9)));
        assert_ne!(
            make_batches(&rs, &v, 8, Some(9))[0].indices,
            make_batches(&rs, &v, 8, Some(10))[0].indices
        );
    }

    #[test]
    fn batch_size_one_is_a_permutation() {
        let rs = records(10);
        let v = build_vocab(&rs, 1);
        let batches = make_batches(&rs, &v, 1, Some(4));
        assert_eq!(batches.len(), 10);
        let mut seen: Vec<usize> = batches.iter().map(|b| b.indices[0]).collect();
        assert_ne!(seen, (0..10).collect::<Vec<_>>());
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn padding_is_masked() {
        let rs = records(5);
        let v = build_vocab(&rs, 1);
        let b = &make_batches(&rs, &v, 5, None)[0];
        assert_eq!(b.max_len, 6);
        for row in 0..b.len() {
            let len = b.lengths[row];
            assert_eq!(b.tokens(row).len(), len);
            assert_eq!(b.mask_row(row).iter().filter(|m| **m).count(), len);
            assert!(b.token_ids[row * b.max_len + len..(row + 1) * b.max_len]
                .iter()
                .all(|&t| t == PAD_INDEX));
            assert_eq!(b.gold[row].dep_table.get(0, 1), DepType::Pos);
            assert_eq!(b.gold[row].dep_table.size(), 6);
        }
    }
}
