use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::types::SentenceRecord;

/// Overlap category of a triplet relative to the other triplets of its sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OverlapCategory {
    Normal,
    AspectOverlapped,
    OpinionOverlapped,
}

/// Category assigned to a triplet that shares both its aspect span and its
/// opinion span with other triplets.
pub const BOTH_SHARED_CATEGORY: OverlapCategory = OverlapCategory::AspectOverlapped;

/// One category per distinct triplet of the record, aligned with
/// `record.triplet_set()`.
pub fn categorize_overlap(record: &SentenceRecord) -> Vec<OverlapCategory> {
    let set = record.triplet_set();
    set.iter()
        .enumerate()
        .map(|(i, t)| {
            let others = set.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o);
            let (mut aspect, mut opinion) = (false, false);
            for o in others {
                aspect |= o.aspect == t.aspect;
                opinion |= o.opinion == t.opinion;
            }
            match (aspect, opinion) {
                (true, true) => BOTH_SHARED_CATEGORY,
                (true, false) => OverlapCategory::AspectOverlapped,
                (false, true) => OverlapCategory::OpinionOverlapped,
                (false, false) => OverlapCategory::Normal,
            }
        })
        .collect()
}

/// Dataset counts in the column order of the usual statistics table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub triplets: usize,
    pub sentences_with_overlap: usize,
    pub triplets_with_overlap: usize,
}

impl CorpusStats {
    pub const TSV_HEADER: &'static str = "sentences\ttriplets\tsentences_w_overlap\ttriplets_w_overlap";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.sentences, self.triplets, self.sentences_with_overlap, self.triplets_with_overlap
        )
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, o: CorpusStats) -> CorpusStats {
        CorpusStats {
            sentences: self.sentences + o.sentences,
            triplets: self.triplets + o.triplets,
            sentences_with_overlap: self.sentences_with_overlap + o.sentences_with_overlap,
            triplets_with_overlap: self.triplets_with_overlap + o.triplets_with_overlap,
        }
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::TSV_HEADER)?;
        write!(f, "{}", self.tsv_row())
    }
}

/// A sentence counts as "with overlap" when any of its triplets is not NORMAL.
pub fn corpus_stats(records: &[SentenceRecord]) -> CorpusStats {
    records
        .iter()
        .map(|r| {
            let cats = categorize_overlap(r);
            let overlapped = cats.iter().filter(|c| **c != OverlapCategory::Normal).count();
            CorpusStats {
                sentences: 1,
                triplets: cats.len(),
                sentences_with_overlap: usize::from(overlapped > 0),
                triplets_with_overlap: overlapped,
            }
        })
        .fold(CorpusStats::default(), Add::add)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Sentiment, Span, Triplet};

    type Raw = ((usize, usize), (usize, usize), Sentiment);

    fn rec(tokens: &str, triplets: &[Raw]) -> SentenceRecord {
        SentenceRecord::new(
            "t",
            tokens.split(' ').map(String::from).collect(),
            triplets
                .iter()
                .map(|&(a, o, s)| Triplet::new(Span::new(a.0, a.1), Span::new(o.0, o.1), s))
                .collect(),
        )
    }

    #[test]
    fn overlap_pattern_categories() {
        use Sentiment::*;
        let normal = rec(
            "Great food but the service was dreadful !",
            &[((1, 1), (0, 0), Pos), ((4, 4), (6, 6), Neg)],
        );
        assert_eq!(categorize_overlap(&normal), vec![OverlapCategory::Normal; 2]);
        let aspect = rec("Images are crisp and clean .", &[((0, 0), (2, 2), Pos), ((0, 0), (4, 4), Pos)]);
        assert_eq!(categorize_overlap(&aspect), vec![OverlapCategory::AspectOverlapped; 2]);
        let opinion = rec(
            "Great battery , start up speed .",
            &[((1, 1), (0, 0), Pos), ((3, 5), (0, 0), Pos)],
        );
        assert_eq!(categorize_overlap(&opinion), vec![OverlapCategory::OpinionOverlapped; 2]);
    }

    #[test]
    fn both_shared_prefers_aspect() {
        use Sentiment::*;
        let r = rec(
            "a b c d e",
            &[((0, 0), (2, 2), Pos), ((0, 0), (4, 4), Pos), ((3, 3), (2, 2), Pos)],
        );
        // triplet (0,0)-(2,2) shares its aspect with one triplet and its opinion with another
        assert_eq!(
            categorize_overlap(&r),
            vec![
                BOTH_SHARED_CATEGORY,
                OverlapCategory::AspectOverlapped,
                OverlapCategory::OpinionOverlapped
            ]
        );
    }

    #[test]
    fn stats_small_cases() {
        use Sentiment::*;
        let single = rec("a b", &[((0, 0), (1, 1), Neu)]);
        assert_eq!(
            corpus_stats(std::slice::from_ref(&single)),
            CorpusStats {
                sentences: 1,
                triplets: 1,
                sentences_with_overlap: 0,
                triplets_with_overlap: 0
            }
        );
        let shared = rec("a b c", &[((0, 0), (2, 2), Pos), ((1, 1), (2, 2), Pos)]);
        let s = corpus_stats(std::slice::from_ref(&shared));
        assert_eq!((s.sentences, s.triplets, s.sentences_with_overlap, s.triplets_with_overlap), (1, 2, 1, 2));
        assert_eq!(corpus_stats(&[single.clone(), shared.clone()]), corpus_stats(&[single]) + corpus_stats(&[shared]));
    }

    #[test]
    fn tsv_layout() {
        let s = CorpusStats {
            sentences: 1300,
            triplets: 2409,
            sentences_with_overlap: 437,
            triplets_with_overlap: 578,
        };
        assert_eq!(s.tsv_row(), "1300\t2409\t437\t578");
    }
}
