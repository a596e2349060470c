use log::warn;

use crate::types::{CollapsedTag, DepTable, DepType, GoldEncoding, SentenceRecord, Span, Tag, TagSeq};

/// Two triplets that map onto the same (aspect-end, opinion-end) cell with
/// different sentiments. The later one (in file order) is kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellConflict {
    pub row: usize,
    pub col: usize,
    pub replaced: DepType,
    pub kept: DepType,
}

fn bio_union(len: usize, spans: impl Iterator<Item = Span> + Clone) -> TagSeq {
    let mut tags = vec![Tag::O; len];
    for span in spans.clone() {
        for t in &mut tags[span.start + 1..=span.end] {
            *t = Tag::I;
        }
    }
    // B marks win over I where spans of the same kind overlap.
    for span in spans {
        tags[span.start] = Tag::B;
    }
    TagSeq(tags)
}

/// Gold tags and dependency table, plus any cell conflicts encountered.
pub fn encode_gold_with_conflicts(record: &SentenceRecord) -> (GoldEncoding, Vec<CellConflict>) {
    let n = record.tokens.len();
    let aspect_tags = bio_union(n, record.triplets.iter().map(|t| t.aspect));
    let opinion_tags = bio_union(n, record.triplets.iter().map(|t| t.opinion));
    let mut dep_table = DepTable::no_dep(n);
    let mut conflicts = Vec::new();
    for t in &record.triplets {
        let (row, col) = (t.aspect.end, t.opinion.end);
        let kept = DepType::from(t.sentiment);
        let existing = dep_table.get(row, col);
        if existing != DepType::NoDep && existing != kept {
            conflicts.push(CellConflict {
                row,
                col,
                replaced: existing,
                kept,
            });
        }
        dep_table.set(row, col, kept);
    }
    (
        GoldEncoding {
            aspect_tags,
            opinion_tags,
            dep_table,
        },
        conflicts,
    )
}

/// Encodes a valid record: union BIO tags for aspects and opinions, and the
/// sentiment of each triplet at (last aspect word, last opinion word).
/// Conflicting cells are logged and resolved in favour of the later triplet.
pub fn encode_gold(record: &SentenceRecord) -> GoldEncoding {
    let (encoding, conflicts) = encode_gold_with_conflicts(record);
    for c in &conflicts {
        warn!(
            "record '{}': cell ({},{}) labelled {:?} then {:?}; keeping the latter",
            record.id, c.row, c.col, c.replaced, c.kept
        );
    }
    encoding
}

/// Single 5-way tag sequence for the collapsed tagging head.
pub fn collapsed_tags(encoding: &GoldEncoding) -> Vec<CollapsedTag> {
    encoding
        .aspect_tags
        .tags()
        .iter()
        .zip(encoding.opinion_tags.tags())
        .map(|(&a, &o)| CollapsedTag::merge(a, o))
        .collect()
}
