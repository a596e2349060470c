//! Domain types shared across the crate: spans, triplets, sentiment labels,
//! BIO tag sequences and the gold encoding of a sentence.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Sentiment polarity of a triplet. Numeric codes are fixed: NEU=0, NEG=1, POS=2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    #[serde(rename = "NEU")]
    Neu,
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "POS")]
    Pos,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Neu, Sentiment::Neg, Sentiment::Pos];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Neu => "NEU",
            Sentiment::Neg => "NEG",
            Sentiment::Pos => "POS",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label of one cell of the word-pair table: a sentiment, or no dependency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepType {
    #[serde(rename = "NEU")]
    Neu,
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "NO-DEP")]
    NoDep,
}

impl DepType {
    pub const COUNT: usize = 4;
    pub const ALL: [DepType; 4] = [DepType::Neu, DepType::Neg, DepType::Pos, DepType::NoDep];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn sentiment(self) -> Option<Sentiment> {
        match self {
            DepType::Neu => Some(Sentiment::Neu),
            DepType::Neg => Some(Sentiment::Neg),
            DepType::Pos => Some(Sentiment::Pos),
            DepType::NoDep => None,
        }
    }
}

impl From<Sentiment> for DepType {
    fn from(s: Sentiment) -> Self {
        match s {
            Sentiment::Neu => DepType::Neu,
            Sentiment::Neg => DepType::Neg,
            Sentiment::Pos => DepType::Pos,
        }
    }
}

/// Inclusive, 0-based token span. Serialized as `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(index: usize) -> Self {
        Span { start: index, end: index }
    }

    /// Number of tokens covered; zero for an inverted span.
    pub fn len(&self) -> usize {
        (self.end + 1).saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn fits(&self, sentence_len: usize) -> bool {
        self.start <= self.end && self.end < sentence_len
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

/// An opinion triplet. Serialized as `[[sa,ea],[so,eo],"POS"]`.
///
/// Equality is exact equality of both spans and the sentiment, which is also
/// the match criterion used by evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(Span, Span, Sentiment)", into = "(Span, Span, Sentiment)")]
pub struct Triplet {
    pub aspect: Span,
    pub opinion: Span,
    pub sentiment: Sentiment,
}

impl Triplet {
    pub fn new(aspect: Span, opinion: Span, sentiment: Sentiment) -> Self {
        Triplet {
            aspect,
            opinion,
            sentiment,
        }
    }

    fn sort_key(&self) -> (usize, usize, usize, usize, usize) {
        (
            self.aspect.start,
            self.opinion.start,
            self.sentiment.code(),
            self.aspect.end,
            self.opinion.end,
        )
    }
}

/// Triplets order by (aspect start, opinion start, sentiment code), then ends.
impl Ord for Triplet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Triplet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl From<(Span, Span, Sentiment)> for Triplet {
    fn from((aspect, opinion, sentiment): (Span, Span, Sentiment)) -> Self {
        Triplet::new(aspect, opinion, sentiment)
    }
}

impl From<Triplet> for (Span, Span, Sentiment) {
    fn from(t: Triplet) -> Self {
        (t.aspect, t.opinion, t.sentiment)
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.aspect, self.opinion, self.sentiment)
    }
}

/// A tokenized sentence with its gold triplets, in file order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub triplets: Vec<Triplet>,
}

impl SentenceRecord {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, triplets: Vec<Triplet>) -> Self {
        SentenceRecord {
            id: id.into(),
            tokens,
            triplets,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Triplets sorted and deduplicated.
    pub fn triplet_set(&self) -> Vec<Triplet> {
        let mut set = self.triplets.clone();
        set.sort();
        set.dedup();
        set
    }
}

/// A problem found by [`validate_record`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyTokens,
    SpanOutOfRange { triplet: usize, span: Span },
    AspectOpinionOverlap { triplet: usize },
    DuplicateTriplet { triplet: usize, first: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTokens => f.write_str("sentence has no tokens"),
            Violation::SpanOutOfRange { triplet, span } => {
                write!(f, "span out of range: triplet {triplet} span {span}")
            }
            Violation::AspectOpinionOverlap { triplet } => {
                write!(f, "aspect/opinion overlap within triplet {triplet}")
            }
            Violation::DuplicateTriplet { triplet, first } => {
                write!(f, "duplicate triplet {triplet} (same as {first})")
            }
        }
    }
}

/// Checks a record against the span and triplet invariants. An empty vector
/// means the record is valid.
pub fn validate_record(record: &SentenceRecord) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = record.tokens.len();
    if n == 0 {
        violations.push(Violation::EmptyTokens);
    }
    for (idx, t) in record.triplets.iter().enumerate() {
        let mut in_range = true;
        for span in [t.aspect, t.opinion] {
            if !span.fits(n) {
                violations.push(Violation::SpanOutOfRange { triplet: idx, span });
                in_range = false;
            }
        }
        if in_range && t.aspect.overlaps(&t.opinion) {
            violations.push(Violation::AspectOpinionOverlap { triplet: idx });
        }
        if let Some(first) = record.triplets[..idx].iter().position(|o| o == t) {
            violations.push(Violation::DuplicateTriplet { triplet: idx, first });
        }
    }
    violations
}

/// BIO tag of a single token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::B, Tag::I, Tag::O];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        })
    }
}

/// Joint tag set used when aspect and opinion tagging share one head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollapsedTag {
    BAspect,
    IAspect,
    BOpinion,
    IOpinion,
    O,
}

impl CollapsedTag {
    pub const COUNT: usize = 5;
    pub const ALL: [CollapsedTag; 5] = [
        CollapsedTag::BAspect,
        CollapsedTag::IAspect,
        CollapsedTag::BOpinion,
        CollapsedTag::IOpinion,
        CollapsedTag::O,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// Merges an aspect tag and an opinion tag; aspect tags take precedence
    /// when a token carries both.
    pub fn merge(aspect: Tag, opinion: Tag) -> Self {
        match (aspect, opinion) {
            (Tag::B, _) => CollapsedTag::BAspect,
            (Tag::I, _) => CollapsedTag::IAspect,
            (Tag::O, Tag::B) => CollapsedTag::BOpinion,
            (Tag::O, Tag::I) => CollapsedTag::IOpinion,
            (Tag::O, Tag::O) => CollapsedTag::O,
        }
    }

    /// Splits into (aspect tag, opinion tag).
    pub fn split(self) -> (Tag, Tag) {
        match self {
            CollapsedTag::BAspect => (Tag::B, Tag::O),
            CollapsedTag::IAspect => (Tag::I, Tag::O),
            CollapsedTag::BOpinion => (Tag::O, Tag::B),
            CollapsedTag::IOpinion => (Tag::O, Tag::I),
            CollapsedTag::O => (Tag::O, Tag::O),
        }
    }
}

/// One tag per token. Predicted sequences need not be well-formed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TagSeq(pub Vec<Tag>);

impl TagSeq {
    pub fn outside(len: usize) -> Self {
        TagSeq(vec![Tag::O; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }
}

impl std::str::FromStr for TagSeq {
    type Err = String;

    /// Parses whitespace-separated `B`/`I`/`O` tags.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split_whitespace()
            .map(|t| match t {
                "B" => Ok(Tag::B),
                "I" => Ok(Tag::I),
                "O" => Ok(Tag::O),
                other => Err(format!("unknown tag '{other}'")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TagSeq)
    }
}

impl fmt::Display for TagSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Square |S|×|S| table of dependency types, row = aspect word, column = opinion word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepTable {
    size: usize,
    cells: Vec<DepType>,
}

impl DepTable {
    pub fn no_dep(size: usize) -> Self {
        DepTable {
            size,
            cells: vec![DepType::NoDep; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> DepType {
        self.cells[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: DepType) {
        self.cells[row * self.size + col] = value;
    }

    /// Non-NO-DEP cells in row-major order.
    pub fn dependencies(&self) -> impl Iterator<Item = (usize, usize, DepType)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != DepType::NoDep)
            .map(move |(idx, d)| (idx / self.size, idx % self.size, *d))
    }
}

/// Gold supervision for one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldEncoding {
    pub aspect_tags: TagSeq,
    pub opinion_tags: TagSeq,
    pub dep_table: DepTable,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, triplets: Vec<Triplet>) -> SentenceRecord {
        SentenceRecord::new("t", (0..n).map(|i| format!("w{i}")).collect(), triplets)
    }

    #[test]
    fn worked_example_is_valid() {
        let r = record(
            7,
            vec![Triplet::new(Span::new(3, 5), Span::new(0, 0), Sentiment::Pos)],
        );
        assert!(validate_record(&r).is_empty());
    }

    #[test]
    fn out_of_range_span() {
        let r = record(
            3,
            vec![Triplet::new(Span::new(0, 5), Span::new(1, 1), Sentiment::Pos)],
        );
        let v = validate_record(&r);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::SpanOutOfRange { triplet: 0, .. }));
        assert!(v[0].to_string().contains("span out of range"));
    }

    #[test]
    fn overlap_within_triplet() {
        let r = record(
            4,
            vec![Triplet::new(Span::new(1, 2), Span::new(2, 2), Sentiment::Neg)],
        );
        let v = validate_record(&r);
        assert_eq!(v, vec![Violation::AspectOpinionOverlap { triplet: 0 }]);
        assert!(v[0].to_string().contains("aspect/opinion overlap"));
    }

    #[test]
    fn duplicates_and_empty() {
        let t = Triplet::new(Span::new(0, 0), Span::new(1, 1), Sentiment::Neu);
        let r = record(2, vec![t, t]);
        assert_eq!(
            validate_record(&r),
            vec![Violation::DuplicateTriplet { triplet: 1, first: 0 }]
        );
        let empty = record(0, vec![]);
        assert_eq!(validate_record(&empty), vec![Violation::EmptyTokens]);
    }

    #[test]
    fn enum_codes_are_stable() {
        assert_eq!(Sentiment::Neu.code(), 0);
        assert_eq!(Sentiment::Neg.code(), 1);
        assert_eq!(Sentiment::Pos.code(), 2);
        assert_eq!(DepType::NoDep.code(), 3);
        assert_eq!(DepType::from(Sentiment::Pos), DepType::Pos);
        assert_eq!(Tag::from_code(1), Some(Tag::I));
    }

    #[test]
    fn triplet_json_shape() {
        let t = Triplet::new(Span::new(3, 5), Span::new(0, 0), Sentiment::Pos);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"[[3,5],[0,0],"POS"]"#);
        let back: Triplet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn span_length_positive() {
        assert_eq!(Span::new(2, 2).len(), 1);
        assert_eq!(Span::new(0, 3).len(), 4);
    }
}
