//! Exact-match triplet scoring, significance testing and error analysis.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Add;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use crate::dataio::{categorize_overlap, OverlapCategory};
use crate::error::{Error, Result};
use crate::types::{SentenceRecord, Triplet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Micro-averaged precision, recall and F1 with the underlying counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(c: Counts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

fn as_set(ts: &[Triplet]) -> Vec<Triplet> {
    let mut v = ts.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Counts for one sentence; both sides are treated as sets.
pub fn sentence_counts(gold: &[Triplet], pred: &[Triplet]) -> Counts {
    let gold = as_set(gold);
    let pred = as_set(pred);
    let tp = pred.iter().filter(|p| gold.binary_search(p).is_ok()).count();
    Counts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Exact-match scoring of index-aligned per-sentence triplet sets.
///
/// # Panics
/// If the two slices differ in length.
pub fn score(gold: &[Vec<Triplet>], pred: &[Vec<Triplet>]) -> Prf {
    assert_eq!(gold.len(), pred.len(), "gold and predictions must be aligned");
    let counts = gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| sentence_counts(g, p))
        .reduce(Counts::default, Add::add);
    Prf::from_counts(counts)
}

/// Reorders `pred` to follow `gold` by sentence id. Both files must contain
/// exactly the same ids, each once.
pub fn align_by_id(gold: &[SentenceRecord], pred: &[SentenceRecord]) -> Result<Vec<Vec<Triplet>>> {
    let mut by_id: HashMap<&str, &SentenceRecord> = HashMap::with_capacity(pred.len());
    for p in pred {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::Alignment(format!("duplicate prediction id '{}'", p.id)));
        }
    }
    let mut seen = std::collections::HashSet::with_capacity(gold.len());
    let mut aligned = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(Error::Alignment(format!("duplicate gold id '{}'", g.id)));
        }
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| Error::Alignment(format!("no prediction for sentence id '{}'", g.id)))?;
        aligned.push(p.triplets.clone());
    }
    if let Some(extra) = pred.iter().find(|p| !seen.contains(p.id.as_str())) {
        return Err(Error::Alignment(format!("prediction id '{}' not in gold", extra.id)));
    }
    Ok(aligned)
}

pub fn score_records(gold: &[SentenceRecord], pred: &[SentenceRecord]) -> Result<Prf> {
    let aligned = align_by_id(gold, pred)?;
    let gold_sets: Vec<Vec<Triplet>> = gold.iter().map(|r| r.triplets.clone()).collect();
    Ok(score(&gold_sets, &aligned))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Paired t-test on per-run scores `a[i]` vs `b[i]`. Identical samples give
/// `p = 1`; a constant nonzero difference gives `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let df = n - 1.0;
    let mean = (&diffs).mean();
    let var = (&diffs).variance();
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, df, p_value: 1.0 }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                df,
                p_value: 0.0,
            }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, df, p_value })
}

/// Why a predicted triplet is wrong.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FpCategory {
    FalseAspect,
    FalseOpinion,
    FalseSentiment,
    Other,
}

impl FpCategory {
    pub const ALL: [FpCategory; 4] = [
        FpCategory::FalseAspect,
        FpCategory::FalseOpinion,
        FpCategory::FalseSentiment,
        FpCategory::Other,
    ];
}

/// Classifies a false positive against its sentence's gold triplets.
/// Precedence: sentiment, then aspect, then opinion.
pub fn classify_false_positive(pred: &Triplet, gold: &[Triplet]) -> FpCategory {
    if gold.iter().any(|g| g.aspect == pred.aspect && g.opinion == pred.opinion) {
        FpCategory::FalseSentiment
    } else if gold
        .iter()
        .any(|g| g.opinion == pred.opinion && g.sentiment == pred.sentiment && g.aspect != pred.aspect)
    {
        FpCategory::FalseAspect
    } else if gold
        .iter()
        .any(|g| g.aspect == pred.aspect && g.sentiment == pred.sentiment && g.opinion != pred.opinion)
    {
        FpCategory::FalseOpinion
    } else {
        FpCategory::Other
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub fp_counts: BTreeMap<FpCategory, usize>,
    pub fn_counts: BTreeMap<OverlapCategory, usize>,
}

impl ErrorBreakdown {
    fn empty() -> Self {
        ErrorBreakdown {
            fp_counts: FpCategory::ALL.iter().map(|&c| (c, 0)).collect(),
            fn_counts: [
                OverlapCategory::Normal,
                OverlapCategory::AspectOverlapped,
                OverlapCategory::OpinionOverlapped,
            ]
            .iter()
            .map(|&c| (c, 0))
            .collect(),
        }
    }

    pub fn total_fp(&self) -> usize {
        self.fp_counts.values().sum()
    }

    pub fn total_fn(&self) -> usize {
        self.fn_counts.values().sum()
    }
}

/// False positives by cause and false negatives by overlap category, for
/// predictions aligned with `gold` by index.
pub fn error_breakdown(gold: &[SentenceRecord], pred: &[Vec<Triplet>]) -> ErrorBreakdown {
    assert_eq!(gold.len(), pred.len(), "gold and predictions must be aligned");
    let mut out = ErrorBreakdown::empty();
    for (record, p) in gold.iter().zip(pred) {
        let gold_set = record.triplet_set();
        for t in as_set(p) {
            if gold_set.binary_search(&t).is_err() {
                *out.fp_counts.entry(classify_false_positive(&t, &gold_set)).or_default() += 1;
            }
        }
        let pred_set = as_set(p);
        for (t, cat) in gold_set.iter().zip(categorize_overlap(record)) {
            if pred_set.binary_search(t).is_err() {
                *out.fn_counts.entry(cat).or_default() += 1;
            }
        }
    }
    out
}

/// Metrics file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub prf: Prf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_breakdown: Option<ErrorBreakdown>,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.prf;
        writeln!(f, "{:<20}{:>10}", "precision", format!("{:.4}", p.precision))?;
        writeln!(f, "{:<20}{:>10}", "recall", format!("{:.4}", p.recall))?;
        writeln!(f, "{:<20}{:>10}", "f1", format!("{:.4}", p.f1))?;
        writeln!(f, "{:<20}{:>10}", "tp", p.tp)?;
        writeln!(f, "{:<20}{:>10}", "fp", p.fp)?;
        write!(f, "{:<20}{:>10}", "fn", p.fn_)?;
        if let Some(b) = &self.error_breakdown {
            write!(f, "\n\nfalse positives")?;
            for (c, n) in &b.fp_counts {
                write!(f, "\n  {:<18}{:>10}", json_name(c), n)?;
            }
            write!(f, "\nfalse negatives")?;
            for (c, n) in &b.fn_counts {
                write!(f, "\n  {:<18}{:>10}", json_name(c), n)?;
            }
        }
        Ok(())
    }
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}
