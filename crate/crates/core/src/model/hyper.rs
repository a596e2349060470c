use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Head configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Two BIO taggers and a biaffine dependency scorer.
    #[default]
    Biaffine,
    /// Dependency scores from a ReLU-activated linear layer over concatenated
    /// aspect and opinion representations.
    Concat,
    /// One 5-way tagger over {B-AP, I-AP, B-OP, I-OP, O} on a single shared
    /// representation, with the biaffine scorer.
    Collapsed,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "biaffine" => Ok(Variant::Biaffine),
            "concat" => Ok(Variant::Concat),
            "collapsed" => Ok(Variant::Collapsed),
            other => Err(format!("unknown variant '{other}' (expected biaffine, concat or collapsed)")),
        }
    }
}

/// Form of the L2 penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L2Mode {
    /// `‖θ‖₂²`
    #[default]
    Squared,
    /// `‖θ‖₂`
    Unsquared,
}

/// Validation quantity used for early stopping and checkpoint selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    /// Exact-match triplet F1, higher is better.
    #[default]
    F1,
    /// Total validation loss, lower is better.
    Loss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub d_e: usize,
    pub d_h: usize,
    pub d_r: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub variant: Variant,
    pub l2_mode: L2Mode,
    pub freeze_embeddings: bool,
    pub selection_metric: SelectionMetric,
    pub min_count: usize,
    /// Parameters are initialized uniformly in `[-init_bound, init_bound]`.
    pub init_bound: f64,
    /// Minimum winning probability for a cell to become a pivot; off by default.
    pub pivot_threshold: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d_e: 300,
            d_h: 300,
            d_r: 100,
            alpha: 1.0,
            gamma: 1e-5,
            dropout_rate: 0.5,
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 5,
            max_epochs: 100,
            variant: Variant::Biaffine,
            l2_mode: L2Mode::Squared,
            freeze_embeddings: false,
            selection_metric: SelectionMetric::F1,
            min_count: 1,
            init_bound: 0.1,
            pivot_threshold: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_e == 0 || self.d_h == 0 || self.d_r == 0 {
            return fail("dimensions must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.gamma >= 0.0) {
            return fail("alpha and gamma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if self.init_bound.is_nan() || self.init_bound < 0.0 {
            return fail("init_bound must be non-negative");
        }
        if let Some(t) = self.pivot_threshold {
            if !(0.0..=1.0).contains(&t) {
                return fail("pivot_threshold must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let h = Hyperparams::default();
        assert_eq!((h.d_e, h.d_h, h.d_r), (300, 300, 100));
        assert_eq!(h.alpha, 1.0);
        assert_eq!(h.gamma, 1e-5);
        assert_eq!(h.dropout_rate, 0.5);
        assert_eq!(h.learning_rate, 1e-3);
        assert_eq!(h.batch_size, 32);
        assert_eq!(h.patience, 5);
        assert!(h.validate().is_ok());
    }

    #[test]
    fn rejects_invalid_values() {
        let bad = [
            Hyperparams { d_r: 0, ..Default::default() },
            Hyperparams { alpha: -1.0, ..Default::default() },
            Hyperparams { dropout_rate: 1.0, ..Default::default() },
            Hyperparams { batch_size: 0, ..Default::default() },
        ];
        for h in bad {
            assert!(h.validate().is_err());
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let h: Hyperparams = serde_json::from_str(r#"{"variant":"concat","d_r":7}"#).unwrap();
        assert_eq!(h.variant, Variant::Concat);
        assert_eq!(h.d_r, 7);
        assert_eq!(h.d_e, 300);
        assert!(serde_json::from_str::<Hyperparams>(r#"{"bogus":1}"#).is_err());
    }
}
