use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, batch_objective, Example};
use crate::dataio::encode_gold;
use crate::error::Result;
use crate::model::{Hyperparams, ModelParams, Variant};
use crate::numerics::finite_diff::relative_error_slices;
use crate::types::{SentenceRecord, Sentiment, Span, Triplet};

/// Largest accepted relative error between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub relative_error: f64,
    pub analytic_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub variant: Variant,
    pub tensors: Vec<TensorCheck>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

/// Micro model: vocabulary of 10, two sentences of 5 tokens, `d_e = d_h = 4`,
/// `d_r = 3`, dropout and regularization active.
pub fn micro_setup(seed: u64, variant: Variant) -> (ModelParams, Hyperparams, Vec<Example>, Vec<u64>) {
    let hyper = Hyperparams {
        d_e: 4,
        d_h: 4,
        d_r: 3,
        gamma: 1e-3,
        variant,
        init_bound: 0.5,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(10, &hyper, None, &mut rng);
    let records = [
        SentenceRecord::new(
            "m0",
            vec!["w".into(); 5],
            vec![
                Triplet::new(Span::new(1, 2), Span::single(0), Sentiment::Pos),
                Triplet::new(Span::single(4), Span::single(3), Sentiment::Neg),
            ],
        ),
        SentenceRecord::new(
            "m1",
            vec!["w".into(); 5],
            vec![Triplet::new(Span::single(0), Span::new(2, 3), Sentiment::Neu)],
        ),
    ];
    let examples = records
        .iter()
        .map(|r| Example {
            ids: (0..5).map(|_| rng.gen_range(2..10)).collect(),
            gold: encode_gold(r),
        })
        .collect();
    let seeds = vec![rng.gen(), rng.gen()];
    (params, hyper, examples, seeds)
}

/// Compares the analytic gradient of the total batch loss with central
/// differences, tensor by tensor.
pub fn gradient_check(
    params: &ModelParams,
    hyper: &Hyperparams,
    examples: &[Example],
    dropout_seeds: &[u64],
    h: f64,
) -> Result<Vec<TensorCheck>> {
    let batch: Vec<&Example> = examples.iter().collect();
    let (_, grads) = batch_objective(params, hyper, &batch, Some(dropout_seeds))?;
    let analytic = grads.named_dense();
    let mut work = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (idx, (name, grad)) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut eval = |delta: f64| -> Result<f64> {
                let mut i = 0;
                work.visit_mut(|_, t| {
                    if i == idx {
                        t.data_mut()[e] += delta;
                    }
                    i += 1;
                });
                Ok(batch_loss(&work, hyper, &batch, Some(dropout_seeds))?.l_total)
            };
            let plus = eval(h)?;
            let minus = eval(-2.0 * h)?;
            eval(h)?;
            *slot = (plus - minus) / (2.0 * h);
        }
        out.push(TensorCheck {
            name: name.clone(),
            relative_error: relative_error_slices(grad.data(), &numeric),
            analytic_norm: grad.squared_norm().sqrt(),
        });
    }
    Ok(out)
}

/// Gradient check of the full model on the micro setup.
pub fn run_gradcheck(seed: u64, variant: Variant) -> Result<GradCheckReport> {
    let (params, hyper, examples, seeds) = micro_setup(seed, variant);
    let tensors = gradient_check(&params, &hyper, &examples, &seeds, GRADCHECK_STEP)?;
    let max_relative_error = tensors.iter().map(|t| t.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        seed,
        variant,
        tensors,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{L2Mode, Network};

    #[test]
    fn all_variants_pass() {
        for variant in [Variant::Biaffine, Variant::Concat, Variant::Collapsed] {
            let r = run_gradcheck(0, variant).unwrap();
            assert!(r.passed(), "{variant:?}: {:?}", r.tensors);
        }
    }

    #[test]
    fn unsquared_regularizer_gradient() {
        let (params, mut hyper, examples, seeds) = micro_setup(1, Variant::Biaffine);
        hyper.l2_mode = L2Mode::Unsquared;
        hyper.gamma = 0.1;
        let checks = gradient_check(&params, &hyper, &examples, &seeds, GRADCHECK_STEP).unwrap();
        assert!(checks.iter().all(|c| c.relative_error < GRADCHECK_TOLERANCE), "{checks:?}");
    }

    #[test]
    fn zero_alpha_isolates_dependency_branch() {
        let (params, mut hyper, examples, seeds) = micro_setup(2, Variant::Biaffine);
        hyper.alpha = 0.0;
        hyper.gamma = 0.0;
        let batch: Vec<&Example> = examples.iter().collect();
        let (_, g) = batch_objective(&params, &hyper, &batch, Some(&seeds)).unwrap();
        g.net.visit(|name, t| {
            if Network::is_dependency_param(name) {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name} received loss gradient");
            }
        });
        hyper.gamma = 1e-3;
        let (_, g) = batch_objective(&params, &hyper, &batch, Some(&seeds)).unwrap();
        let mut dep_params = Vec::new();
        params.net.visit(|name, t| {
            if Network::is_dependency_param(name) {
                dep_params.push(t.clone());
            }
        });
        let mut i = 0;
        g.net.visit(|name, t| {
            if Network::is_dependency_param(name) {
                // only the regularizer term 2γθ remains
                let mut expected = dep_params[i].clone();
                expected.scale(2.0 * hyper.gamma);
                assert!(t.max_abs_diff(&expected) < 1e-15, "{name}");
                i += 1;
            }
        });
    }
}
