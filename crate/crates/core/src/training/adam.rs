use crate::dataio::PAD_INDEX;
use crate::model::{GradStore, ModelParams};
use crate::numerics::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments per parameter tensor, in
/// [`ModelParams::named_tensors`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .named_tensors()
            .into_iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }
}

/// One bias-corrected Adam update of `param` in place. `t` is the 1-based
/// step number.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    (beta1, beta2, eps): (f64, f64, f64),
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one step to every tensor. All embedding rows are updated (moments
/// keep decaying for rows without gradient) unless `train_embeddings` is
/// false; the `<pad>` row is reset to zero afterwards.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradStore,
    state: &mut OptimizerState,
    lr: f64,
    train_embeddings: bool,
) {
    state.step += 1;
    let t = state.step;
    let betas = (state.beta1, state.beta2, state.epsilon);
    let (ms, vs) = (&mut state.m, &mut state.v);

    if train_embeddings {
        let dense = grads.embedding_dense();
        adam_update(
            params.embedding.data_mut(),
            dense.data(),
            ms[0].data_mut(),
            vs[0].data_mut(),
            t,
            lr,
            betas,
        );
        params.embedding.row_mut(PAD_INDEX).fill(0.0);
    }

    let mut net_grads = Vec::new();
    grads.net.visit(|_, g| net_grads.push(g));
    let mut i = 0;
    params.net.visit_mut(|_, p| {
        let slot = i + 1;
        adam_update(
            p.data_mut(),
            net_grads[i].data(),
            ms[slot].data_mut(),
            vs[slot].data_mut(),
            t,
            lr,
            betas,
        );
        i += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // loss θ², θ = 1, gradient 2
        let mut theta = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut theta, &[2.0], &mut m, &mut v, 1, 1e-3, (BETA1, BETA2, EPSILON));
        assert!((theta[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn hand_computed_second_step() {
        let mut theta = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        let cfg = (BETA1, BETA2, EPSILON);
        adam_update(&mut theta, &[2.0], &mut m, &mut v, 1, 0.1, cfg);
        let theta1 = theta[0];
        assert!((theta1 - 0.9).abs() < 1e-8);
        let g2 = 2.0 * theta1;
        adam_update(&mut theta, &[g2], &mut m, &mut v, 2, 0.1, cfg);
        let m2 = 0.9 * 0.2 + 0.1 * g2;
        let v2 = 0.999 * 0.004 + 0.001 * g2 * g2;
        let expected = theta1 - 0.1 * (m2 / 0.19) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((theta[0] - expected).abs() < 1e-12);
    }

    fn params() -> ModelParams {
        let h = Hyperparams {
            d_e: 3,
            d_h: 2,
            d_r: 2,
            ..Default::default()
        };
        ModelParams::init(5, &h, None, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let mut state = OptimizerState::new(&p);
        let g = GradStore::zeros_like(&p);
        adam_step(&mut p, &g, &mut state, 1e-3, true);
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn pad_row_stays_zero_and_frozen_embeddings_stay_put() {
        let mut p = params();
        let mut state = OptimizerState::new(&p);
        let mut g = GradStore::zeros_like(&p);
        g.add_embedding_row(PAD_INDEX, &[1.0, 1.0, 1.0]);
        g.add_embedding_row(3, &[1.0, -1.0, 0.5]);
        let before = p.embedding.clone();
        adam_step(&mut p, &g, &mut state, 1e-2, true);
        assert!(p.embedding.row(PAD_INDEX).iter().all(|&x| x == 0.0));
        assert_ne!(p.embedding.row(3), before.row(3));

        let mut q = params();
        let mut state = OptimizerState::new(&q);
        let before = q.embedding.clone();
        adam_step(&mut q, &g, &mut state, 1e-2, false);
        assert_eq!(q.embedding, before);
    }
}
