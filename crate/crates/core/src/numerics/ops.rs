//! Forward and backward passes for the dense primitives the model is built from.
//!
//! Each `*_backward` takes the upstream gradient of a scalar objective with
//! respect to the op's output and either returns or accumulates the gradients
//! with respect to the op's inputs.

use rand::Rng;

use super::tensor::{axpy, dot, ShapeError, Tensor};

/// Floor applied inside `log` by the cross-entropy.
pub const LOG_EPSILON: f64 = 1e-12;

fn check_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(), ShapeError> {
    if w.ndim() != 2 {
        return Err(ShapeError::new("affine", format!("weight must be 2-D, got {:?}", w.shape())));
    }
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    if b.shape() != [out] {
        return Err(ShapeError::new(
            "affine",
            format!("bias {:?} does not match weight {:?}", b.shape(), w.shape()),
        ));
    }
    if x.ndim() == 0 || x.ndim() > 2 || x.cols() != inp {
        return Err(ShapeError::new(
            "affine",
            format!("input {:?} does not match weight {:?}", x.shape(), w.shape()),
        ));
    }
    Ok(())
}

/// `W x + b` for a vector `x`, or row-wise `x Wᵀ + b` for a matrix of inputs.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, ShapeError> {
    check_affine(x, w, b)?;
    let out = w.shape()[0];
    let n = x.rows();
    let mut data = Vec::with_capacity(n * out);
    for i in 0..n {
        let xi = x.row(i);
        for (k, &bk) in b.data().iter().enumerate() {
            data.push(bk + dot(w.row(k), xi));
        }
    }
    let shape = if x.ndim() == 1 { vec![out] } else { vec![n, out] };
    Tensor::new(shape, data)
}

/// Accumulates `dW`, `db` and returns `dx`.
pub fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Result<Tensor, ShapeError> {
    let out = w.shape()[0];
    if grad_out.cols() != out || grad_out.rows() != x.rows() {
        return Err(ShapeError::new(
            "affine_backward",
            format!("grad {:?} vs input {:?}, weight {:?}", grad_out.shape(), x.shape(), w.shape()),
        ));
    }
    if dw.shape() != w.shape() || db.shape() != [out] {
        return Err(ShapeError::new("affine_backward", "gradient buffers do not match weight"));
    }
    let mut dx = Tensor::zeros(x.shape());
    for i in 0..x.rows() {
        let xi = x.row(i);
        let gi = grad_out.row(i);
        for (k, &g) in gi.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db.data_mut()[k] += g;
            axpy(dw.row_mut(k), g, xi);
            axpy(dx.row_mut(i), g, w.row(k));
        }
    }
    Ok(dx)
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient passes where the input was strictly positive; the subgradient at 0 is 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// (outer, axis, inner) extents for reducing over `axis`.
fn axis_extents(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), ShapeError> {
    if axis >= shape.len() {
        return Err(ShapeError::new("softmax", format!("axis {axis} for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Softmax along `axis`, stabilized by subtracting the maximum.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor, ShapeError> {
    let (outer, len, inner) = axis_extents(x.shape(), axis)?;
    let mut y = x.clone();
    let data = y.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| data[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (data[idx(k)] - max).exp();
                data[idx(k)] = e;
                total += e;
            }
            for k in 0..len {
                data[idx(k)] /= total;
            }
        }
    }
    Ok(y)
}

/// In-place softmax of a single slice.
pub fn softmax_slice(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Given the softmax output `y` and `dL/dy`, returns `dL/dx`.
pub fn softmax_backward(y: &Tensor, grad_out: &Tensor, axis: usize) -> Result<Tensor, ShapeError> {
    if y.shape() != grad_out.shape() {
        return Err(ShapeError::new("softmax_backward", "gradient shape differs from output"));
    }
    let (outer, len, inner) = axis_extents(y.shape(), axis)?;
    let mut dx = Tensor::zeros(y.shape());
    let (yd, gd) = (y.data(), grad_out.data());
    let out = dx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let inner_prod: f64 = (0..len).map(|k| yd[idx(k)] * gd[idx(k)]).sum();
            for k in 0..len {
                out[idx(k)] = yd[idx(k)] * (gd[idx(k)] - inner_prod);
            }
        }
    }
    Ok(dx)
}

/// `-Σ gold_k · log(max(pred_k, ε))`, summed over every element.
pub fn cross_entropy(pred: &Tensor, gold: &Tensor) -> Result<f64, ShapeError> {
    if pred.shape() != gold.shape() {
        return Err(ShapeError::new(
            "cross_entropy",
            format!("{:?} vs {:?}", pred.shape(), gold.shape()),
        ));
    }
    Ok(pred
        .data()
        .iter()
        .zip(gold.data())
        .filter(|(_, &g)| g != 0.0)
        .map(|(&p, &g)| -g * p.max(LOG_EPSILON).ln())
        .sum())
}

/// `dL/dpred`; zero where the log clamp is active.
pub fn cross_entropy_backward(pred: &Tensor, gold: &Tensor) -> Result<Tensor, ShapeError> {
    if pred.shape() != gold.shape() {
        return Err(ShapeError::new("cross_entropy_backward", "shape mismatch"));
    }
    let mut g = Tensor::zeros(pred.shape());
    for ((o, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(gold.data()) {
        if t != 0.0 && p > LOG_EPSILON {
            *o = -t / p;
        }
    }
    Ok(g)
}

/// `(W u + b)ᵀ v`.
pub fn bilinear_score(u: &Tensor, w: &Tensor, v: &Tensor, b: &Tensor) -> Result<f64, ShapeError> {
    let d = u.len();
    if u.ndim() != 1 || v.shape() != [d] || w.shape() != [d, d] || b.shape() != [d] {
        return Err(ShapeError::new(
            "bilinear_score",
            format!(
                "u {:?}, W {:?}, v {:?}, b {:?}",
                u.shape(),
                w.shape(),
                v.shape(),
                b.shape()
            ),
        ));
    }
    let vd = v.data();
    Ok((0..d).map(|k| (dot(w.row(k), u.data()) + b.data()[k]) * vd[k]).sum())
}

#[derive(Clone, Debug)]
pub struct BilinearGrads {
    pub du: Tensor,
    pub dw: Tensor,
    pub dv: Tensor,
    pub db: Tensor,
}

/// Gradients of `grad · bilinear_score(u, W, v, b)`.
pub fn bilinear_backward(
    u: &Tensor,
    w: &Tensor,
    v: &Tensor,
    b: &Tensor,
    grad: f64,
) -> Result<BilinearGrads, ShapeError> {
    bilinear_score(u, w, v, b)?;
    let d = u.len();
    let mut du = Tensor::zeros(&[d]);
    let mut dw = Tensor::zeros(&[d, d]);
    let mut dv = Tensor::zeros(&[d]);
    let mut db = Tensor::zeros(&[d]);
    for k in 0..d {
        let vk = v.data()[k];
        dv.data_mut()[k] = grad * (dot(w.row(k), u.data()) + b.data()[k]);
        db.data_mut()[k] = grad * vk;
        axpy(dw.row_mut(k), grad * vk, u.data());
        axpy(du.data_mut(), grad * vk, w.row(k));
    }
    Ok(BilinearGrads { du, dw, dv, db })
}

/// Output of [`dropout`]: the masked tensor and the per-element multiplier
/// applied (0, 1/(1-rate), or 1 at inference).
#[derive(Clone, Debug)]
pub struct Dropout {
    pub output: Tensor,
    pub scale: Vec<f64>,
}

/// Inverted dropout. Identity when `training` is false or `rate` is 0.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R, training: bool) -> Dropout {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    if !training || rate == 0.0 {
        return Dropout {
            output: x.clone(),
            scale: vec![1.0; x.len()],
        };
    }
    let keep = 1.0 / (1.0 - rate);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut output = x.clone();
    for (o, s) in output.data_mut().iter_mut().zip(&scale) {
        *o *= s;
    }
    Dropout { output, scale }
}

pub fn dropout_backward(scale: &[f64], grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, s) in g.data_mut().iter_mut().zip(scale) {
        *gv *= s;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff::{central_difference, relative_error};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn affine_identity_and_swap() {
        let x = Tensor::vector(vec![3.0, 4.0]);
        let y = affine(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
        let w = Tensor::matrix(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let y = affine(&x, &w, &Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[5.0, 4.0]);
    }

    #[test]
    fn affine_rejects_bad_shapes() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(affine(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).is_err());
        assert!(affine(&Tensor::vector(vec![1.0, 2.0]), &Tensor::identity(2), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn affine_gradients_match_finite_differences() {
        let mut r = rng();
        let x = Tensor::uniform(&[3, 4], 1.0, &mut r);
        let w = Tensor::uniform(&[2, 4], 1.0, &mut r);
        let b = Tensor::uniform(&[2], 1.0, &mut r);
        let upstream = Tensor::uniform(&[3, 2], 1.0, &mut r);
        let objective = |x: &Tensor, w: &Tensor, b: &Tensor| {
            let y = affine(x, w, b).unwrap();
            y.data().iter().zip(upstream.data()).map(|(a, g)| a * g).sum::<f64>()
        };
        let mut dw = Tensor::zeros_like(&w);
        let mut db = Tensor::zeros_like(&b);
        let dx = affine_backward(&x, &w, &upstream, &mut dw, &mut db).unwrap();
        let num_w = central_difference(&w, 1e-5, |p| objective(&x, p, &b));
        let num_b = central_difference(&b, 1e-5, |p| objective(&x, &w, p));
        let num_x = central_difference(&x, 1e-5, |p| objective(p, &w, &b));
        assert!(relative_error(&dw, &num_w) < 1e-6);
        assert!(relative_error(&db, &num_b) < 1e-6);
        assert!(relative_error(&dx, &num_x) < 1e-6);
    }

    #[test]
    fn relu_forward_and_gradient() {
        let y = relu(&Tensor::vector(vec![-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::vector(vec![-3.0, -0.5, -1.0]);
        assert_eq!(relu(&x).data(), &[0.0; 3]);
        assert_eq!(relu_backward(&x, &Tensor::vector(vec![1.0; 3])).data(), &[0.0; 3]);
        let at_zero = relu_backward(&Tensor::vector(vec![0.0]), &Tensor::vector(vec![1.0]));
        assert_eq!(at_zero.data(), &[0.0]);

        let mut r = rng();
        let x = Tensor::uniform(&[10], 1.0, &mut r);
        assert!(x.data().iter().all(|v| v.abs() > 1e-3));
        let up = Tensor::uniform(&[10], 1.0, &mut r);
        let analytic = relu_backward(&x, &up);
        let numeric = central_difference(&x, 1e-5, |p| {
            relu(p).data().iter().zip(up.data()).map(|(a, g)| a * g).sum()
        });
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn softmax_basics() {
        let y = softmax(&Tensor::vector(vec![0.0, 0.0]), 0).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
        let y = softmax(&Tensor::vector(vec![1000.0, 0.0]), 0).unwrap();
        assert!(y.all_finite());
        assert_abs_diff_eq!(y.data()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y.data()[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_over_middle_axis_sums_to_one() {
        let mut r = rng();
        let x = Tensor::uniform(&[2, 3, 4], 5.0, &mut r);
        let y = softmax(&x, 1).unwrap();
        for a in 0..2 {
            for c in 0..4 {
                let s: f64 = (0..3).map(|b| y.get(&[a, b, c])).sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
        assert!(y.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let mut r = rng();
        let x = Tensor::uniform(&[3, 4], 1.0, &mut r);
        let up = Tensor::uniform(&[3, 4], 1.0, &mut r);
        let y = softmax(&x, 1).unwrap();
        let analytic = softmax_backward(&y, &up, 1).unwrap();
        let numeric = central_difference(&x, 1e-5, |p| {
            let y = softmax(p, 1).unwrap();
            y.data().iter().zip(up.data()).map(|(a, g)| a * g).sum()
        });
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn cross_entropy_values() {
        let gold = Tensor::vector(vec![0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&gold, &gold).unwrap(), 0.0);
        let uniform3 = Tensor::vector(vec![1.0 / 3.0; 3]);
        assert_abs_diff_eq!(cross_entropy(&uniform3, &gold).unwrap(), 3f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(cross_entropy(&uniform3, &gold).unwrap(), 1.0986, epsilon = 1e-4);
        let gold4 = Tensor::vector(vec![0.0, 0.0, 0.0, 1.0]);
        let uniform4 = Tensor::vector(vec![0.25; 4]);
        assert_abs_diff_eq!(cross_entropy(&uniform4, &gold4).unwrap(), 1.3863, epsilon = 1e-4);
        let zero = Tensor::vector(vec![1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(cross_entropy(&zero, &gold).unwrap(), -LOG_EPSILON.ln());
    }

    #[test]
    fn cross_entropy_backward_matches_finite_differences() {
        let pred = Tensor::vector(vec![0.2, 0.5, 0.3]);
        let gold = Tensor::vector(vec![0.0, 1.0, 0.0]);
        let analytic = cross_entropy_backward(&pred, &gold).unwrap();
        let numeric = central_difference(&pred, 1e-6, |p| cross_entropy(p, &gold).unwrap());
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn bilinear_hand_cases() {
        let u = Tensor::vector(vec![1.0, 0.0]);
        let v = Tensor::vector(vec![0.0, 1.0]);
        let swap = Tensor::matrix(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let zb = Tensor::zeros(&[2]);
        assert_eq!(bilinear_score(&u, &swap, &v, &zb).unwrap(), 1.0);
        assert_eq!(bilinear_score(&u, &Tensor::zeros(&[2, 2]), &v, &zb).unwrap(), 0.0);
        assert!(bilinear_score(&u, &Tensor::zeros(&[3, 3]), &v, &zb).is_err());
    }

    #[test]
    fn bilinear_zero_weight_isolates_prior_term() {
        let mut r = rng();
        for _ in 0..20 {
            let u = Tensor::uniform(&[5], 1.0, &mut r);
            let v = Tensor::uniform(&[5], 1.0, &mut r);
            let b = Tensor::uniform(&[5], 1.0, &mut r);
            let s = bilinear_score(&u, &Tensor::zeros(&[5, 5]), &v, &b).unwrap();
            assert_abs_diff_eq!(s, dot(b.data(), v.data()), epsilon = 1e-14);
        }
    }

    #[test]
    fn bilinear_gradients_match_finite_differences() {
        let mut r = rng();
        let u = Tensor::uniform(&[4], 1.0, &mut r);
        let w = Tensor::uniform(&[4, 4], 1.0, &mut r);
        let v = Tensor::uniform(&[4], 1.0, &mut r);
        let b = Tensor::uniform(&[4], 1.0, &mut r);
        let g = bilinear_backward(&u, &w, &v, &b, 1.0).unwrap();
        let h = 1e-5;
        let nu = central_difference(&u, h, |p| bilinear_score(p, &w, &v, &b).unwrap());
        let nw = central_difference(&w, h, |p| bilinear_score(&u, p, &v, &b).unwrap());
        let nv = central_difference(&v, h, |p| bilinear_score(&u, &w, p, &b).unwrap());
        let nb = central_difference(&b, h, |p| bilinear_score(&u, &w, &v, p).unwrap());
        assert!(relative_error(&g.du, &nu) < 1e-6);
        assert!(relative_error(&g.dw, &nw) < 1e-6);
        assert!(relative_error(&g.dv, &nv) < 1e-6);
        assert!(relative_error(&g.db, &nb) < 1e-6);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut r = rng();
        let x = Tensor::uniform(&[50], 1.0, &mut r);
        assert_eq!(dropout(&x, 0.0, &mut r, true).output, x);
        assert_eq!(dropout(&x, 0.5, &mut r, false).output, x);
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut r = rng();
        let x = Tensor::vector(vec![0.5, -1.0, 2.0, 1.5]);
        let draws = 200_000;
        let mut mean = Tensor::zeros(&[4]);
        for _ in 0..draws {
            mean.add_assign(&dropout(&x, 0.5, &mut r, true).output);
        }
        mean.scale(1.0 / draws as f64);
        for (m, v) in mean.data().iter().zip(x.data()) {
            assert!((m - v).abs() <= 0.02 * v.abs(), "{m} vs {v}");
        }
    }

    #[test]
    fn dropout_backward_uses_mask() {
        let mut r = rng();
        let x = Tensor::uniform(&[20], 1.0, &mut r);
        let d = dropout(&x, 0.3, &mut r, true);
        let g = dropout_backward(&d.scale, &Tensor::vector(vec![1.0; 20]));
        for (gv, (o, xv)) in g.data().iter().zip(d.output.data().iter().zip(x.data())) {
            assert_abs_diff_eq!(*o, gv * xv, epsilon = 1e-15);
        }
    }
}
