//! Central finite differences, used as an independent oracle for analytic gradients.

use super::tensor::Tensor;

/// Numerical gradient of `f` at `x`: `(f(x + h·e_i) - f(x - h·e_i)) / 2h` per entry.
pub fn central_difference<F>(x: &Tensor, h: f64, mut f: F) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// `‖a - b‖₂ / max(‖a‖₂, ‖b‖₂)`, and 0 when both are zero.
///
/// Measured over the whole tensor, so a handful of near-zero entries does
/// not dominate the comparison.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "relative_error shapes");
    relative_error_slices(analytic.data(), numeric.data())
}

pub fn relative_error_slices(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_square() {
        let x = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let g = central_difference(&x, 1e-5, |p| p.squared_norm());
        let expected = Tensor::vector(vec![2.0, -4.0, 1.0]);
        assert!(relative_error(&g, &expected) < 1e-9);
    }

    #[test]
    fn zero_vs_zero_is_exact() {
        let z = Tensor::zeros(&[3]);
        assert_eq!(relative_error(&z, &z), 0.0);
    }
}
