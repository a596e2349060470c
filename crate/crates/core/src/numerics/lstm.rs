//! Standard LSTM cell (input, forget, output gates and a tanh candidate) and
//! unrolled forward/backward over a sequence.

use rand::Rng;

use super::tensor::{axpy, dot, ShapeError, Tensor};

/// Gate rows are stacked in the order input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights {
    /// `4H × input`
    pub w_ih: Tensor,
    /// `4H × H`
    pub w_hh: Tensor,
    /// `4H`
    pub bias: Tensor,
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(input: usize, hidden: usize, bound: f64, rng: &mut R) -> Self {
        LstmWeights {
            w_ih: Tensor::uniform(&[4 * hidden, input], bound, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias: Tensor::uniform(&[4 * hidden], bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w_ih.shape()[1]
    }

    fn check(&self) -> Result<(), ShapeError> {
        let h = self.w_hh.shape().get(1).copied().unwrap_or(0);
        let ok = self.w_ih.ndim() == 2
            && self.w_ih.shape()[0] == 4 * h
            && self.w_hh.shape() == [4 * h, h]
            && self.bias.shape() == [4 * h];
        if ok {
            Ok(())
        } else {
            Err(ShapeError::new(
                "lstm",
                format!(
                    "inconsistent weights w_ih {:?}, w_hh {:?}, bias {:?}",
                    self.w_ih.shape(),
                    self.w_hh.shape(),
                    self.bias.shape()
                ),
            ))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one time step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmStep {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    input_gate: Vec<f64>,
    forget_gate: Vec<f64>,
    candidate: Vec<f64>,
    output_gate: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[allow(clippy::needless_range_loop)]
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &LstmWeights,
) -> Result<LstmStep, ShapeError> {
    w.check()?;
    let hd = w.hidden();
    if x.len() != w.input() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(ShapeError::new(
            "lstm_cell",
            format!(
                "x {}, h {}, c {} for input {} hidden {hd}",
                x.len(),
                h_prev.len(),
                c_prev.len(),
                w.input()
            ),
        ));
    }
    let pre = |row: usize| w.bias.data()[row] + dot(w.w_ih.row(row), x) + dot(w.w_hh.row(row), h_prev);
    let mut step = LstmStep {
        h: vec![0.0; hd],
        c: vec![0.0; hd],
        input_gate: vec![0.0; hd],
        forget_gate: vec![0.0; hd],
        candidate: vec![0.0; hd],
        output_gate: vec![0.0; hd],
        tanh_c: vec![0.0; hd],
    };
    for k in 0..hd {
        let i = sigmoid(pre(k));
        let f = sigmoid(pre(hd + k));
        let g = pre(2 * hd + k).tanh();
        let o = sigmoid(pre(3 * hd + k));
        let c = f * c_prev[k] + i * g;
        let tc = c.tanh();
        step.input_gate[k] = i;
        step.forget_gate[k] = f;
        step.candidate[k] = g;
        step.output_gate[k] = o;
        step.c[k] = c;
        step.tanh_c[k] = tc;
        step.h[k] = o * tc;
    }
    Ok(step)
}

/// Gradients flowing out of one cell.
pub struct LstmCellGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Backward through one cell given `dL/dh_t` and `dL/dc_t`; weight gradients
/// are accumulated into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_backward(
    step: &LstmStep,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &[f64],
    w: &LstmWeights,
    grads: &mut LstmWeights,
) -> LstmCellGrads {
    let hd = w.hidden();
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, g, o, tc) = (
            step.input_gate[k],
            step.forget_gate[k],
            step.candidate[k],
            step.output_gate[k],
            step.tanh_c[k],
        );
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dc_total * g * i * (1.0 - i);
        dz[hd + k] = dc_total * c_prev[k] * f * (1.0 - f);
        dz[2 * hd + k] = dc_total * i * (1.0 - g * g);
        dz[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dc_total * f;
    }
    let mut dx = vec![0.0; x.len()];
    let mut dh_prev = vec![0.0; hd];
    for (row, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grads.bias.data_mut()[row] += d;
        axpy(grads.w_ih.row_mut(row), d, x);
        axpy(grads.w_hh.row_mut(row), d, h_prev);
        axpy(&mut dx, d, w.w_ih.row(row));
        axpy(&mut dh_prev, d, w.w_hh.row(row));
    }
    LstmCellGrads { dx, dh_prev, dc_prev }
}

/// Unrolled run over a sequence starting from zero states.
#[derive(Clone, Debug)]
pub struct LstmRun {
    pub steps: Vec<LstmStep>,
}

impl LstmRun {
    /// Hidden states as an `n × H` matrix.
    pub fn hidden_states(&self) -> Tensor {
        let hd = self.steps.first().map_or(0, |s| s.h.len());
        let data = self.steps.iter().flat_map(|s| s.h.iter().copied()).collect();
        Tensor::new(vec![self.steps.len(), hd], data).expect("consistent step sizes")
    }
}

/// Runs the cell over the rows of `xs` (`n × input`).
pub fn lstm_forward(xs: &Tensor, w: &LstmWeights) -> Result<LstmRun, ShapeError> {
    let hd = w.hidden();
    let zeros = vec![0.0; hd];
    let mut steps: Vec<LstmStep> = Vec::with_capacity(xs.rows());
    for t in 0..xs.rows() {
        let (h, c) = match steps.last() {
            Some(prev) => (prev.h.as_slice(), prev.c.as_slice()),
            None => (zeros.as_slice(), zeros.as_slice()),
        };
        let step = lstm_cell(xs.row(t), h, c, w)?;
        steps.push(step);
    }
    Ok(LstmRun { steps })
}

/// Backpropagation through time. `dhs` is `dL/dh_t` for every step (`n × H`);
/// returns `dL/dx_t` (`n × input`).
pub fn lstm_backward(run: &LstmRun, xs: &Tensor, dhs: &Tensor, w: &LstmWeights, grads: &mut LstmWeights) -> Tensor {
    let hd = w.hidden();
    let n = run.steps.len();
    let zeros = vec![0.0; hd];
    let mut dxs = Tensor::zeros(&[n, w.input()]);
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    for t in (0..n).rev() {
        let (h_prev, c_prev) = if t == 0 {
            (zeros.as_slice(), zeros.as_slice())
        } else {
            (run.steps[t - 1].h.as_slice(), run.steps[t - 1].c.as_slice())
        };
        let mut dh = dhs.row(t).to_vec();
        for (a, b) in dh.iter_mut().zip(&dh_next) {
            *a += b;
        }
        let g = lstm_cell_backward(&run.steps[t], xs.row(t), h_prev, c_prev, &dh, &dc_next, w, grads);
        dxs.row_mut(t).copy_from_slice(&g.dx);
        dh_next = g.dh_prev;
        dc_next = g.dc_prev;
    }
    dxs
}
