//! Dense `f64` tensors and the handful of differentiable operations the model
//! needs. Backward passes are written out by hand for a fixed architecture;
//! there is no tape.

pub mod finite_diff;
mod lstm;
mod ops;
mod tensor;

pub use lstm::{
    lstm_backward, lstm_cell, lstm_cell_backward, lstm_forward, LstmCellGrads, LstmRun, LstmStep, LstmWeights,
};
pub use ops::{
    affine, affine_backward, bilinear_backward, bilinear_score, cross_entropy, cross_entropy_backward, dropout,
    dropout_backward, relu, relu_backward, softmax, softmax_backward, softmax_slice, BilinearGrads, Dropout,
    LOG_EPSILON,
};
pub(crate) use tensor::{axpy, dot};
pub use tensor::{ShapeError, Tensor};
