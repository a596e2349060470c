//! Losses, the Adam optimizer, the epoch loop with early stopping, multi-seed
//! runs and finite-difference gradient checks.

mod adam;
mod gradcheck;
mod loss;
mod multirun;
mod trainer;

pub use adam::{adam_step, adam_update, OptimizerState, BETA1, BETA2, EPSILON};
pub use gradcheck::{
    gradient_check, micro_setup, run_gradcheck, GradCheckReport, TensorCheck, GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
pub use loss::{
    add_regularizer_grad, batch_loss, batch_objective, dependency_logit_grad, dependency_loss, joint_loss,
    regularizer, sentence_objective, tagger_logit_grad, tagger_loss, tagging_loss, Example, LossReport,
};
pub use multirun::{mean_prf, multi_run, MeanPrf, MultiRunReport, RunArtifacts, RunResult, Splits};
pub use trainer::{examples, train, validate, EarlyStopping, EpochRecord, StopReason, TrainLog, TrainOutcome};
