//! Network parameters, forward and backward passes, and checkpoints.

mod backward;
mod checkpoint;
mod forward;
mod hyper;
mod params;

pub use backward::{backward, OutputGrads, TagLogitGrads};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use forward::{forward, forward_inference, DepCache, ForwardTrace, Projection, TagProbs};
pub use hyper::{Hyperparams, L2Mode, SelectionMetric, Variant};
pub use params::{Affine, DepHead, GradStore, ModelParams, Network, TagHead, EMBEDDING_NAME};
