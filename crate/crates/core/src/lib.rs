pub mod dataio;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;
pub mod types;
pub mod cli;

pub use error::{Error, Result};
