use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hyper::Hyperparams;
use super::params::ModelParams;
use crate::dataio::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FORMAT_VERSION: u32 = 1;

/// Serialized model: hyperparameters, vocabulary and every tensor by name.
/// Floats are written in shortest round-trip form, so reloading is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hyperparams: Hyperparams,
    pub vocab: Vocabulary,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, hyper: &Hyperparams, vocab: &Vocabulary) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            hyperparams: hyper.clone(),
            vocab: vocab.clone(),
            tensors: params
                .named_tensors()
                .into_iter()
                .map(|(name, t)| (name, t.clone()))
                .collect(),
        }
    }

    /// Rebuilds parameters, checking that every expected tensor is present
    /// with the right shape and that no extra tensors are stored.
    pub fn params(&self) -> Result<ModelParams> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.hyperparams.validate()?;
        let mut params = ModelParams::zeros(self.vocab.len(), &self.hyperparams);
        let mut seen = 0;
        let mut failure = None;
        params.visit_mut(|name, t| {
            if failure.is_some() {
                return;
            }
            match self.tensors.get(name) {
                None => failure = Some(format!("missing tensor '{name}'")),
                Some(stored) if stored.shape() != t.shape() => {
                    failure = Some(format!(
                        "tensor '{name}' has shape {:?}, expected {:?}",
                        stored.shape(),
                        t.shape()
                    ))
                }
                Some(stored) => {
                    *t = stored.clone();
                    seen += 1;
                }
            }
        });
        if let Some(msg) = failure {
            return Err(Error::Checkpoint(msg));
        }
        if seen != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} unexpected tensors for variant {:?}",
                self.tensors.len() - seen,
                self.hyperparams.variant
            )));
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(params)
    }
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, hyper: &Hyperparams, vocab: &Vocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &Checkpoint::new(params, hyper, vocab))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Hyperparams, Vocabulary)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let params = ckpt.params()?;
    Ok((params, ckpt.hyperparams, ckpt.vocab))
}
