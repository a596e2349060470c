//! Pretrained word vectors in the plain text format used by GloVe: one token
//! per line followed by its whitespace-separated components.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD_INDEX, UNK_INDEX};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Bound of the uniform draw for rows not covered by the pretrained file.
pub const UNKNOWN_ROW_BOUND: f64 = 0.1;

/// Pretrained rows for the tokens of one vocabulary; `None` where the file
/// had no vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedRows {
    pub dim: usize,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl PretrainedRows {
    pub fn found(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    /// Embedding matrix (`|V| × dim`): pretrained rows copied, the rest (and
    /// `<unk>`) uniform in `[-bound, bound]`, `<pad>` all zeros.
    pub fn to_matrix<R: Rng + ?Sized>(&self, bound: f64, rng: &mut R) -> Tensor {
        let mut m = Tensor::uniform(&[self.rows.len(), self.dim], bound, rng);
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(v) = row {
                m.row_mut(i).copy_from_slice(v);
            }
        }
        m.row_mut(PAD_INDEX).fill(0.0);
        m
    }
}

/// Streams an embedding file keeping only vectors for tokens in `vocab`.
pub fn read_pretrained(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize) -> Result<PretrainedRows> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pretrained_from(BufReader::new(file), path, vocab, dim)
}

pub fn read_pretrained_from<R: BufRead>(
    reader: R,
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<PretrainedRows> {
    let mut rows = vec![None; vocab.len()];
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && is_header(&fields) {
            continue;
        }
        // tokens may contain spaces; the last `dim` fields are the vector
        let split = fields.len().saturating_sub(dim).max(1);
        let (token_parts, values) = fields.split_at(split);
        let token = token_parts.join(" ");
        if values.len() != dim || token_parts[1..].iter().any(|f| f.parse::<f64>().is_ok()) {
            return Err(Error::EmbeddingDim {
                token: fields[0].to_string(),
                expected: dim,
                found: fields.len() - 1,
            });
        }
        let Some(vi) = vocab.get(&token) else { continue };
        if vi == PAD_INDEX || vi == UNK_INDEX {
            continue;
        }
        let parsed = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("token '{token}': {e}"),
            })?;
        rows[vi] = Some(parsed);
    }
    Ok(PretrainedRows { dim, rows })
}

/// word2vec-style `count dim` first line.
fn is_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
}

/// Reads `path` and materializes the embedding matrix for `vocab`.
pub fn load_embeddings<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<Tensor> {
    Ok(read_pretrained(path, vocab, dim)?.to_matrix(UNKNOWN_ROW_BOUND, rng))
}
