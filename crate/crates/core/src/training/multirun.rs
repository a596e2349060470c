use std::thread;

use serde::{Deserialize, Serialize};

use super::trainer::{train, TrainLog};
use crate::dataio::{PretrainedRows, Vocabulary};
use crate::decoding::predict;
use crate::error::{Error, Result};
use crate::evaluation::{score, Prf};
use crate::model::{Hyperparams, ModelParams};
use crate::types::{SentenceRecord, Triplet};

pub struct Splits<'a> {
    pub train: &'a [SentenceRecord],
    pub val: &'a [SentenceRecord],
    pub test: &'a [SentenceRecord],
}

/// Everything one seeded run produced, handed to the caller before it is dropped.
pub struct RunArtifacts<'a> {
    pub seed: u64,
    pub params: &'a ModelParams,
    pub log: &'a TrainLog,
    pub predictions: &'a [Vec<Triplet>],
    pub test: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub test: Prf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRunReport {
    pub runs: Vec<RunResult>,
    /// Arithmetic mean of the per-run scores.
    pub mean: MeanPrf,
}

pub fn mean_prf(runs: &[RunResult]) -> MeanPrf {
    let n = runs.len().max(1) as f64;
    MeanPrf {
        precision: runs.iter().map(|r| r.test.precision).sum::<f64>() / n,
        recall: runs.iter().map(|r| r.test.recall).sum::<f64>() / n,
        f1: runs.iter().map(|r| r.test.f1).sum::<f64>() / n,
    }
}

fn one_run(
    splits: &Splits<'_>,
    vocab: &Vocabulary,
    pretrained: Option<&PretrainedRows>,
    hyper: &Hyperparams,
    seed: u64,
    sink: &(dyn Fn(&RunArtifacts<'_>) -> Result<()> + Sync),
) -> Result<RunResult> {
    let outcome = train(splits.train, splits.val, vocab, pretrained, hyper, seed)?;
    let predictions = predict(splits.test, &outcome.params, hyper, vocab);
    let gold: Vec<Vec<Triplet>> = splits.test.iter().map(|r| r.triplets.clone()).collect();
    let test = score(&gold, &predictions);
    sink(&RunArtifacts {
        seed,
        params: &outcome.params,
        log: &outcome.log,
        predictions: &predictions,
        test,
    })?;
    Ok(RunResult {
        seed,
        best_epoch: outcome.log.best_epoch,
        best_val_f1: outcome.log.best_val_f1,
        test,
    })
}

/// One training run per seed, evaluated on the test split. Up to `jobs` runs
/// execute concurrently; results keep the order of `seeds`.
pub fn multi_run(
    splits: &Splits<'_>,
    vocab: &Vocabulary,
    pretrained: Option<&PretrainedRows>,
    hyper: &Hyperparams,
    seeds: &[u64],
    jobs: usize,
    sink: &(dyn Fn(&RunArtifacts<'_>) -> Result<()> + Sync),
) -> Result<MultiRunReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs.max(1)) {
        let results: Vec<Result<RunResult>> = thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| s.spawn(move || one_run(splits, vocab, pretrained, hyper, seed, sink)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training thread panicked"))
                .collect()
        });
        for r in results {
            runs.push(r?);
        }
    }
    let mean = mean_prf(&runs);
    Ok(MultiRunReport { runs, mean })
}
