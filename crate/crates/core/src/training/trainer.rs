use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use super::loss::{batch_objective, regularizer, sentence_objective, Example, LossReport};
use crate::dataio::{batch_order, encode_gold, PretrainedRows, Vocabulary};
use crate::decoding::decode_sentence_with_threshold;
use crate::error::{Error, Result};
use crate::evaluation::score;
use crate::model::{forward_inference, Hyperparams, ModelParams, SelectionMetric};
use crate::types::{SentenceRecord, Triplet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's sentences.
    pub train: LossReport,
    pub val_f1: f64,
    pub val_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stop_reason: StopReason,
}

/// Patience-based stopping on a validation quantity. Only strict
/// improvements count, so ties keep the earliest epoch.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    metric: SelectionMetric,
    best: Option<f64>,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, metric: SelectionMetric) -> Self {
        EarlyStopping {
            patience,
            metric,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the value for `epoch`; returns true if it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let better = match (self.best, self.metric) {
            (None, _) => true,
            (Some(b), SelectionMetric::F1) => value > b,
            (Some(b), SelectionMetric::Loss) => value < b,
        };
        if better {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        better
    }

    pub fn should_stop(&self) -> bool {
        self.since_best > 0 && self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Ids and gold encodings for `records`.
pub fn examples(records: &[SentenceRecord], vocab: &Vocabulary) -> Vec<Example> {
    records
        .iter()
        .map(|r| Example {
            ids: vocab.encode(&r.tokens),
            gold: encode_gold(r),
        })
        .collect()
}

/// Validation exact-match F1 and mean total loss, without dropout.
pub fn validate(
    records: &[SentenceRecord],
    examples: &[Example],
    params: &ModelParams,
    hyper: &Hyperparams,
) -> (f64, f64) {
    let results: Vec<(Vec<Triplet>, f64)> = examples
        .par_iter()
        .map(|ex| {
            let trace = forward_inference(&ex.ids, params, hyper);
            let mask = vec![true; ex.ids.len()];
            let (l_tag, l_dep, _) = sentence_objective(&trace, &ex.gold, &mask, hyper, 0.0);
            let (a, o) = trace.predicted_tags();
            let pred = decode_sentence_with_threshold(&a, &o, &trace.dep_probs, hyper.pivot_threshold);
            (pred, l_tag + hyper.alpha * l_dep)
        })
        .collect();
    let gold: Vec<Vec<Triplet>> = records.iter().map(|r| r.triplets.clone()).collect();
    let pred: Vec<Vec<Triplet>> = results.iter().map(|(p, _)| p.clone()).collect();
    let n = results.len().max(1) as f64;
    let loss = results.iter().map(|(_, l)| l).sum::<f64>() / n + hyper.gamma * regularizer(&params.net, hyper.l2_mode);
    (score(&gold, &pred).f1, loss)
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Trains from a fresh initialization drawn from `seed` and returns the
/// parameters of the best validation epoch.
pub fn train(
    train_records: &[SentenceRecord],
    val_records: &[SentenceRecord],
    vocab: &Vocabulary,
    pretrained: Option<&PretrainedRows>,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    if train_records.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if val_records.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let train_ex = examples(train_records, vocab);
    let val_ex = examples(val_records, vocab);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(vocab.len(), hyper, pretrained, &mut rng);
    let mut state = OptimizerState::new(&params);
    let mut stopper = EarlyStopping::new(hyper.patience, hyper.selection_metric);
    let mut best = params.clone();
    let mut best_val_f1 = 0.0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=hyper.max_epochs {
        let order = batch_order(train_ex.len(), hyper.batch_size, Some(rng.gen()));
        let mut sum = LossReport::default();
        for indices in &order {
            let batch: Vec<&Example> = indices.iter().map(|&i| &train_ex[i]).collect();
            let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.gen()).collect();
            let (report, grads) = batch_objective(&params, hyper, &batch, Some(&seeds))?;
            if !report.l_total.is_finite() {
                return Err(Error::Config(format!("non-finite training loss at epoch {epoch}")));
            }
            adam_step(&mut params, &grads, &mut state, hyper.learning_rate, !hyper.freeze_embeddings);
            let w = batch.len() as f64;
            sum.l_tag += report.l_tag * w;
            sum.l_dep += report.l_dep * w;
            sum.l_reg += report.l_reg * w;
            sum.l_total += report.l_total * w;
        }
        let n = train_ex.len() as f64;
        let mean = LossReport {
            l_tag: sum.l_tag / n,
            l_dep: sum.l_dep / n,
            l_reg: sum.l_reg / n,
            l_total: sum.l_total / n,
        };

        let (val_f1, val_loss) = validate(val_records, &val_ex, &params, hyper);
        let value = match hyper.selection_metric {
            SelectionMetric::F1 => val_f1,
            SelectionMetric::Loss => val_loss,
        };
        if stopper.observe(epoch, value) {
            best = params.clone();
            best_val_f1 = val_f1;
        }
        info!(
            "seed {seed} epoch {epoch}: train loss {:.5} (tag {:.5}, dep {:.5}), val F1 {:.4}, val loss {:.5}",
            mean.l_total, mean.l_tag, mean.l_dep, val_f1, val_loss
        );
        epochs.push(EpochRecord {
            epoch,
            train: mean,
            val_f1,
            val_loss,
        });
        if stopper.should_stop() {
            debug!("seed {seed}: no improvement for {} epochs", hyper.patience);
            stop_reason = StopReason::Patience;
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        log: TrainLog {
            seed,
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_f1,
            stop_reason,
        },
    })
}
