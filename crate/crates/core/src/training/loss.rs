use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::collapsed_tags;
use crate::model::{
    backward, forward, ForwardTrace, GradStore, Hyperparams, L2Mode, ModelParams, Network, OutputGrads,
    TagLogitGrads, TagProbs,
};
use crate::numerics::{ShapeError, Tensor, LOG_EPSILON};
use crate::types::{DepTable, DepType, GoldEncoding};

/// Loss components; `l_total = l_tag + alpha·l_dep + gamma·l_reg`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_tag: f64,
    pub l_dep: f64,
    pub l_reg: f64,
    pub l_total: f64,
}

impl LossReport {
    pub fn combine(l_tag: f64, l_dep: f64, l_reg: f64, hyper: &Hyperparams) -> Self {
        LossReport {
            l_tag,
            l_dep,
            l_reg,
            l_total: l_tag + hyper.alpha * l_dep + hyper.gamma * l_reg,
        }
    }
}

fn valid_count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

/// `-(1/n) Σ_i log p_i[gold_i]` over unmasked rows, `n` the unmasked count.
pub fn tagger_loss(probs: &Tensor, gold: &[usize], mask: &[bool]) -> f64 {
    let n = valid_count(mask);
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = (0..probs.rows())
        .filter(|&i| mask[i])
        .map(|i| -probs.row(i)[gold[i]].max(LOG_EPSILON).ln())
        .sum();
    sum / n as f64
}

/// Gradient of `scale · tagger_loss` with respect to the pre-softmax logits.
/// Rows whose gold probability sits under the log clamp contribute nothing.
pub fn tagger_logit_grad(probs: &Tensor, gold: &[usize], mask: &[bool], scale: f64) -> Tensor {
    let n = valid_count(mask);
    let mut g = Tensor::zeros(probs.shape());
    if n == 0 {
        return g;
    }
    let f = scale / n as f64;
    for i in (0..probs.rows()).filter(|&i| mask[i]) {
        let p = probs.row(i);
        if p[gold[i]] <= LOG_EPSILON {
            continue;
        }
        let row = g.row_mut(i);
        for (k, (r, &pk)) in row.iter_mut().zip(p).enumerate() {
            *r = f * (pk - if k == gold[i] { 1.0 } else { 0.0 });
        }
    }
    g
}

/// Sum of the aspect and opinion tagger losses.
pub fn tagging_loss(aspect: &Tensor, opinion: &Tensor, gold: &GoldEncoding, mask: &[bool]) -> f64 {
    let a: Vec<usize> = gold.aspect_tags.tags().iter().map(|t| t.code()).collect();
    let o: Vec<usize> = gold.opinion_tags.tags().iter().map(|t| t.code()).collect();
    tagger_loss(aspect, &a, mask) + tagger_loss(opinion, &o, mask)
}

/// `-(1/n²) Σ_{i,j} log s_ij[gold_ij]` over cells whose row and column are
/// both unmasked.
pub fn dependency_loss(probs: &Tensor, gold: &DepTable, mask: &[bool]) -> f64 {
    let n = valid_count(mask);
    if n == 0 {
        return 0.0;
    }
    let size = gold.size();
    let d = probs.data();
    let mut sum = 0.0;
    for i in (0..size).filter(|&i| mask[i]) {
        for j in (0..size).filter(|&j| mask[j]) {
            let k = gold.get(i, j).code();
            sum -= d[(i * size + j) * DepType::COUNT + k].max(LOG_EPSILON).ln();
        }
    }
    sum / (n * n) as f64
}

/// Gradient of `scale · dependency_loss` with respect to the raw scores.
pub fn dependency_logit_grad(probs: &Tensor, gold: &DepTable, mask: &[bool], scale: f64) -> Tensor {
    let n = valid_count(mask);
    let mut g = Tensor::zeros(probs.shape());
    if n == 0 {
        return g;
    }
    let f = scale / (n * n) as f64;
    let size = gold.size();
    let kc = DepType::COUNT;
    let d = probs.data();
    let out = g.data_mut();
    for i in (0..size).filter(|&i| mask[i]) {
        for j in (0..size).filter(|&j| mask[j]) {
            let base = (i * size + j) * kc;
            let gold_k = gold.get(i, j).code();
            if d[base + gold_k] <= LOG_EPSILON {
                continue;
            }
            for k in 0..kc {
                out[base + k] = f * (d[base + k] - if k == gold_k { 1.0 } else { 0.0 });
            }
        }
    }
    g
}

/// L2 penalty over every non-embedding parameter.
pub fn regularizer(net: &Network, mode: L2Mode) -> f64 {
    let sq = net.squared_norm();
    match mode {
        L2Mode::Squared => sq,
        L2Mode::Unsquared => sq.sqrt(),
    }
}

/// Adds `scale · ∇ regularizer` into `grads`. The unsquared norm has zero
/// subgradient at the origin.
pub fn add_regularizer_grad(net: &Network, mode: L2Mode, scale: f64, grads: &mut Network) {
    let factor = match mode {
        L2Mode::Squared => 2.0 * scale,
        L2Mode::Unsquared => {
            let norm = net.squared_norm().sqrt();
            if norm == 0.0 {
                return;
            }
            scale / norm
        }
    };
    let mut params = Vec::new();
    net.visit(|_, t| params.push(t));
    let mut it = params.into_iter();
    grads.visit_mut(|_, g| g.add_scaled(it.next().expect("matching networks"), factor));
}

/// Unregularized tagging and dependency losses for one sentence, with the
/// gradient of `scale · (l_tag + alpha·l_dep)` with respect to the head logits.
pub fn sentence_objective(
    trace: &ForwardTrace,
    gold: &GoldEncoding,
    mask: &[bool],
    hyper: &Hyperparams,
    scale: f64,
) -> (f64, f64, OutputGrads) {
    let (l_tag, tags) = match &trace.tag_probs {
        TagProbs::Separate { aspect, opinion } => {
            let a: Vec<usize> = gold.aspect_tags.tags().iter().map(|t| t.code()).collect();
            let o: Vec<usize> = gold.opinion_tags.tags().iter().map(|t| t.code()).collect();
            let l = tagger_loss(aspect, &a, mask) + tagger_loss(opinion, &o, mask);
            let g = TagLogitGrads::Separate {
                aspect: tagger_logit_grad(aspect, &a, mask, scale),
                opinion: tagger_logit_grad(opinion, &o, mask, scale),
            };
            (l, g)
        }
        TagProbs::Collapsed(p) => {
            let c: Vec<usize> = collapsed_tags(gold).iter().map(|t| t.code()).collect();
            (tagger_loss(p, &c, mask), TagLogitGrads::Collapsed(tagger_logit_grad(p, &c, mask, scale)))
        }
    };
    let l_dep = dependency_loss(&trace.dep_probs, &gold.dep_table, mask);
    let dep = dependency_logit_grad(&trace.dep_probs, &gold.dep_table, mask, scale * hyper.alpha);
    (l_tag, l_dep, OutputGrads { tags, dep })
}

/// Loss report for one sentence under the model's output.
pub fn joint_loss(trace: &ForwardTrace, gold: &GoldEncoding, hyper: &Hyperparams, params: &ModelParams) -> LossReport {
    let mask = vec![true; trace.len()];
    let (l_tag, l_dep, _) = sentence_objective(trace, gold, &mask, hyper, 0.0);
    LossReport::combine(l_tag, l_dep, regularizer(&params.net, hyper.l2_mode), hyper)
}

/// A training example: vocabulary ids and the gold encoding.
#[derive(Clone, Debug)]
pub struct Example {
    pub ids: Vec<usize>,
    pub gold: GoldEncoding,
}

/// Mean over `batch` of `l_tag + alpha·l_dep`, plus `gamma·l_reg` once, with
/// its gradient. `dropout_seeds` gives one seed per example; `None` disables
/// dropout.
pub fn batch_objective(
    params: &ModelParams,
    hyper: &Hyperparams,
    batch: &[&Example],
    dropout_seeds: Option<&[u64]>,
) -> Result<(LossReport, GradStore), ShapeError> {
    if let Some(s) = dropout_seeds {
        assert_eq!(s.len(), batch.len(), "one dropout seed per example");
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    let per_sentence: Vec<(f64, f64, GradStore)> = batch
        .par_iter()
        .enumerate()
        .map(|(b, ex)| {
            let training = dropout_seeds.is_some();
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seeds.map_or(0, |s| s[b]));
            let trace = forward(&ex.ids, params, hyper, &mut rng, training)?;
            let mask = vec![true; ex.ids.len()];
            let (l_tag, l_dep, out) = sentence_objective(&trace, &ex.gold, &mask, hyper, scale);
            let mut g = GradStore::zeros_like(params);
            backward(&trace, params, &out, !hyper.freeze_embeddings, &mut g)?;
            Ok((l_tag, l_dep, g))
        })
        .collect::<Result<_, ShapeError>>()?;

    // reduce in batch order so results do not depend on thread scheduling
    let mut grads = GradStore::zeros_like(params);
    let (mut l_tag, mut l_dep) = (0.0, 0.0);
    for (t, d, g) in &per_sentence {
        l_tag += t * scale;
        l_dep += d * scale;
        grads.accumulate(g);
    }
    let l_reg = regularizer(&params.net, hyper.l2_mode);
    if hyper.gamma > 0.0 {
        add_regularizer_grad(&params.net, hyper.l2_mode, hyper.gamma, &mut grads.net);
    }
    Ok((LossReport::combine(l_tag, l_dep, l_reg, hyper), grads))
}

/// Forward-only counterpart of [`batch_objective`].
pub fn batch_loss(
    params: &ModelParams,
    hyper: &Hyperparams,
    batch: &[&Example],
    dropout_seeds: Option<&[u64]>,
) -> Result<LossReport, ShapeError> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let parts: Vec<(f64, f64)> = batch
        .par_iter()
        .enumerate()
        .map(|(b, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seeds.map_or(0, |s| s[b]));
            let trace = forward(&ex.ids, params, hyper, &mut rng, dropout_seeds.is_some())?;
            let mask = vec![true; ex.ids.len()];
            let (l_tag, l_dep, _) = sentence_objective(&trace, &ex.gold, &mask, hyper, 0.0);
            Ok((l_tag, l_dep))
        })
        .collect::<Result<_, ShapeError>>()?;
    let (mut l_tag, mut l_dep) = (0.0, 0.0);
    for (t, d) in parts {
        l_tag += t * scale;
        l_dep += d * scale;
    }
    Ok(LossReport::combine(l_tag, l_dep, regularizer(&params.net, hyper.l2_mode), hyper))
}
