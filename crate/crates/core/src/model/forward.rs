use rand::Rng;

use super::hyper::Hyperparams;
use super::params::{Affine, DepHead, ModelParams, Network, TagHead};
use crate::decoding::argmax;
use crate::numerics::{affine, dot, dropout, lstm_forward, relu, softmax, Dropout, LstmRun, ShapeError, Tensor};
use crate::types::{CollapsedTag, DepType, Tag, TagSeq};

/// Output distributions of the tagging heads, one row per token.
#[derive(Clone, Debug)]
pub enum TagProbs {
    Separate { aspect: Tensor, opinion: Tensor },
    Collapsed(Tensor),
}

/// Intermediate values of the dependency scorer needed by the backward pass.
#[derive(Clone, Debug)]
pub enum DepCache {
    /// `U_k = W^k r^ap + b^k` for each dependency type (`n × d_r` each).
    Biaffine { projected: Vec<Tensor> },
    /// Pre-activation `n × n × 4` scores before the ReLU.
    Concat { pre: Tensor },
}

/// Layer projection `relu(W x + b)` with its pre-activation.
#[derive(Clone, Debug)]
pub struct Projection {
    pub pre: Tensor,
    pub out: Tensor,
}

impl Projection {
    fn apply(x: &Tensor, layer: &Affine) -> Result<Self, ShapeError> {
        let pre = affine(x, &layer.weight, &layer.bias)?;
        let out = relu(&pre);
        Ok(Projection { pre, out })
    }
}

/// Everything computed for one sentence.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub ids: Vec<usize>,
    /// Word vectors after dropout (`n × d_e`).
    pub embedded: Dropout,
    pub lstm_forward: LstmRun,
    /// Run over the reversed sentence.
    pub lstm_backward: LstmRun,
    /// `[h_fwd ; h_bwd]` per token (`n × 2d_h`).
    pub hidden: Tensor,
    pub tag_aspect: Projection,
    pub tag_opinion: Option<Projection>,
    pub dep_aspect: Projection,
    pub dep_opinion: Projection,
    pub tag_probs: TagProbs,
    pub dep_cache: DepCache,
    /// Raw dependency scores (`n × n × 4`).
    pub dep_scores: Tensor,
    /// Softmax over the last axis of `dep_scores`.
    pub dep_probs: Tensor,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Most probable aspect and opinion tags per token.
    pub fn predicted_tags(&self) -> (TagSeq, TagSeq) {
        match &self.tag_probs {
            TagProbs::Separate { aspect, opinion } => {
                let pick = |p: &Tensor| {
                    TagSeq((0..p.rows()).map(|i| Tag::from_code(argmax(p.row(i))).expect("3-way")).collect())
                };
                (pick(aspect), pick(opinion))
            }
            TagProbs::Collapsed(p) => {
                let (a, o) = (0..p.rows())
                    .map(|i| CollapsedTag::from_code(argmax(p.row(i))).expect("5-way").split())
                    .unzip();
                (TagSeq(a), TagSeq(o))
            }
        }
    }
}

fn reversed_rows(x: &Tensor) -> Tensor {
    let n = x.rows();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..n {
        out.row_mut(i).copy_from_slice(x.row(n - 1 - i));
    }
    out
}

/// BiLSTM over the dropped-out embeddings.
fn encode(x: &Tensor, net: &Network) -> Result<(LstmRun, LstmRun, Tensor), ShapeError> {
    let n = x.rows();
    let fwd = lstm_forward(x, &net.lstm_forward)?;
    let bwd = lstm_forward(&reversed_rows(x), &net.lstm_backward)?;
    let d_h = net.lstm_forward.hidden();
    let mut hidden = Tensor::zeros(&[n, 2 * d_h]);
    for t in 0..n {
        let row = hidden.row_mut(t);
        row[..d_h].copy_from_slice(&fwd.steps[t].h);
        row[d_h..].copy_from_slice(&bwd.steps[n - 1 - t].h);
    }
    Ok((fwd, bwd, hidden))
}

fn tag_heads(
    head: &TagHead,
    tag_aspect: &Projection,
    tag_opinion: Option<&Projection>,
) -> Result<TagProbs, ShapeError> {
    match head {
        TagHead::Separate { aspect, opinion } => {
            let opinion_repr = tag_opinion.ok_or_else(|| ShapeError::new("tag_heads", "missing opinion projection"))?;
            let a = affine(&tag_aspect.out, &aspect.weight, &aspect.bias)?;
            let o = affine(&opinion_repr.out, &opinion.weight, &opinion.bias)?;
            Ok(TagProbs::Separate {
                aspect: softmax(&a, 1)?,
                opinion: softmax(&o, 1)?,
            })
        }
        TagHead::Collapsed(layer) => {
            let logits = affine(&tag_aspect.out, &layer.weight, &layer.bias)?;
            Ok(TagProbs::Collapsed(softmax(&logits, 1)?))
        }
    }
}

/// Raw `n × n × 4` scores: row index is the aspect word, column the opinion word.
fn dep_scores(head: &DepHead, ap: &Tensor, op: &Tensor) -> Result<(DepCache, Tensor), ShapeError> {
    let n = ap.rows();
    let k_count = DepType::COUNT;
    let mut scores = Tensor::zeros(&[n, n, k_count]);
    match head {
        DepHead::Biaffine(per_type) => {
            if per_type.len() != k_count {
                return Err(ShapeError::new("biaffine", format!("{} scorers", per_type.len())));
            }
            let projected = per_type
                .iter()
                .map(|a| affine(ap, &a.weight, &a.bias))
                .collect::<Result<Vec<_>, _>>()?;
            let s = scores.data_mut();
            for (k, u) in projected.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        s[(i * n + j) * k_count + k] = dot(u.row(i), op.row(j));
                    }
                }
            }
            Ok((DepCache::Biaffine { projected }, scores))
        }
        DepHead::Concat(layer) => {
            let d_r = ap.cols();
            if layer.weight.shape() != [k_count, 2 * d_r] {
                return Err(ShapeError::new("concat", format!("weight {:?}", layer.weight.shape())));
            }
            let mut pre = Tensor::zeros(&[n, n, k_count]);
            let p = pre.data_mut();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..k_count {
                        let w = layer.weight.row(k);
                        p[(i * n + j) * k_count + k] =
                            layer.bias.data()[k] + dot(&w[..d_r], ap.row(i)) + dot(&w[d_r..], op.row(j));
                    }
                }
            }
            let scores = relu(&pre);
            Ok((DepCache::Concat { pre }, scores))
        }
    }
}

/// Full forward pass for one sentence of vocabulary ids. Dropout is applied to
/// the word vectors when `training` is set.
pub fn forward<R: Rng + ?Sized>(
    ids: &[usize],
    params: &ModelParams,
    hyper: &Hyperparams,
    rng: &mut R,
    training: bool,
) -> Result<ForwardTrace, ShapeError> {
    if ids.is_empty() {
        return Err(ShapeError::new("forward", "empty sentence"));
    }
    let d_e = params.embedding.cols();
    let mut emb = Tensor::zeros(&[ids.len(), d_e]);
    for (t, &id) in ids.iter().enumerate() {
        if id >= params.vocab_size() {
            return Err(ShapeError::new("forward", format!("token id {id} outside vocabulary")));
        }
        emb.row_mut(t).copy_from_slice(params.embedding.row(id));
    }
    let embedded = dropout(&emb, hyper.dropout_rate, rng, training);
    let net = &params.net;
    let (lstm_fwd, lstm_bwd, hidden) = encode(&embedded.output, net)?;

    let tag_aspect = Projection::apply(&hidden, &net.tag_aspect)?;
    let tag_opinion = net.tag_opinion.as_ref().map(|l| Projection::apply(&hidden, l)).transpose()?;
    let dep_aspect = Projection::apply(&hidden, &net.dep_aspect)?;
    let dep_opinion = Projection::apply(&hidden, &net.dep_opinion)?;

    let tag_probs = tag_heads(&net.tag_head, &tag_aspect, tag_opinion.as_ref())?;
    let (dep_cache, scores) = dep_scores(&net.dep_head, &dep_aspect.out, &dep_opinion.out)?;
    let dep_probs = softmax(&scores, 2)?;

    Ok(ForwardTrace {
        ids: ids.to_vec(),
        embedded,
        lstm_forward: lstm_fwd,
        lstm_backward: lstm_bwd,
        hidden,
        tag_aspect,
        tag_opinion,
        dep_aspect,
        dep_opinion,
        tag_probs,
        dep_cache,
        dep_scores: scores,
        dep_probs,
    })
}

/// Forward pass without dropout.
///
/// # Panics
/// If `params` do not fit the sentence (empty input or an id outside the
/// embedding matrix).
pub fn forward_inference(ids: &[usize], params: &ModelParams, hyper: &Hyperparams) -> ForwardTrace {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    forward(ids, params, hyper, &mut rng, false).expect("inference on a valid sentence")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hyper::Variant;
    use crate::numerics::bilinear_score;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(variant: Variant) -> (ModelParams, Hyperparams) {
        let hyper = Hyperparams {
            d_e: 5,
            d_h: 4,
            d_r: 3,
            variant,
            init_bound: 0.5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (ModelParams::init(9, &hyper, None, &mut rng), hyper)
    }

    #[test]
    fn output_shapes_and_distributions() {
        for variant in [Variant::Biaffine, Variant::Concat, Variant::Collapsed] {
            let (p, h) = setup(variant);
            let trace = forward_inference(&[2, 3, 4, 5], &p, &h);
            assert_eq!(trace.hidden.shape(), &[4, 8]);
            assert_eq!(trace.dep_probs.shape(), &[4, 4, 4]);
            for cell in trace.dep_probs.data().chunks(4) {
                assert!((cell.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let (a, o) = trace.predicted_tags();
            assert_eq!((a.len(), o.len()), (4, 4));
        }
    }

    #[test]
    fn biaffine_scores_match_bilinear_form() {
        let (p, h) = setup(Variant::Biaffine);
        let trace = forward_inference(&[2, 3, 4], &p, &h);
        let DepHead::Biaffine(per_type) = &p.net.dep_head else {
            unreachable!()
        };
        let (ap, op) = (&trace.dep_aspect.out, &trace.dep_opinion.out);
        for i in 0..3 {
            for j in 0..3 {
                for (k, a) in per_type.iter().enumerate() {
                    let expected = bilinear_score(
                        &Tensor::vector(ap.row(i).to_vec()),
                        &a.weight,
                        &Tensor::vector(op.row(j).to_vec()),
                        &a.bias,
                    )
                    .unwrap();
                    assert!((trace.dep_scores.get(&[i, j, k]) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_direction_sees_reversed_sentence() {
        let (p, h) = setup(Variant::Biaffine);
        let t1 = forward_inference(&[2, 3, 4], &p, &h);
        // the last token's backward state depends only on the last token
        let t2 = forward_inference(&[7, 8, 4], &p, &h);
        let d_h = 4;
        assert_eq!(&t1.hidden.row(2)[d_h..], &t2.hidden.row(2)[d_h..]);
        assert_eq!(&t1.hidden.row(0)[..d_h], &forward_inference(&[2, 8], &p, &h).hidden.row(0)[..d_h]);
    }

    #[test]
    fn dropout_only_in_training() {
        let (p, h) = setup(Variant::Biaffine);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = forward(&[2, 3, 4], &p, &h, &mut rng, true).unwrap();
        let eval = forward_inference(&[2, 3, 4], &p, &h);
        assert!(eval.embedded.scale.iter().all(|&s| s == 1.0));
        assert!(train.embedded.scale.iter().any(|&s| s != 1.0));
    }

    #[test]
    fn rejects_bad_ids() {
        let (p, h) = setup(Variant::Biaffine);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward(&[], &p, &h, &mut rng, false).is_err());
        assert!(forward(&[99], &p, &h, &mut rng, false).is_err());
    }
}
