use super::forward::{DepCache, ForwardTrace, Projection};
use super::params::{Affine, DepHead, GradStore, ModelParams, TagHead};
use crate::numerics::{affine_backward, axpy, dropout_backward, lstm_backward, relu_backward, ShapeError, Tensor};
use crate::types::DepType;

/// Gradients of the objective with respect to the head logits.
#[derive(Clone, Debug)]
pub struct OutputGrads {
    pub tags: TagLogitGrads,
    /// `n × n × 4`, with respect to the raw dependency scores.
    pub dep: Tensor,
}

#[derive(Clone, Debug)]
pub enum TagLogitGrads {
    Separate { aspect: Tensor, opinion: Tensor },
    Collapsed(Tensor),
}

fn projection_backward(
    x: &Tensor,
    proj: &Projection,
    layer: &Affine,
    grad_out: &Tensor,
    grads: &mut Affine,
) -> Result<Tensor, ShapeError> {
    let g = relu_backward(&proj.pre, grad_out);
    affine_backward(x, &layer.weight, &g, &mut grads.weight, &mut grads.bias)
}

/// Returns gradients for the aspect and opinion parsing representations.
fn dep_backward(
    head: &DepHead,
    cache: &DepCache,
    ap: &Tensor,
    op: &Tensor,
    d_scores: &Tensor,
    grads: &mut DepHead,
) -> Result<(Tensor, Tensor), ShapeError> {
    let n = ap.rows();
    let kc = DepType::COUNT;
    if d_scores.shape() != [n, n, kc] {
        return Err(ShapeError::new("dep_backward", format!("grad {:?}", d_scores.shape())));
    }
    let ds = d_scores.data();
    let mut d_ap = Tensor::zeros(ap.shape());
    let mut d_op = Tensor::zeros(op.shape());
    match (head, cache, grads) {
        (DepHead::Biaffine(per_type), DepCache::Biaffine { projected }, DepHead::Biaffine(g_per_type)) => {
            for (k, ((layer, u), g)) in per_type.iter().zip(projected).zip(g_per_type.iter_mut()).enumerate() {
                let mut d_u = Tensor::zeros(u.shape());
                for i in 0..n {
                    for j in 0..n {
                        let s = ds[(i * n + j) * kc + k];
                        if s == 0.0 {
                            continue;
                        }
                        axpy(d_u.row_mut(i), s, op.row(j));
                        axpy(d_op.row_mut(j), s, u.row(i));
                    }
                }
                let dx = affine_backward(ap, &layer.weight, &d_u, &mut g.weight, &mut g.bias)?;
                d_ap.add_assign(&dx);
            }
        }
        (DepHead::Concat(layer), DepCache::Concat { pre }, DepHead::Concat(g)) => {
            let d_r = ap.cols();
            let pre = pre.data();
            // per-token sums of the pre-activation gradient, split by side
            let mut d_a = vec![0.0; n * kc];
            let mut d_o = vec![0.0; n * kc];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..kc {
                        let idx = (i * n + j) * kc + k;
                        if pre[idx] > 0.0 {
                            d_a[i * kc + k] += ds[idx];
                            d_o[j * kc + k] += ds[idx];
                        }
                    }
                }
            }
            for k in 0..kc {
                let w = layer.weight.row(k);
                for i in 0..n {
                    let (ga, go) = (d_a[i * kc + k], d_o[i * kc + k]);
                    g.bias.data_mut()[k] += ga;
                    let gw = g.weight.row_mut(k);
                    axpy(&mut gw[..d_r], ga, ap.row(i));
                    axpy(&mut gw[d_r..], go, op.row(i));
                    axpy(d_ap.row_mut(i), ga, &w[..d_r]);
                    axpy(d_op.row_mut(i), go, &w[d_r..]);
                }
            }
        }
        _ => return Err(ShapeError::new("dep_backward", "head and cache variants differ")),
    }
    Ok((d_ap, d_op))
}

/// Backpropagates `out` through the network of `trace`, adding into `store`.
/// Embedding gradients are skipped when `train_embeddings` is false.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    out: &OutputGrads,
    train_embeddings: bool,
    store: &mut GradStore,
) -> Result<(), ShapeError> {
    let net = &params.net;
    let g = &mut store.net;
    let hidden = &trace.hidden;
    let mut d_hidden = Tensor::zeros(hidden.shape());

    // tagging heads
    match (&net.tag_head, &out.tags, &mut g.tag_head) {
        (TagHead::Separate { aspect, opinion }, TagLogitGrads::Separate { aspect: da, opinion: dop }, TagHead::Separate { aspect: ga, opinion: gop }) => {
            let op_proj = trace
                .tag_opinion
                .as_ref()
                .ok_or_else(|| ShapeError::new("backward", "missing opinion projection"))?;
            let d_ra = affine_backward(&trace.tag_aspect.out, &aspect.weight, da, &mut ga.weight, &mut ga.bias)?;
            let d_ro = affine_backward(&op_proj.out, &opinion.weight, dop, &mut gop.weight, &mut gop.bias)?;
            d_hidden.add_assign(&projection_backward(hidden, &trace.tag_aspect, &net.tag_aspect, &d_ra, &mut g.tag_aspect)?);
            let (layer, grads) = net
                .tag_opinion
                .as_ref()
                .zip(g.tag_opinion.as_mut())
                .ok_or_else(|| ShapeError::new("backward", "missing opinion layer"))?;
            d_hidden.add_assign(&projection_backward(hidden, op_proj, layer, &d_ro, grads)?);
        }
        (TagHead::Collapsed(layer), TagLogitGrads::Collapsed(dl), TagHead::Collapsed(gl)) => {
            let d_r = affine_backward(&trace.tag_aspect.out, &layer.weight, dl, &mut gl.weight, &mut gl.bias)?;
            d_hidden.add_assign(&projection_backward(hidden, &trace.tag_aspect, &net.tag_aspect, &d_r, &mut g.tag_aspect)?);
        }
        _ => return Err(ShapeError::new("backward", "tag head and gradient variants differ")),
    }

    // dependency scorer
    let (d_ap, d_op) = dep_backward(
        &net.dep_head,
        &trace.dep_cache,
        &trace.dep_aspect.out,
        &trace.dep_opinion.out,
        &out.dep,
        &mut g.dep_head,
    )?;
    d_hidden.add_assign(&projection_backward(hidden, &trace.dep_aspect, &net.dep_aspect, &d_ap, &mut g.dep_aspect)?);
    d_hidden.add_assign(&projection_backward(hidden, &trace.dep_opinion, &net.dep_opinion, &d_op, &mut g.dep_opinion)?);

    // BiLSTM
    let n = trace.len();
    let d_h = net.lstm_forward.hidden();
    let x = &trace.embedded.output;
    let mut d_fwd = Tensor::zeros(&[n, d_h]);
    let mut d_bwd_rev = Tensor::zeros(&[n, d_h]);
    let mut x_rev = Tensor::zeros(x.shape());
    for t in 0..n {
        d_fwd.row_mut(t).copy_from_slice(&d_hidden.row(t)[..d_h]);
        d_bwd_rev.row_mut(n - 1 - t).copy_from_slice(&d_hidden.row(t)[d_h..]);
        x_rev.row_mut(n - 1 - t).copy_from_slice(x.row(t));
    }
    let mut d_x = lstm_backward(&trace.lstm_forward, x, &d_fwd, &net.lstm_forward, &mut g.lstm_forward);
    let d_x_rev = lstm_backward(&trace.lstm_backward, &x_rev, &d_bwd_rev, &net.lstm_backward, &mut g.lstm_backward);
    for t in 0..n {
        axpy(d_x.row_mut(t), 1.0, d_x_rev.row(n - 1 - t));
    }

    if train_embeddings {
        let d_emb = dropout_backward(&trace.embedded.scale, &d_x);
        for (t, &id) in trace.ids.iter().enumerate() {
            store.add_embedding_row(id, d_emb.row(t));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward::{forward_inference, TagProbs};
    use crate::model::hyper::{Hyperparams, Variant};
    use crate::numerics::finite_diff::relative_error_slices;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn concat_score(layer: &Affine, ap: &[f64], op: &[f64], k: usize) -> f64 {
        let d_r = ap.len();
        let w = layer.weight.row(k);
        (layer.bias.data()[k] + crate::numerics::dot(&w[..d_r], ap) + crate::numerics::dot(&w[d_r..], op)).max(0.0)
    }

    /// Linear objective `Σ c·probs` over all head outputs, so gradients reach
    /// every parameter through the softmaxes.
    struct Probe {
        tag_a: Tensor,
        tag_o: Tensor,
        dep: Tensor,
    }

    fn setup(variant: Variant) -> (ModelParams, Hyperparams, Vec<usize>, Probe) {
        let hyper = Hyperparams {
            d_e: 3,
            d_h: 3,
            d_r: 2,
            variant,
            dropout_rate: 0.0,
            init_bound: 0.6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = ModelParams::init(6, &hyper, None, &mut rng);
        let ids = vec![2, 3, 5];
        let tag_width = if variant == Variant::Collapsed { 5 } else { 3 };
        let probe = Probe {
            tag_a: Tensor::uniform(&[3, tag_width], 1.0, &mut rng),
            tag_o: Tensor::uniform(&[3, 3], 1.0, &mut rng),
            dep: Tensor::uniform(&[3, 3, 4], 1.0, &mut rng),
        };
        (params, hyper, ids, probe)
    }

    fn objective(params: &ModelParams, hyper: &Hyperparams, ids: &[usize], probe: &Probe) -> f64 {
        let t = forward_inference(ids, params, hyper);
        let lin = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>();
        let tags = match &t.tag_probs {
            TagProbs::Separate { aspect, opinion } => lin(aspect, &probe.tag_a) + lin(opinion, &probe.tag_o),
            TagProbs::Collapsed(p) => lin(p, &probe.tag_a),
        };
        tags + lin(&t.dep_probs, &probe.dep)
    }

    /// dL/dlogits for a linear objective on softmax outputs, row by row.
    fn softmax_grad(p: &Tensor, c: &Tensor, width: usize) -> Tensor {
        let mut g = Tensor::zeros(p.shape());
        for ((gr, pr), cr) in g
            .data_mut()
            .chunks_mut(width)
            .zip(p.data().chunks(width))
            .zip(c.data().chunks(width))
        {
            let inner: f64 = pr.iter().zip(cr).map(|(a, b)| a * b).sum();
            for k in 0..width {
                gr[k] = pr[k] * (cr[k] - inner);
            }
        }
        g
    }

    fn check_variant(variant: Variant) {
        let (params, hyper, ids, probe) = setup(variant);
        let trace = forward_inference(&ids, &params, &hyper);
        let tags = match &trace.tag_probs {
            TagProbs::Separate { aspect, opinion } => TagLogitGrads::Separate {
                aspect: softmax_grad(aspect, &probe.tag_a, 3),
                opinion: softmax_grad(opinion, &probe.tag_o, 3),
            },
            TagProbs::Collapsed(p) => TagLogitGrads::Collapsed(softmax_grad(p, &probe.tag_a, 5)),
        };
        let out = OutputGrads {
            tags,
            dep: softmax_grad(&trace.dep_probs, &probe.dep, 4),
        };
        let mut store = GradStore::zeros_like(&params);
        backward(&trace, &params, &out, true, &mut store).unwrap();

        let analytic = store.named_dense();
        let h = 1e-5;
        for (idx, (name, grad)) in analytic.iter().enumerate() {
            let mut numeric = vec![0.0; grad.len()];
            for (e, slot) in numeric.iter_mut().enumerate() {
                let bump = |delta: f64| {
                    let mut p = params.clone();
                    let mut i = 0;
                    p.visit_mut(|_, t| {
                        if i == idx {
                            t.data_mut()[e] += delta;
                        }
                        i += 1;
                    });
                    objective(&p, &hyper, &ids, &probe)
                };
                *slot = (bump(h) - bump(-h)) / (2.0 * h);
            }
            let err = relative_error_slices(grad.data(), &numeric);
            assert!(err < 1e-6, "{variant:?} {name}: relative error {err}");
        }
    }

    #[test]
    fn biaffine_gradients_match_finite_differences() {
        check_variant(Variant::Biaffine);
    }

    #[test]
    fn concat_gradients_match_finite_differences() {
        check_variant(Variant::Concat);
    }

    #[test]
    fn collapsed_gradients_match_finite_differences() {
        check_variant(Variant::Collapsed);
    }

    #[test]
    fn concat_scores_are_relu_of_linear_layer() {
        let (params, hyper, ids, _) = setup(Variant::Concat);
        let t = forward_inference(&ids, &params, &hyper);
        let DepHead::Concat(layer) = &params.net.dep_head else {
            unreachable!()
        };
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..4 {
                    let expected = concat_score(layer, t.dep_aspect.out.row(i), t.dep_opinion.out.row(j), k);
                    assert!((t.dep_scores.get(&[i, j, k]) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frozen_embeddings_get_no_rows() {
        let (params, hyper, ids, probe) = setup(Variant::Biaffine);
        let trace = forward_inference(&ids, &params, &hyper);
        let TagProbs::Separate { aspect, opinion } = &trace.tag_probs else {
            unreachable!()
        };
        let out = OutputGrads {
            tags: TagLogitGrads::Separate {
                aspect: softmax_grad(aspect, &probe.tag_a, 3),
                opinion: softmax_grad(opinion, &probe.tag_o, 3),
            },
            dep: softmax_grad(&trace.dep_probs, &probe.dep, 4),
        };
        let mut store = GradStore::zeros_like(&params);
        backward(&trace, &params, &out, false, &mut store).unwrap();
        assert!(store.embedding_rows.is_empty());
    }
}
