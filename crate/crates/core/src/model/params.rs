use std::collections::BTreeMap;

use rand::Rng;

use super::hyper::{Hyperparams, Variant};
use crate::dataio::{PretrainedRows, PAD_INDEX};
use crate::numerics::{LstmWeights, Tensor};
use crate::types::{CollapsedTag, DepType, Tag};

/// Weight and bias of a linear layer (`out × in`, `out`).
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Affine {
    pub fn zeros(out: usize, input: usize) -> Self {
        Affine {
            weight: Tensor::zeros(&[out, input]),
            bias: Tensor::zeros(&[out]),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(out: usize, input: usize, bound: f64, rng: &mut R) -> Self {
        Affine {
            weight: Tensor::uniform(&[out, input], bound, rng),
            bias: Tensor::uniform(&[out], bound, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TagHead {
    /// `3 × d_r` aspect and opinion taggers.
    Separate { aspect: Affine, opinion: Affine },
    /// One `5 × d_r` tagger.
    Collapsed(Affine),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DepHead {
    /// One `d_r × d_r` weight and `d_r` bias per dependency type, in
    /// [`DepType`] order.
    Biaffine(Vec<Affine>),
    /// `4 × 2d_r` over `[r_i ⊕ r_j]`.
    Concat(Affine),
}

/// Everything trainable except the embedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub lstm_forward: LstmWeights,
    pub lstm_backward: LstmWeights,
    /// Aspect tagging representation; the shared one in the collapsed variant.
    pub tag_aspect: Affine,
    /// Opinion tagging representation; absent in the collapsed variant.
    pub tag_opinion: Option<Affine>,
    pub dep_aspect: Affine,
    pub dep_opinion: Affine,
    pub tag_head: TagHead,
    pub dep_head: DepHead,
}

impl Network {
    /// Same shapes as `self`, all zeros.
    pub fn zeros_like(&self) -> Network {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.fill(0.0));
        z
    }

    pub fn visit<'a>(&'a self, mut f: impl FnMut(&str, &'a Tensor)) {
        let lstm = |prefix: &str, w: &'a LstmWeights, f: &mut dyn FnMut(&str, &'a Tensor)| {
            f(&format!("{prefix}.w_ih"), &w.w_ih);
            f(&format!("{prefix}.w_hh"), &w.w_hh);
            f(&format!("{prefix}.bias"), &w.bias);
        };
        let affine = |prefix: &str, a: &'a Affine, f: &mut dyn FnMut(&str, &'a Tensor)| {
            f(&format!("{prefix}.weight"), &a.weight);
            f(&format!("{prefix}.bias"), &a.bias);
        };
        lstm("lstm_forward", &self.lstm_forward, &mut f);
        lstm("lstm_backward", &self.lstm_backward, &mut f);
        affine("tag_aspect", &self.tag_aspect, &mut f);
        if let Some(op) = &self.tag_opinion {
            affine("tag_opinion", op, &mut f);
        }
        affine("dep_aspect", &self.dep_aspect, &mut f);
        affine("dep_opinion", &self.dep_opinion, &mut f);
        match &self.tag_head {
            TagHead::Separate { aspect, opinion } => {
                affine("tag_head.aspect", aspect, &mut f);
                affine("tag_head.opinion", opinion, &mut f);
            }
            TagHead::Collapsed(a) => affine("tag_head.collapsed", a, &mut f),
        }
        match &self.dep_head {
            DepHead::Biaffine(per_type) => {
                for (k, a) in per_type.iter().enumerate() {
                    affine(&format!("dep_head.biaffine.{k}"), a, &mut f);
                }
            }
            DepHead::Concat(a) => affine("dep_head.concat", a, &mut f),
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        fn lstm(prefix: &str, w: &mut LstmWeights, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&format!("{prefix}.w_ih"), &mut w.w_ih);
            f(&format!("{prefix}.w_hh"), &mut w.w_hh);
            f(&format!("{prefix}.bias"), &mut w.bias);
        }
        fn affine(prefix: &str, a: &mut Affine, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&format!("{prefix}.weight"), &mut a.weight);
            f(&format!("{prefix}.bias"), &mut a.bias);
        }
        lstm("lstm_forward", &mut self.lstm_forward, &mut f);
        lstm("lstm_backward", &mut self.lstm_backward, &mut f);
        affine("tag_aspect", &mut self.tag_aspect, &mut f);
        if let Some(op) = &mut self.tag_opinion {
            affine("tag_opinion", op, &mut f);
        }
        affine("dep_aspect", &mut self.dep_aspect, &mut f);
        affine("dep_opinion", &mut self.dep_opinion, &mut f);
        match &mut self.tag_head {
            TagHead::Separate { aspect, opinion } => {
                affine("tag_head.aspect", aspect, &mut f);
                affine("tag_head.opinion", opinion, &mut f);
            }
            TagHead::Collapsed(a) => affine("tag_head.collapsed", a, &mut f),
        }
        match &mut self.dep_head {
            DepHead::Biaffine(per_type) => {
                for (k, a) in per_type.iter_mut().enumerate() {
                    affine(&format!("dep_head.biaffine.{k}"), a, &mut f);
                }
            }
            DepHead::Concat(a) => affine("dep_head.concat", a, &mut f),
        }
    }

    /// Names of the tensors that make up the dependency branch (parsing
    /// representations and scorer).
    pub fn is_dependency_param(name: &str) -> bool {
        name.starts_with("dep_")
    }

    pub fn squared_norm(&self) -> f64 {
        let mut total = 0.0;
        self.visit(|_, t| total += t.squared_norm());
        total
    }

    pub fn add_assign(&mut self, other: &Network) {
        let mut others = Vec::new();
        other.visit(|_, t| others.push(t));
        let mut it = others.into_iter();
        self.visit_mut(|_, t| t.add_assign(it.next().expect("matching networks")));
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.all_finite());
        ok
    }
}

/// All trainable tensors of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `|V| × d_e`; row 0 (`<pad>`) stays zero.
    pub embedding: Tensor,
    pub net: Network,
}

pub const EMBEDDING_NAME: &str = "embedding";

impl ModelParams {
    /// Zero-initialized parameters with the shapes implied by `hyper`.
    pub fn zeros(vocab_size: usize, hyper: &Hyperparams) -> Self {
        Self::build(vocab_size, hyper, &mut |shape| Tensor::zeros(shape))
    }

    /// Uniform initialization in `[-init_bound, init_bound]`. Embedding rows
    /// covered by `pretrained` are copied; the `<pad>` row is zero.
    pub fn init<R: Rng + ?Sized>(
        vocab_size: usize,
        hyper: &Hyperparams,
        pretrained: Option<&PretrainedRows>,
        rng: &mut R,
    ) -> Self {
        let bound = hyper.init_bound;
        let mut params = Self::build(vocab_size, hyper, &mut |shape| Tensor::uniform(shape, bound, rng));
        if let Some(pre) = pretrained {
            assert_eq!(pre.rows.len(), vocab_size, "pretrained rows must match the vocabulary");
            assert_eq!(pre.dim, hyper.d_e, "pretrained dimension must equal d_e");
            for (i, row) in pre.rows.iter().enumerate() {
                if let Some(v) = row {
                    params.embedding.row_mut(i).copy_from_slice(v);
                }
            }
        }
        params.embedding.row_mut(PAD_INDEX).fill(0.0);
        params
    }

    fn build(vocab_size: usize, hyper: &Hyperparams, make: &mut dyn FnMut(&[usize]) -> Tensor) -> Self {
        let (d_e, d_h, d_r) = (hyper.d_e, hyper.d_h, hyper.d_r);
        fn affine(make: &mut dyn FnMut(&[usize]) -> Tensor, out: usize, input: usize) -> Affine {
            let weight = make(&[out, input]);
            let bias = make(&[out]);
            Affine { weight, bias }
        }
        fn lstm(make: &mut dyn FnMut(&[usize]) -> Tensor, input: usize, hidden: usize) -> LstmWeights {
            let w_ih = make(&[4 * hidden, input]);
            let w_hh = make(&[4 * hidden, hidden]);
            let bias = make(&[4 * hidden]);
            LstmWeights { w_ih, w_hh, bias }
        }
        let embedding = make(&[vocab_size, d_e]);
        let lstm_forward = lstm(make, d_e, d_h);
        let lstm_backward = lstm(make, d_e, d_h);
        let tag_aspect = affine(make, d_r, 2 * d_h);
        let tag_opinion = (hyper.variant != Variant::Collapsed).then(|| affine(make, d_r, 2 * d_h));
        let dep_aspect = affine(make, d_r, 2 * d_h);
        let dep_opinion = affine(make, d_r, 2 * d_h);
        let tag_head = match hyper.variant {
            Variant::Collapsed => TagHead::Collapsed(affine(make, CollapsedTag::COUNT, d_r)),
            _ => TagHead::Separate {
                aspect: affine(make, Tag::ALL.len(), d_r),
                opinion: affine(make, Tag::ALL.len(), d_r),
            },
        };
        let dep_head = match hyper.variant {
            Variant::Concat => DepHead::Concat(affine(make, DepType::COUNT, 2 * d_r)),
            _ => DepHead::Biaffine((0..DepType::COUNT).map(|_| affine(make, d_r, d_r)).collect()),
        };
        ModelParams {
            embedding,
            net: Network {
                lstm_forward,
                lstm_backward,
                tag_aspect,
                tag_opinion,
                dep_aspect,
                dep_opinion,
                tag_head,
                dep_head,
            },
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    /// Every tensor with its stable name, embedding first.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![(EMBEDDING_NAME.to_string(), &self.embedding)];
        self.net.visit(|name, t| out.push((name.to_string(), t)));
        out
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        f(EMBEDDING_NAME, &mut self.embedding);
        self.net.visit_mut(f);
    }

    pub fn all_finite(&self) -> bool {
        self.embedding.all_finite() && self.net.all_finite()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Gradients keyed like [`ModelParams`]. Embedding gradients are kept per
/// touched row.
#[derive(Clone, Debug, PartialEq)]
pub struct GradStore {
    pub embedding_rows: BTreeMap<usize, Vec<f64>>,
    pub embedding_dim: usize,
    pub vocab_size: usize,
    pub net: Network,
}

impl GradStore {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradStore {
            embedding_rows: BTreeMap::new(),
            embedding_dim: params.embedding.shape()[1],
            vocab_size: params.vocab_size(),
            net: params.net.zeros_like(),
        }
    }

    pub fn add_embedding_row(&mut self, row: usize, grad: &[f64]) {
        let entry = self
            .embedding_rows
            .entry(row)
            .or_insert_with(|| vec![0.0; grad.len()]);
        for (a, b) in entry.iter_mut().zip(grad) {
            *a += b;
        }
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &GradStore) {
        for (&row, g) in &other.embedding_rows {
            self.add_embedding_row(row, g);
        }
        self.net.add_assign(&other.net);
    }

    pub fn embedding_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.vocab_size, self.embedding_dim]);
        for (&row, g) in &self.embedding_rows {
            t.row_mut(row).copy_from_slice(g);
        }
        t
    }

    /// Dense gradients with the same names as [`ModelParams::named_tensors`].
    pub fn named_dense(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![(EMBEDDING_NAME.to_string(), self.embedding_dense())];
        self.net.visit(|name, t| out.push((name.to_string(), t.clone())));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper(variant: Variant) -> Hyperparams {
        Hyperparams {
            d_e: 4,
            d_h: 5,
            d_r: 3,
            variant,
            ..Default::default()
        }
    }

    #[test]
    fn shapes_per_variant() {
        let p = ModelParams::zeros(10, &hyper(Variant::Biaffine));
        let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"tag_head.aspect.weight".to_string()));
        assert!(names.contains(&"dep_head.biaffine.3.weight".to_string()));
        let shapes: BTreeMap<String, Vec<usize>> =
            p.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        assert_eq!(shapes["embedding"], vec![10, 4]);
        assert_eq!(shapes["lstm_forward.w_ih"], vec![20, 4]);
        assert_eq!(shapes["tag_aspect.weight"], vec![3, 10]);
        assert_eq!(shapes["tag_head.opinion.weight"], vec![3, 3]);
        assert_eq!(shapes["dep_head.biaffine.0.weight"], vec![3, 3]);
        assert_eq!(shapes["dep_head.biaffine.0.bias"], vec![3]);

        let c = ModelParams::zeros(10, &hyper(Variant::Concat));
        let shapes: BTreeMap<String, Vec<usize>> =
            c.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        assert_eq!(shapes["dep_head.concat.weight"], vec![4, 6]);
        assert_eq!(shapes["dep_head.concat.bias"], vec![4]);

        let k = ModelParams::zeros(10, &hyper(Variant::Collapsed));
        let shapes: BTreeMap<String, Vec<usize>> =
            k.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        assert_eq!(shapes["tag_head.collapsed.weight"], vec![5, 3]);
        assert!(!shapes.contains_key("tag_opinion.weight"));
    }

    #[test]
    fn init_is_bounded_and_pads_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(10, &hyper(Variant::Biaffine), None, &mut rng);
        for (_, t) in p.named_tensors() {
            assert!(t.data().iter().all(|v| v.abs() <= 0.1));
        }
        assert!(p.embedding.row(PAD_INDEX).iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p, ModelParams::init(10, &hyper(Variant::Biaffine), None, &mut rng));
    }

    #[test]
    fn pretrained_rows_are_copied() {
        let mut rows = vec![None; 10];
        rows[4] = Some(vec![1.0, 2.0, 3.0, 4.0]);
        let pre = PretrainedRows { dim: 4, rows };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(10, &hyper(Variant::Biaffine), Some(&pre), &mut rng);
        assert_eq!(p.embedding.row(4), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn grad_store_accumulates_rows() {
        let p = ModelParams::zeros(6, &hyper(Variant::Biaffine));
        let mut a = GradStore::zeros_like(&p);
        a.add_embedding_row(2, &[1.0, 0.0, 0.0, 1.0]);
        let mut b = GradStore::zeros_like(&p);
        b.add_embedding_row(2, &[1.0, 1.0, 0.0, 0.0]);
        b.add_embedding_row(5, &[0.5; 4]);
        a.accumulate(&b);
        let dense = a.embedding_dense();
        assert_eq!(dense.row(2), &[2.0, 1.0, 0.0, 1.0]);
        assert_eq!(dense.row(5), &[0.5; 4]);
        assert_eq!(a.named_dense().len(), p.named_tensors().len());
    }
}
