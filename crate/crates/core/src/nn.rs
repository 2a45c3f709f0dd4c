//! Dense feed-forward networks with hand-written backpropagation.
//!
//! A [`DenseNet`] is a chain of affine layers, each followed by ReLU or the
//! identity. Weights are row-major with shape `(out, in)`. Training goes
//! through [`DenseNet::forward_cached`] and [`DenseNet::backward_from`]; the
//! cache remembers which parameter version produced it and is rejected after
//! any parameter update.
//!
//! Losses are soft-label cross-entropy against a [`LabelEncoding`], which
//! covers both one-hot labels and entangled (mixed) labels.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

static NEXT_PARAM_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_PARAM_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major, shape (out_dim, in_dim).
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::shape("layer dimensions must be positive"));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::shape(format!(
                "weight buffer has {} entries, expected {}x{}",
                weights.len(),
                out_dim,
                in_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::shape(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                out_dim
            )));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `[-sqrt(6/(in+out)), sqrt(6/(in+out))]`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::shape("layer dimensions must be positive"));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self::new(in_dim, out_dim, weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn affine_into(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi)),
        );
    }
}

/// Dense network. Equality compares parameters only.
#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Layer>,
    version: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("a network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::shape(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self {
            layers,
            version: fresh_version(),
        })
    }

    /// Builds a chain through `sizes` (input first). Hidden layers use
    /// `hidden`, the last layer uses `output`.
    pub fn glorot<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::shape("need at least input and output sizes"));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    /// A single identity-activation layer with `W = I`, `b = 0`.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self::new(vec![Layer::new(
            dim,
            dim,
            w,
            vec![0.0; dim],
            Activation::Identity,
        )?])
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layer shapes as `(in, out, activation)`; equal shapes mean the same
    /// architecture.
    pub fn shape(&self) -> Vec<(usize, usize, Activation)> {
        self.layers
            .iter()
            .map(|l| (l.in_dim, l.out_dim, l.activation))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("network input must be finite"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&a, &mut z);
            a.clear();
            a.extend(z.iter().map(|&v| layer.activation.apply(v)));
        }
        Ok(a)
    }

    /// Forward pass that keeps every layer's input and pre-activation for a
    /// later [`DenseNet::backward_from`].
    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.affine_into(&a, &mut z);
            let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(ForwardCache {
            version: self.version,
            inputs,
            pre,
            output: a,
        })
    }

    /// Backpropagates `grad_out = dL/d(output)` through the cached pass.
    /// Returns parameter gradients and `dL/d(input)`.
    pub fn backward_from(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
    ) -> Result<(GradientSet, Vec<f64>)> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        if grad_out.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "output gradient has {} values, network emits {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        let mut grads = GradientSet::zeros_like(self);
        let mut delta: Vec<f64> = grad_out.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[idx];
            for (d, &zi) in delta.iter_mut().zip(z) {
                *d *= layer.activation.derivative(zi);
            }
            let input = &cache.inputs[idx];
            let g = &mut grads.layers[idx];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, &xi) in row.iter_mut().zip(input) {
                    *w = d * xi;
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// `theta <- theta - lr * grad`. Rejects mismatched or non-finite
    /// gradients without touching the parameters.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
        }
        grads.check_shape(self)?;
        if !grads.is_finite() {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        if !self.parameters_finite() {
            return Err(Error::Diverged("parameters became non-finite".into()));
        }
        self.version = fresh_version();
        Ok(())
    }

    fn parameters_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// All parameters flattened layer by layer, weights before bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`DenseNet::parameters`].
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "{} parameters supplied, network has {}",
                flat.len(),
                self.num_params()
            )));
        }
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        self.version = fresh_version();
        Ok(())
    }

    /// Copies parameters from a network of identical shape.
    pub fn assign_from(&mut self, other: &DenseNet) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "cannot assign between different architectures",
            ));
        }
        if self.layers != other.layers {
            self.layers.clone_from(&other.layers);
            self.version = fresh_version();
        }
        Ok(())
    }
}

/// Activations recorded by [`DenseNet::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Pre-activations of every layer, first layer first.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer gradients mirroring a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn check_shape(&self, net: &DenseNet) -> Result<()> {
        let ok =
            self.layers.len() == net.layers.len()
                && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                    g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len()
                });
        if ok {
            Ok(())
        } else {
            Err(Error::shape("gradient set does not match network shape"))
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient sets differ in depth"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.len() != b.weights.len() || a.bias.len() != b.bias.len() {
                return Err(Error::shape("gradient sets differ in layer shape"));
            }
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().for_each(|v| *v *= factor);
            g.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(&g.bias).all(|v| v.is_finite()))
    }

    /// Same ordering as [`DenseNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(&g.weights);
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

/// A probability vector over `C` categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelEncoding {
    probs: Vec<f64>,
}

impl LabelEncoding {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLabel("label encoding is empty".into()));
        }
        if let Some(p) = probs
            .iter()
            .find(|p| !p.is_finite() || **p < -1e-12 || **p > 1.0 + 1e-12)
        {
            return Err(Error::InvalidLabel(format!("entry {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidLabel(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::InvalidLabel(format!(
                "class {class} out of range for {num_classes} categories"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// The category index if this encoding is exactly one-hot.
    pub fn as_one_hot(&self) -> Option<usize> {
        let mut hot = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if p != 0.0 {
                return None;
            }
        }
        hot
    }
}

impl TryFrom<Vec<f64>> for LabelEncoding {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelEncoding> for Vec<f64> {
    fn from(l: LabelEncoding) -> Self {
        l.probs
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| (z - lse).exp()).collect()
}

/// `-sum_c target_c * log softmax(logits)_c`, using a max-shifted log-sum-exp.
pub fn soft_cross_entropy(logits: &[f64], target: &LabelEncoding) -> Result<f64> {
    if logits.len() != target.num_classes() {
        return Err(Error::shape(format!(
            "{} logits for a {}-category label",
            logits.len(),
            target.num_classes()
        )));
    }
    let lse = log_sum_exp(logits);
    let loss = target
        .probs
        .iter()
        .zip(logits)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, z)| t * (lse - z))
        .sum::<f64>();
    Ok(loss.max(0.0))
}

/// Gradient of [`soft_cross_entropy`] with respect to the logits.
pub fn soft_cross_entropy_grad(logits: &[f64], target: &LabelEncoding) -> Result<Vec<f64>> {
    if logits.len() != target.num_classes() {
        return Err(Error::shape(format!(
            "{} logits for a {}-category label",
            logits.len(),
            target.num_classes()
        )));
    }
    Ok(softmax(logits)
        .into_iter()
        .zip(&target.probs)
        .map(|(p, t)| p - t)
        .collect())
}

/// Exact gradient of the soft cross-entropy of `net` at the cached input.
pub fn backward(
    net: &DenseNet,
    cache: &ForwardCache,
    target: &LabelEncoding,
) -> Result<GradientSet> {
    let g = soft_cross_entropy_grad(cache.output(), target)?;
    Ok(net.backward_from(cache, &g)?.0)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn relu_row() -> DenseNet {
        DenseNet::new(vec![Layer::new(
            2,
            1,
            vec![1.0, -1.0],
            vec![0.0],
            Activation::Relu,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = DenseNet::identity(2).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        assert_eq!(relu_row().forward(&[1.0, 2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let err = relu_row().forward(&[1.0]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn construction_rejects_broken_chain() {
        let mut rng = stream(0, Domain::ClientInit, 0);
        let a = Layer::glorot(2, 3, Activation::Relu, &mut rng).unwrap();
        let b = Layer::glorot(4, 1, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(DenseNet::new(vec![a, b]), Err(Error::Shape(_))));
    }

    #[test]
    fn glorot_respects_bound() {
        let mut rng = stream(1, Domain::ClientInit, 0);
        let net =
            DenseNet::glorot(&[5, 7, 3], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let bound0 = (6.0f64 / 12.0).sqrt();
        assert!(net.layers()[0].weights().iter().all(|w| w.abs() <= bound0));
        assert!(net.layers()[0].bias().iter().all(|b| *b == 0.0));
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln2() {
        let t = LabelEncoding::new(vec![0.5, 0.5]).unwrap();
        let l = soft_cross_entropy(&[0.0, 0.0], &t).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_is_stable_for_huge_logits() {
        let t = LabelEncoding::one_hot(0, 2).unwrap();
        let l = soft_cross_entropy(&[1000.0, 0.0], &t).unwrap();
        assert!(l.is_finite());
        assert!(l < 1e-300);
        let t1 = LabelEncoding::one_hot(1, 2).unwrap();
        let l1 = soft_cross_entropy(&[1000.0, 0.0], &t1).unwrap();
        assert!((l1 - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn label_encoding_rejects_off_simplex() {
        assert!(LabelEncoding::new(vec![0.6, 0.6]).is_err());
        assert!(LabelEncoding::new(vec![1.5, -0.5]).is_err());
        assert!(LabelEncoding::new(vec![]).is_err());
        assert_eq!(LabelEncoding::one_hot(2, 3).unwrap().as_one_hot(), Some(2));
        assert_eq!(
            LabelEncoding::new(vec![0.5, 0.5]).unwrap().as_one_hot(),
            None
        );
    }

    #[test]
    fn label_encoding_deserialize_validates() {
        let ok: LabelEncoding = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(ok.probs(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<LabelEncoding>("[0.3,0.3]").is_err());
    }

    #[test]
    fn bias_gradient_vanishes_at_softmax_target() {
        let mut rng = stream(2, Domain::ClientInit, 0);
        let net =
            DenseNet::glorot(&[3, 4], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let cache = net.forward_cached(&[0.3, -0.2, 0.9]).unwrap();
        let target = LabelEncoding::new(softmax(cache.output())).unwrap();
        let g = backward(&net, &cache, &target).unwrap();
        assert!(g.layers()[0].bias.iter().all(|b| b.abs() < 1e-15));
    }

    #[test]
    fn weight_gradient_vanishes_for_zero_input() {
        let mut rng = stream(3, Domain::ClientInit, 0);
        let net =
            DenseNet::glorot(&[3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let cache = net.forward_cached(&[0.0, 0.0, 0.0]).unwrap();
        let g = backward(&net, &cache, &LabelEncoding::one_hot(1, 2).unwrap()).unwrap();
        assert!(g.layers()[0].weights.iter().all(|w| *w == 0.0));
        assert!(g.layers()[0].bias.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = stream(4, Domain::ClientInit, 0);
        let mut net =
            DenseNet::glorot(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let target = LabelEncoding::one_hot(0, 2).unwrap();
        let cache = net.forward_cached(&[1.0, 1.0]).unwrap();
        let g = backward(&net, &cache, &target).unwrap();
        net.sgd_step(&g, 0.1).unwrap();
        assert!(matches!(
            backward(&net, &cache, &target),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut rng = stream(5, Domain::ClientInit, 0);
        let mut net =
            DenseNet::glorot(&[2, 3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let before = net.clone();
        let cache = net.forward_cached(&[0.5, -1.0]).unwrap();
        let g = backward(&net, &cache, &LabelEncoding::one_hot(1, 2).unwrap()).unwrap();
        net.sgd_step(&g, 0.0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn sgd_scalar_definition() {
        let mut net = DenseNet::new(vec![Layer::new(
            1,
            1,
            vec![1.0],
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].weights[0] = 2.0;
        net.sgd_step(&g, 0.1).unwrap();
        assert!((net.layers()[0].weights()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient_without_mutation() {
        let mut net = DenseNet::identity(2).unwrap();
        let before = net.clone();
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].bias[1] = f64::NAN;
        assert!(matches!(net.sgd_step(&g, 0.1), Err(Error::Diverged(_))));
        assert_eq!(net, before);
    }

    #[test]
    fn parameters_round_trip() {
        let mut rng = stream(6, Domain::ClientInit, 0);
        let mut net =
            DenseNet::glorot(&[2, 3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut p = net.parameters();
        p[0] = 42.0;
        net.set_parameters(&p).unwrap();
        assert_eq!(net.parameters(), p);
        assert_eq!(net.layers()[0].weights()[0], 42.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
