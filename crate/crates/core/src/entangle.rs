//! Representation mapping and representation entanglement.
//!
//! A client maps each raw extractor output (length `d_k`) to the unified
//! dimension `d` with a [`RepresentationMap`], then collapses its whole local
//! set into one [`EntangledPacket`]:
//!
//! ```text
//! r~ = sum_i w_i * RM(r_i)      y~ = sum_i w_i * y_i
//! ```
//!
//! The weight vector `w` comes from one of six mechanisms ([`ReKind`]). The
//! prototype mechanisms are expressed as per-sample weights, so every
//! mechanism goes through the same weighted sum.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{DenseNet, ForwardCache, GradientSet, LabelEncoding};
use crate::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Maps a raw representation of length `d_k` to the unified dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub enum RepresentationMap {
    /// Mean over contiguous blocks of `d_k / d` entries.
    AveragePool,
    /// Maximum over contiguous blocks of `d_k / d` entries.
    MaxPool,
    /// Learned linear map; the network must be `d_k -> d`.
    FullyConnected(DenseNet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RmKind {
    Ap,
    Mp,
    Fc,
}

impl RepresentationMap {
    pub fn kind(&self) -> RmKind {
        match self {
            RepresentationMap::AveragePool => RmKind::Ap,
            RepresentationMap::MaxPool => RmKind::Mp,
            RepresentationMap::FullyConnected(_) => RmKind::Fc,
        }
    }

    fn block(raw_dim: usize, d: usize) -> Result<usize> {
        if d == 0 || raw_dim == 0 || !raw_dim.is_multiple_of(d) {
            return Err(Error::shape(format!(
                "pooling needs the raw dimension ({raw_dim}) to be a positive multiple of {d}"
            )));
        }
        Ok(raw_dim / d)
    }

    /// Checks that this map can take `raw_dim` inputs to `d` outputs.
    pub fn validate(&self, raw_dim: usize, d: usize) -> Result<()> {
        match self {
            RepresentationMap::AveragePool | RepresentationMap::MaxPool => {
                Self::block(raw_dim, d).map(|_| ())
            }
            RepresentationMap::FullyConnected(net) => {
                if net.input_dim() != raw_dim || net.output_dim() != d {
                    Err(Error::shape(format!(
                        "FC map is {}->{}, need {raw_dim}->{d}",
                        net.input_dim(),
                        net.output_dim()
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn apply(&self, r: &[f64], d: usize) -> Result<Vec<f64>> {
        match self {
            RepresentationMap::AveragePool => {
                let m = Self::block(r.len(), d)?;
                Ok(r.chunks_exact(m)
                    .map(|b| b.iter().sum::<f64>() / m as f64)
                    .collect())
            }
            RepresentationMap::MaxPool => {
                let m = Self::block(r.len(), d)?;
                Ok(r.chunks_exact(m)
                    .map(|b| b.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    .collect())
            }
            RepresentationMap::FullyConnected(net) => {
                self.validate(r.len(), d)?;
                net.forward(r)
            }
        }
    }

    pub(crate) fn apply_traced(&self, r: &[f64], d: usize) -> Result<RmTrace> {
        match self {
            RepresentationMap::FullyConnected(net) => {
                self.validate(r.len(), d)?;
                let cache = net.forward_cached(r)?;
                Ok(RmTrace {
                    output: cache.output().to_vec(),
                    raw: r.to_vec(),
                    fc: Some(cache),
                })
            }
            _ => Ok(RmTrace {
                output: self.apply(r, d)?,
                raw: r.to_vec(),
                fc: None,
            }),
        }
    }

    /// Pulls `grad_out = dL/d(mapped)` back to `dL/d(raw)`; for FC also
    /// returns the gradient of the map's own parameters.
    pub(crate) fn backward(
        &self,
        trace: &RmTrace,
        grad_out: &[f64],
    ) -> Result<(Option<GradientSet>, Vec<f64>)> {
        let d = trace.output.len();
        if grad_out.len() != d {
            return Err(Error::shape("mapped gradient has the wrong length"));
        }
        match self {
            RepresentationMap::AveragePool => {
                let m = Self::block(trace.raw.len(), d)?;
                let scale = 1.0 / m as f64;
                Ok((
                    None,
                    grad_out
                        .iter()
                        .flat_map(|g| std::iter::repeat_n(g * scale, m))
                        .collect(),
                ))
            }
            RepresentationMap::MaxPool => {
                let m = Self::block(trace.raw.len(), d)?;
                let mut grad = vec![0.0; trace.raw.len()];
                for (b, (block, g)) in trace.raw.chunks_exact(m).zip(grad_out).enumerate() {
                    // First maximal entry takes the gradient.
                    let mut best = 0;
                    for (j, v) in block.iter().enumerate() {
                        if *v > block[best] {
                            best = j;
                        }
                    }
                    grad[b * m + best] = *g;
                }
                Ok((None, grad))
            }
            RepresentationMap::FullyConnected(net) => {
                let cache = trace
                    .fc
                    .as_ref()
                    .ok_or_else(|| Error::invalid("FC map trace is missing its cache"))?;
                let (g, dx) = net.backward_from(cache, grad_out)?;
                Ok((Some(g), dx))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RmTrace {
    pub(crate) output: Vec<f64>,
    raw: Vec<f64>,
    fc: Option<ForwardCache>,
}

pub fn rm_map(r: &[f64], op: &RepresentationMap, d: usize) -> Result<Vec<f64>> {
    op.apply(r, d)
}

/// Representations with one-hot labels, all of one length.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    reps: Vec<Vec<f64>>,
    classes: Vec<usize>,
    num_classes: usize,
}

impl RepresentationSet {
    pub fn new(reps: Vec<Vec<f64>>, labels: &[LabelEncoding]) -> Result<Self> {
        if reps.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} representations but {} labels",
                reps.len(),
                labels.len()
            )));
        }
        let num_classes = labels.first().map_or(1, LabelEncoding::num_classes);
        let classes = labels
            .iter()
            .map(|l| {
                if l.num_classes() != num_classes {
                    return Err(Error::InvalidLabel(
                        "labels disagree on category count".into(),
                    ));
                }
                l.as_one_hot().ok_or_else(|| {
                    Error::InvalidLabel("representation labels must be one-hot".into())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_classes(reps, classes, num_classes)
    }

    pub fn from_classes(
        reps: Vec<Vec<f64>>,
        classes: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if reps.len() != classes.len() {
            return Err(Error::shape(format!(
                "{} representations but {} labels",
                reps.len(),
                classes.len()
            )));
        }
        if let Some(first) = reps.first() {
            if first.is_empty() || reps.iter().any(|r| r.len() != first.len()) {
                return Err(Error::shape(
                    "representations must share one positive length",
                ));
            }
        }
        if !reps.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::invalid("representations must be finite"));
        }
        if num_classes == 0 {
            return Err(Error::InvalidLabel("need at least one category".into()));
        }
        if let Some(c) = classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidLabel(format!(
                "class {c} out of range for {num_classes} categories"
            )));
        }
        Ok(Self {
            reps,
            classes,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn reps(&self) -> &[Vec<f64>] {
        &self.reps
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn raw_dim(&self) -> Option<usize> {
        self.reps.first().map(Vec::len)
    }

    /// Sample count per present category, ascending by category.
    pub fn category_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &c in &self.classes {
            *counts.entry(c).or_insert(0) += 1;
        }
        counts
    }
}

/// Normalized non-negative weights, one per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Empty("weight vector is empty".into()));
        }
        if let Some(v) = w
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0 && **v <= 1.0))
        {
            return Err(Error::invalid(format!("weight {v} outside [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The per-client upload: one representation and its soft label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntangledPacket {
    pub r_tilde: Vec<f64>,
    pub y_tilde: LabelEncoding,
}

impl EntangledPacket {
    pub fn new(r_tilde: Vec<f64>, y_tilde: LabelEncoding) -> Result<Self> {
        if r_tilde.is_empty() || !r_tilde.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(
                "packet representation must be finite and non-empty",
            ));
        }
        Ok(Self { r_tilde, y_tilde })
    }

    pub fn dim(&self) -> usize {
        self.r_tilde.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReKind {
    /// Random select representation.
    Rsr,
    /// Vanilla average representation.
    Var,
    /// Random average representation.
    Rar,
    /// Random select prototype.
    Rsp,
    /// Vanilla average prototype.
    Vap,
    /// Random average prototype.
    Rap,
}

impl ReKind {
    pub const ALL: [ReKind; 6] = [
        ReKind::Rsr,
        ReKind::Var,
        ReKind::Rar,
        ReKind::Rsp,
        ReKind::Vap,
        ReKind::Rap,
    ];
}

/// Source of the raw random draws for RAR and RAP. Gaussian and Laplace
/// draws are folded through `|.|` so weights stay non-negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDistribution {
    #[default]
    Uniform,
    Gaussian,
    Laplace,
}

impl WeightDistribution {
    pub const ALL: [WeightDistribution; 3] = [
        WeightDistribution::Uniform,
        WeightDistribution::Gaussian,
        WeightDistribution::Laplace,
    ];

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            WeightDistribution::Uniform => rng.random::<f64>(),
            WeightDistribution::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            }
            WeightDistribution::Laplace => {
                // Inverse CDF of Laplace(0, 1) at u in [-1/2, 1/2).
                let u = rng.random::<f64>() - 0.5;
                (-(u.signum()) * (1.0 - 2.0 * u.abs()).ln()).abs()
            }
        }
    }

    /// `n` draws, redrawn as a whole while they sum to zero.
    fn draw_positive_sum<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Vec<f64> {
        loop {
            let u: Vec<f64> = (0..n).map(|_| self.draw(rng)).collect();
            if u.iter().sum::<f64>() > 0.0 {
                return u;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReMechanism {
    pub kind: ReKind,
    #[serde(default)]
    pub distribution: WeightDistribution,
}

impl ReMechanism {
    pub fn new(kind: ReKind, distribution: WeightDistribution) -> Self {
        Self { kind, distribution }
    }
}

impl Default for ReMechanism {
    fn default() -> Self {
        Self::new(ReKind::Rap, WeightDistribution::Uniform)
    }
}

fn normalize(w: Vec<f64>) -> Result<WeightVector> {
    // Clamp last-ulp excursions above 1 (e.g. a single weight of u/u).
    WeightVector::new(w.into_iter().map(|v| v.min(1.0)).collect())
}

/// Draws the per-sample weight vector for `mech`.
pub fn re_weights<R: Rng + ?Sized>(
    set: &RepresentationSet,
    mech: ReMechanism,
    rng: &mut R,
) -> Result<WeightVector> {
    let n = set.len();
    if n == 0 {
        return Err(Error::Empty(
            "cannot weight an empty representation set".into(),
        ));
    }
    let counts = set.category_counts();
    let w = match mech.kind {
        ReKind::Rsr => {
            let pick = rng.random_range(0..n);
            (0..n).map(|i| if i == pick { 1.0 } else { 0.0 }).collect()
        }
        ReKind::Var => vec![1.0 / n as f64; n],
        ReKind::Rar => {
            let u = mech.distribution.draw_positive_sum(n, rng);
            return weights_from_draws(set, ReKind::Rar, &u);
        }
        ReKind::Rsp => {
            let cats: Vec<usize> = counts.keys().copied().collect();
            let chosen = cats[rng.random_range(0..cats.len())];
            let nc = counts[&chosen] as f64;
            set.classes()
                .iter()
                .map(|&c| if c == chosen { 1.0 / nc } else { 0.0 })
                .collect()
        }
        ReKind::Vap => {
            let ck = counts.len() as f64;
            set.classes()
                .iter()
                .map(|c| 1.0 / (ck * counts[c] as f64))
                .collect()
        }
        ReKind::Rap => {
            let u = mech.distribution.draw_positive_sum(counts.len(), rng);
            return weights_from_draws(set, ReKind::Rap, &u);
        }
    };
    normalize(w)
}

/// RAR or RAP weights from explicit non-negative draws: one per sample for
/// RAR, one per present category (ascending) for RAP.
pub fn weights_from_draws(
    set: &RepresentationSet,
    kind: ReKind,
    draws: &[f64],
) -> Result<WeightVector> {
    let total: f64 = draws.iter().sum();
    if !draws.iter().all(|u| u.is_finite() && *u >= 0.0) || total <= 0.0 {
        return Err(Error::invalid(
            "draws must be non-negative with a positive sum",
        ));
    }
    let w = match kind {
        ReKind::Rar => {
            if draws.len() != set.len() {
                return Err(Error::shape(format!(
                    "{} draws for {} samples",
                    draws.len(),
                    set.len()
                )));
            }
            draws.iter().map(|u| u / total).collect()
        }
        ReKind::Rap => {
            let counts = set.category_counts();
            if draws.len() != counts.len() {
                return Err(Error::shape(format!(
                    "{} draws for {} categories",
                    draws.len(),
                    counts.len()
                )));
            }
            let per_cat: BTreeMap<usize, f64> =
                counts.keys().copied().zip(draws.iter().copied()).collect();
            set.classes()
                .iter()
                .map(|c| per_cat[c] / (counts[c] as f64 * total))
                .collect()
        }
        _ => {
            return Err(Error::invalid(format!(
                "{kind:?} does not take random draws"
            )))
        }
    };
    normalize(w)
}

/// Weighted sum over already-mapped representations. Returns the packet and
/// the number of scalar multiplications performed, which is `n * (d + C)`.
pub fn entangle_mapped(
    mapped: &[Vec<f64>],
    classes: &[usize],
    num_classes: usize,
    w: &WeightVector,
) -> Result<(EntangledPacket, u64)> {
    if mapped.len() != w.len() || classes.len() != w.len() {
        return Err(Error::shape(format!(
            "{} weights for {} representations",
            w.len(),
            mapped.len()
        )));
    }
    let d = mapped
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("nothing to entangle".into()))?;
    let mut r = vec![0.0; d];
    let mut y = vec![0.0; num_classes];
    let mut mults = 0u64;
    for ((rep, &c), &wi) in mapped.iter().zip(classes).zip(w.as_slice()) {
        if rep.len() != d {
            return Err(Error::shape("mapped representations differ in length"));
        }
        for (acc, v) in r.iter_mut().zip(rep) {
            *acc += wi * v;
        }
        // Dense one-hot product, matching R^T w and Y^T w.
        for (k, acc) in y.iter_mut().enumerate() {
            let onehot = if k == c { 1.0 } else { 0.0 };
            *acc += wi * onehot;
        }
        mults += (d + num_classes) as u64;
    }
    let y = LabelEncoding::new(y.into_iter().map(|v| v.min(1.0)).collect())?;
    Ok((EntangledPacket::new(r, y)?, mults))
}

/// Maps every representation with `rm`, then forms the weighted sums.
pub fn entangle(
    set: &RepresentationSet,
    w: &WeightVector,
    rm: &RepresentationMap,
    d: usize,
) -> Result<EntangledPacket> {
    if set.len() != w.len() {
        return Err(Error::shape(format!(
            "{} weights for {} representations",
            w.len(),
            set.len()
        )));
    }
    let mapped = set
        .reps()
        .iter()
        .map(|r| rm.apply(r, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(entangle_mapped(&mapped, set.classes(), set.num_classes(), w)?.0)
}

/// `lambda * (r_i, y_i) + (1 - lambda) * (r_j, y_j)`.
pub fn mixup_pair(
    r_i: &[f64],
    y_i: &LabelEncoding,
    r_j: &[f64],
    y_j: &LabelEncoding,
    lambda: f64,
) -> Result<EntangledPacket> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "mixup lambda {lambda} outside [0, 1]"
        )));
    }
    if r_i.len() != r_j.len() || y_i.num_classes() != y_j.num_classes() {
        return Err(Error::shape("mixup operands differ in shape"));
    }
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| 0.0 + lambda * x + (1.0 - lambda) * y)
            .collect()
    };
    let y = LabelEncoding::new(
        mix(y_i.probs(), y_j.probs())
            .into_iter()
            .map(|v| v.min(1.0))
            .collect(),
    )?;
    EntangledPacket::new(mix(r_i, r_j), y)
}

/// Mean mapped representation of each present category, ascending.
pub fn compute_prototypes(
    set: &RepresentationSet,
    rm: &RepresentationMap,
    d: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let mapped = set
        .reps()
        .iter()
        .map(|r| rm.apply(r, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(prototypes_of_mapped(&mapped, set.classes()))
}

pub(crate) fn prototypes_of_mapped(
    mapped: &[Vec<f64>],
    classes: &[usize],
) -> Vec<(usize, Vec<f64>)> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (r, &c) in mapped.iter().zip(classes) {
        let entry = sums.entry(c).or_insert_with(|| (vec![0.0; r.len()], 0));
        for (acc, v) in entry.0.iter_mut().zip(r) {
            *acc += v;
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(c, (sum, n))| (c, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}
