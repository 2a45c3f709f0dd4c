//! Datasets and non-IID partitioning.
//!
//! Three heterogeneity regimes are supported:
//!
//! - Dirichlet ([`PartitionMode::Dirichlet`]): for each category, client shares
//!   are drawn from `Dir(alpha * 1_K)` and turned into integer counts by
//!   largest remainder.
//! - Pathological ([`PartitionMode::Pathological`]): every client receives
//!   samples from exactly `categories_per_client` categories, dealt as
//!   shards of random, unequal size.
//! - Long tail ([`PartitionMode::LongTail`]): the pool is first thinned so
//!   category `c` keeps `n_max * IF^(-c/(C-1))` samples, then split with the
//!   Dirichlet rule.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Domain, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    num_classes: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, num_classes: usize, dim: usize) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::invalid(
                "dataset needs positive class count and dimension",
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label >= num_classes {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} but only {num_classes} categories exist",
                    s.label
                )));
            }
            if s.x.len() != dim {
                return Err(Error::shape(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.x.len()
                )));
            }
            if !s.x.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!(
                    "sample {i} has non-finite features"
                )));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            dim,
        })
    }

    pub fn empty(num_classes: usize, dim: usize) -> Self {
        Self {
            samples: Vec::new(),
            num_classes,
            dim,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Categories with at least one sample, ascending.
    pub fn categories_present(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| s.label)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Smallest and largest feature value over the whole dataset.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let mut it = self.samples.iter().flat_map(|s| s.x.iter().copied());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub(crate) fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label].push(i);
        }
        by_class
    }

    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("no datasets to concatenate".into()))?;
        let mut samples = Vec::new();
        for p in parts {
            if p.num_classes != first.num_classes || p.dim != first.dim {
                return Err(Error::shape("datasets disagree on classes or dimension"));
            }
            samples.extend(p.samples.iter().cloned());
        }
        Ok(Dataset {
            samples,
            num_classes: first.num_classes,
            dim: first.dim,
        })
    }
}

/// Default distance of blob means from the origin, in units of `spread`.
pub const DEFAULT_BLOB_RADIUS: f64 = 3.0;

/// Gaussian blobs, one per category. Means sit on a circle of radius
/// `3 * spread` in the first two coordinates; noise is isotropic with
/// standard deviation `spread`. Samples are ordered class by class.
pub fn make_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    make_blobs_with(
        num_classes,
        per_class,
        dim,
        spread,
        DEFAULT_BLOB_RADIUS,
        &mut stream(seed, Domain::Data, 0),
    )
}

/// Like [`make_blobs`] with the circle radius given as `radius * spread`.
pub fn make_blobs_with(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    radius: f64,
    rng: &mut SimRng,
) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::invalid("blob counts and dimension must be positive"));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::invalid(format!("spread {spread} must be positive")));
    }
    let noise = Normal::new(0.0, spread).map_err(|e| Error::invalid(e.to_string()))?;
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!("radius {radius} must be >= 0")));
    }
    let radius = radius * spread;
    let mut samples = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        let angle = std::f64::consts::TAU * c as f64 / num_classes as f64;
        let mut mean = vec![0.0; dim];
        mean[0] = radius * angle.cos();
        if dim > 1 {
            mean[1] = radius * angle.sin();
        }
        for _ in 0..per_class {
            let x = mean.iter().map(|m| m + noise.sample(rng)).collect();
            samples.push(Sample { x, label: c });
        }
    }
    Dataset::new(samples, num_classes, dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    /// Practical setting: per-category Dirichlet shares.
    Dirichlet { alpha: f64 },
    /// Pathological setting: fixed number of categories per client.
    Pathological { categories_per_client: usize },
    /// Exponential long-tail thinning followed by Dirichlet shares.
    LongTail { imbalance_factor: f64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub num_clients: usize,
    pub seed: u64,
}

/// Splits `ds` into `num_clients` disjoint datasets whose union is `ds`
/// (after long-tail thinning, for that mode).
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<Dataset>> {
    if ds.is_empty() {
        return Err(Error::Empty("cannot partition an empty dataset".into()));
    }
    if spec.num_clients == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    let mut rng = stream(spec.seed, Domain::Partition, 0);
    match spec.mode {
        PartitionMode::Dirichlet { alpha } => {
            dirichlet_split(ds, spec.num_clients, alpha, &mut rng)
        }
        PartitionMode::Pathological {
            categories_per_client,
        } => shard_split(ds, spec.num_clients, categories_per_client, &mut rng),
        PartitionMode::LongTail {
            imbalance_factor,
            alpha,
        } => {
            let thinned = apply_longtail(ds, imbalance_factor, spec.seed)?;
            dirichlet_split(&thinned, spec.num_clients, alpha, &mut rng)
        }
    }
}

fn sample_dirichlet(alpha: f64, k: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // All-zero draws happen for tiny alpha through underflow.
        if total > 0.0 && total.is_finite() {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

/// Integer counts summing to `total`, proportional to `shares`, by largest
/// remainder (ties to the lower index).
pub fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    if shares.is_empty() || sum <= 0.0 {
        return vec![0; shares.len()];
    }
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn dirichlet_split(
    ds: &Dataset,
    num_clients: usize,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<Vec<Dataset>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Partition(format!("alpha {alpha} must be positive")));
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for mut idx in ds.indices_by_class() {
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(rng);
        let shares = sample_dirichlet(alpha, num_clients, rng)?;
        let counts = apportion(idx.len(), &shares);
        let mut start = 0;
        for (client, n) in counts.into_iter().enumerate() {
            assigned[client].extend_from_slice(&idx[start..start + n]);
            start += n;
        }
    }
    Ok(assigned
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            ds.subset(&v)
        })
        .collect())
}

fn shard_split(
    ds: &Dataset,
    num_clients: usize,
    per_client: usize,
    rng: &mut SimRng,
) -> Result<Vec<Dataset>> {
    let present: Vec<usize> = ds.categories_present();
    let num_cats = present.len();
    if per_client == 0 || per_client > num_cats {
        return Err(Error::Partition(format!(
            "{per_client} categories per client requested but {num_cats} categories hold samples"
        )));
    }
    let total_shards = num_clients * per_client;
    if !total_shards.is_multiple_of(num_cats) {
        return Err(Error::Partition(format!(
            "{num_clients} clients x {per_client} categories = {total_shards} shards, \
             which does not divide evenly over {num_cats} categories"
        )));
    }
    let shards_per_cat = total_shards / num_cats;
    let by_class = ds.indices_by_class();
    if let Some(&c) = present
        .iter()
        .find(|&&c| by_class[c].len() < shards_per_cat)
    {
        return Err(Error::Partition(format!(
            "category {c} has {} samples, fewer than the {shards_per_cat} shards it must fill",
            by_class[c].len()
        )));
    }

    // Shards are listed category by category and shard i goes to client
    // i mod K. Consecutive shards of one category therefore land on distinct
    // clients as long as shards_per_cat <= K, which per_client <= C ensures.
    let mut cat_order = present.clone();
    cat_order.shuffle(rng);
    let mut client_order: Vec<usize> = (0..num_clients).collect();
    client_order.shuffle(rng);

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    let mut shard_no = 0;
    for &c in &cat_order {
        let mut idx = by_class[c].clone();
        idx.shuffle(rng);
        let sizes = random_composition(idx.len(), shards_per_cat, rng);
        let mut start = 0;
        for size in sizes {
            let client = client_order[shard_no % num_clients];
            assigned[client].extend_from_slice(&idx[start..start + size]);
            start += size;
            shard_no += 1;
        }
    }
    Ok(assigned
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            ds.subset(&v)
        })
        .collect())
}

/// Splits `n` into `parts` positive sizes by drawing distinct cut points.
fn random_composition(n: usize, parts: usize, rng: &mut SimRng) -> Vec<usize> {
    debug_assert!(parts >= 1 && n >= parts);
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n - 1, parts - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut sizes = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        sizes.push(c - prev);
        prev = c;
    }
    sizes.push(n - prev);
    sizes
}

/// Target size for category `c` of `num_classes` under imbalance factor `imbalance_factor`.
pub fn longtail_size(n_max: usize, imbalance_factor: f64, c: usize, num_classes: usize) -> usize {
    if num_classes <= 1 {
        return n_max;
    }
    let exponent = -(c as f64) / (num_classes - 1) as f64;
    ((n_max as f64) * imbalance_factor.powf(exponent))
        .round()
        .max(1.0) as usize
}

/// Thins category `c` to `n_max * IF^(-c/(C-1))` samples (at least one, at
/// most what it has), choosing survivors uniformly. Sample order is kept.
pub fn apply_longtail(ds: &Dataset, imbalance_factor: f64, seed: u64) -> Result<Dataset> {
    if !(imbalance_factor.is_finite() && imbalance_factor >= 1.0) {
        return Err(Error::invalid(format!(
            "imbalance factor {imbalance_factor} must be >= 1"
        )));
    }
    let by_class = ds.indices_by_class();
    let n_max = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = stream(seed, Domain::LongTail, 0);
    let mut keep = Vec::with_capacity(ds.len());
    for (c, idx) in by_class.iter().enumerate() {
        let target = longtail_size(n_max, imbalance_factor, c, ds.num_classes).min(idx.len());
        if target == idx.len() {
            keep.extend_from_slice(idx);
        } else {
            keep.extend(
                rand::seq::index::sample(&mut rng, idx.len(), target)
                    .into_iter()
                    .map(|j| idx[j]),
            );
        }
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}

/// Per-category split with `floor(n_c / 4)` samples of each category held
/// out for testing (a 3:1 ratio).
pub fn train_test_split(ds: &Dataset, rng: &mut impl Rng) -> (Dataset, Dataset) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in ds.indices_by_class() {
        idx.shuffle(rng);
        let n_test = idx.len() / 4;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (ds.subset(&train), ds.subset(&test))
}

/// Reads a CSV with header `x0,...,x{D-1},label`. The category count is the
/// largest label plus one unless given.
pub fn read_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .clone();
    let width = headers.len();
    if width < 2 || &headers[width - 1] != "label" {
        return Err(parse_err("header must be x0,...,xD,label".into()));
    }
    for (i, h) in headers.iter().take(width - 1).enumerate() {
        if h != format!("x{i}") {
            return Err(parse_err(format!("column {i} is `{h}`, expected `x{i}`")));
        }
    }
    let mut samples = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let x = rec
            .iter()
            .take(width - 1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("row {}: {e}", row + 1)))?;
        let label = rec[width - 1]
            .trim()
            .parse::<usize>()
            .map_err(|e| parse_err(format!("row {}: label: {e}", row + 1)))?;
        samples.push(Sample { x, label });
    }
    let observed = samples.iter().map(|s| s.label + 1).max().unwrap_or(1);
    let classes = num_classes.unwrap_or(observed);
    Dataset::new(samples, classes, width - 1).map_err(|e| parse_err(e.to_string()))
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..ds.dim {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("label\n");
    for s in &ds.samples {
        for v in &s.x {
            // Shortest representation that parses back to the same f64.
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{}\n", s.label));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `client_<k>.csv` for each partition into `dir`.
pub fn write_partitions(parts: &[Dataset], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, p) in parts.iter().enumerate() {
        write_csv(p, &dir.join(format!("client_{k}.csv")))?;
    }
    Ok(())
}

/// Shannon entropy (nats) of a category histogram.
pub fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}
