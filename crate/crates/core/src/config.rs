//! Experiment configuration.
//!
//! Configs are JSON. Unknown keys are rejected and every omitted field takes
//! the default documented on it, so `{"dataset": {...}, "num_clients": 2}`
//! is a complete config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Strategy;
use crate::data::PartitionMode;
use crate::entangle::RmKind;
use crate::exec::Execution;
use crate::nn::Activation;
use crate::privacy::AttackConfig;
use crate::protocol::{CommConvention, EvalHead, LocalHyper};
use crate::{Error, Result};

/// Where test data comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// 3:1 train/test split inside each client, per category.
    #[default]
    Split,
    /// A separate held-out set that every client is scored on in full.
    Shared,
    /// A separate held-out set; each client is scored on the categories it
    /// trains on.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian blobs. `per_class` is the training size per category;
    /// `test_per_class` sizes the held-out set for the shared and matched
    /// test modes.
    Blobs {
        num_classes: usize,
        per_class: usize,
        #[serde(default = "default_blob_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        /// Distance of blob means from the origin, in units of `spread`.
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        test_per_class: usize,
    },
    /// CSV with header `x0,...,label`. `test_path` is required for the shared
    /// and matched test modes.
    Csv {
        path: PathBuf,
        #[serde(default)]
        num_classes: Option<usize>,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
}

fn default_blob_dim() -> usize {
    2
}
fn default_spread() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    crate::data::DEFAULT_BLOB_RADIUS
}

impl DatasetSpec {
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            DatasetSpec::Blobs { num_classes, .. } => Some(*num_classes),
            DatasetSpec::Csv { num_classes, .. } => *num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerHyper {
    #[serde(default = "default_server_lr")]
    pub lr: f64,
    #[serde(default = "default_server_batch")]
    pub batch_size: usize,
    #[serde(default = "default_server_epochs")]
    pub epochs: usize,
}

fn default_server_lr() -> f64 {
    0.01
}
fn default_server_batch() -> usize {
    10
}
fn default_server_epochs() -> usize {
    5
}

impl Default for ServerHyper {
    fn default() -> Self {
        Self {
            lr: default_server_lr(),
            batch_size: default_server_batch(),
            epochs: default_server_epochs(),
        }
    }
}

fn default_client_hyper() -> LocalHyper {
    LocalHyper {
        lr: 0.05,
        batch_size: 16,
        epochs: 1,
    }
}

/// Extractor widths after the input layer. The last entry is the client's
/// raw representation dimension `d_k`. An empty list is a single linear
/// layer initialized to the identity, so the representation starts as the
/// input itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Architecture(pub Vec<usize>);

impl Architecture {
    /// `d_k` for inputs of width `input_dim`.
    pub fn raw_dim(&self, input_dim: usize) -> usize {
        self.0.last().copied().unwrap_or(input_dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub test_mode: TestMode,
    /// Default: Dirichlet with alpha 0.5.
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    pub num_clients: usize,
    #[serde(default = "default_rate")]
    pub participation_rate: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Default: FedRE with RAP weights drawn uniformly, re-sampled each round.
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_rm")]
    pub rm: RmKind,
    #[serde(default = "default_unified_dim")]
    pub unified_dim: usize,
    /// One entry per client. Empty means every client uses `[16, d]`.
    #[serde(default)]
    pub architectures: Vec<Architecture>,
    /// Activation on the extractor's last layer; hidden layers use ReLU.
    #[serde(default = "default_extractor_output")]
    pub extractor_output: Activation,
    #[serde(default = "default_client_hyper")]
    pub client: LocalHyper,
    #[serde(default)]
    pub server: ServerHyper,
    #[serde(default)]
    pub comm_convention: CommConvention,
    #[serde(default)]
    pub eval_head: EvalHead,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub attack: AttackConfig,
    /// PSNR data range. Default: max minus min over the training data.
    #[serde(default)]
    pub data_range: Option<f64>,
}

fn default_partition() -> PartitionMode {
    PartitionMode::Dirichlet { alpha: 0.5 }
}
fn default_rate() -> f64 {
    1.0
}
fn default_rounds() -> usize {
    10
}
fn default_rm() -> RmKind {
    RmKind::Ap
}
fn default_unified_dim() -> usize {
    8
}
fn default_extractor_output() -> Activation {
    Activation::Relu
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// A valid config with every optional field at its default.
    pub fn minimal(dataset: DatasetSpec, num_clients: usize) -> Self {
        Self {
            dataset,
            test_mode: TestMode::default(),
            partition: default_partition(),
            num_clients,
            participation_rate: default_rate(),
            rounds: default_rounds(),
            strategy: Strategy::default(),
            rm: default_rm(),
            unified_dim: default_unified_dim(),
            architectures: Vec::new(),
            extractor_output: default_extractor_output(),
            client: default_client_hyper(),
            server: ServerHyper::default(),
            comm_convention: CommConvention::default(),
            eval_head: EvalHead::default(),
            seeds: default_seeds(),
            output: None,
            execution: Execution::default(),
            attack: AttackConfig::default(),
            data_range: None,
        }
    }

    /// Architecture of client `k`, after defaulting.
    pub fn architecture(&self, k: usize) -> Architecture {
        self.architectures
            .get(k)
            .cloned()
            .unwrap_or_else(|| Architecture(vec![16, self.unified_dim]))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_clients;
        if k == 0 {
            return Err(Error::config("num_clients", "must be at least 1"));
        }
        match &self.dataset {
            DatasetSpec::Blobs {
                num_classes,
                per_class,
                dim,
                spread,
                radius,
                test_per_class,
            } => {
                if *num_classes < 2 {
                    return Err(Error::config(
                        "dataset.num_classes",
                        "need at least 2 categories",
                    ));
                }
                if *per_class == 0 || *dim == 0 {
                    return Err(Error::config("dataset.per_class", "sizes must be positive"));
                }
                if !(spread.is_finite() && *spread > 0.0) {
                    return Err(Error::config("dataset.spread", "must be positive"));
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::config("dataset.radius", "must be >= 0"));
                }
                if self.test_mode != TestMode::Split && *test_per_class == 0 {
                    return Err(Error::config(
                        "dataset.test_per_class",
                        "held-out test modes need a positive test size",
                    ));
                }
            }
            DatasetSpec::Csv { test_path, .. } => {
                if self.test_mode != TestMode::Split && test_path.is_none() {
                    return Err(Error::config(
                        "dataset.test_path",
                        "held-out test modes need a test file",
                    ));
                }
            }
        }
        match self.partition {
            PartitionMode::Dirichlet { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                return Err(Error::config("partition.alpha", "must be positive"));
            }
            PartitionMode::LongTail {
                imbalance_factor,
                alpha,
            } => {
                if !(imbalance_factor.is_finite() && imbalance_factor >= 1.0) {
                    return Err(Error::config("partition.imbalance_factor", "must be >= 1"));
                }
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::config("partition.alpha", "must be positive"));
                }
            }
            PartitionMode::Pathological {
                categories_per_client,
            } => {
                if categories_per_client == 0 {
                    return Err(Error::config(
                        "partition.categories_per_client",
                        "must be positive",
                    ));
                }
                if let Some(c) = self.dataset.num_classes() {
                    if categories_per_client > c {
                        return Err(Error::config(
                            "partition.categories_per_client",
                            format!("{categories_per_client} exceeds the {c} categories"),
                        ));
                    }
                }
            }
            _ => {}
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return Err(Error::config("participation_rate", "must lie in (0, 1]"));
        }
        if self.unified_dim == 0 {
            return Err(Error::config("unified_dim", "must be positive"));
        }
        if !self.architectures.is_empty() && self.architectures.len() != k {
            return Err(Error::config(
                "architectures",
                format!(
                    "{} architectures listed for {k} clients",
                    self.architectures.len()
                ),
            ));
        }
        for i in 0..k {
            let arch = self.architecture(i);
            if arch.0.contains(&0) {
                return Err(Error::config(
                    format!("architectures[{i}]"),
                    "widths must be positive",
                ));
            }
            // Input width is only known up front for generated data; CSV
            // inputs are checked when clients are built.
            let raw = match (&self.dataset, arch.0.last()) {
                (_, Some(&w)) => Some(w),
                (DatasetSpec::Blobs { dim, .. }, None) => Some(*dim),
                (DatasetSpec::Csv { .. }, None) => None,
            };
            if let (Some(raw), RmKind::Ap | RmKind::Mp) = (raw, self.rm) {
                if !raw.is_multiple_of(self.unified_dim) {
                    return Err(Error::config(
                        format!("architectures[{i}]"),
                        format!(
                            "raw dimension {} is not a multiple of unified_dim {}",
                            raw, self.unified_dim
                        ),
                    ));
                }
            }
        }
        check_hyper("client", self.client.lr, self.client.batch_size)?;
        check_hyper("server", self.server.lr, self.server.batch_size)?;
        if let Strategy::FedProtoStyle { lambda } = self.strategy {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Error::config("strategy.lambda", "must be >= 0"));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if let Some(r) = self.data_range {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config("data_range", "must be positive"));
            }
        }
        if !(self.attack.lr.is_finite() && self.attack.lr >= 0.0 && self.attack.init_std > 0.0) {
            return Err(Error::config(
                "attack",
                "lr must be >= 0 and init_std positive",
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config {
            key: unknown_key(&e.to_string()).unwrap_or_else(|| "<root>".into()),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Returns a copy with the value at dotted `key` replaced, revalidated.
    pub fn with_override(&self, key: &str, value: serde_json::Value) -> Result<Self> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            node = match node {
                serde_json::Value::Object(map) => {
                    if last {
                        map.insert((*part).to_string(), value);
                        break;
                    }
                    map.get_mut(*part)
                        .ok_or_else(|| Error::config(key, "no such key"))?
                }
                serde_json::Value::Array(items) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| Error::config(key, "expected an index"))?;
                    let slot = items
                        .get_mut(idx)
                        .ok_or_else(|| Error::config(key, "index out of range"))?;
                    if last {
                        *slot = value;
                        break;
                    }
                    slot
                }
                _ => return Err(Error::config(key, "path runs through a scalar")),
            };
        }
        let cfg: Self =
            serde_json::from_value(tree).map_err(|e| Error::config(key, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_hyper(section: &str, lr: f64, batch: usize) -> Result<()> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::config(format!("{section}.lr"), "must be >= 0"));
    }
    if batch == 0 {
        return Err(Error::config(
            format!("{section}.batch_size"),
            "must be positive",
        ));
    }
    Ok(())
}

fn unknown_key(msg: &str) -> Option<String> {
    let rest = msg.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json(&text)
}
