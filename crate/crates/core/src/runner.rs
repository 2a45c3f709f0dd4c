//! Builds federations from configs and runs them across seeds.

use serde::{Deserialize, Serialize};

use crate::baselines::{packets_for, Sampling, Strategy};
use crate::config::{DatasetSpec, ExperimentConfig, TestMode};
use crate::data::{self, Dataset, PartitionSpec};
use crate::entangle::{ReMechanism, RepresentationMap, RmKind};
use crate::exec;
use crate::nn::{Activation, DenseNet};
use crate::privacy::{attack_client, InversionResult, TargetKind};
use crate::protocol::{run_round, ClientState, Federation, RoundComm, RoundMetrics, ServerState};
use crate::rng::{stream, Domain};
use crate::{Error, Result};

/// Training and held-out data for one seed, before partitioning.
fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    match &cfg.dataset {
        DatasetSpec::Blobs {
            num_classes,
            per_class,
            dim,
            spread,
            radius,
            test_per_class,
        } => {
            let train = data::make_blobs_with(
                *num_classes,
                *per_class,
                *dim,
                *spread,
                *radius,
                &mut stream(seed, Domain::Data, 0),
            )?;
            let test = if *test_per_class > 0 {
                Some(data::make_blobs_with(
                    *num_classes,
                    *test_per_class,
                    *dim,
                    *spread,
                    *radius,
                    &mut stream(seed, Domain::TestData, 0),
                )?)
            } else {
                None
            };
            Ok((train, test))
        }
        DatasetSpec::Csv {
            path,
            num_classes,
            test_path,
        } => {
            let train = data::read_csv(path, *num_classes)?;
            let test = match test_path {
                Some(p) => Some(data::read_csv(p, Some(train.num_classes()))?),
                None => None,
            };
            Ok((train, test))
        }
    }
}

/// Client `(train, test)` pairs for one seed.
pub fn client_data(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let (train, held_out) = load_data(cfg, seed)?;
    let parts = data::partition(
        &train,
        &PartitionSpec {
            mode: cfg.partition,
            num_clients: cfg.num_clients,
            seed,
        },
    )?;
    let held = |what: &str| {
        held_out
            .clone()
            .ok_or_else(|| Error::config("test_mode", format!("{what} needs a held-out test set")))
    };
    parts
        .into_iter()
        .enumerate()
        .map(|(k, part)| match cfg.test_mode {
            TestMode::Split => Ok(data::train_test_split(
                &part,
                &mut stream(seed, Domain::Split, k as u64),
            )),
            TestMode::Shared => Ok((part, held("shared")?)),
            TestMode::Matched => {
                let pool = held("matched")?;
                let cats = part.categories_present();
                let keep: Vec<usize> = pool
                    .samples()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| cats.contains(&s.label))
                    .map(|(i, _)| i)
                    .collect();
                Ok((part, pool.subset(&keep)))
            }
        })
        .collect()
}

/// The federation for one seed, before any round has run.
pub fn build_federation(cfg: &ExperimentConfig, seed: u64) -> Result<Federation> {
    cfg.validate()?;
    let splits = client_data(cfg, seed)?;
    let c = splits[0].0.num_classes();
    let input_dim = splits[0].0.dim();
    let d = cfg.unified_dim;

    let mut server_rng = stream(seed, Domain::ServerInit, 0);
    let head = DenseNet::glorot(
        &[d, c],
        Activation::Identity,
        Activation::Identity,
        &mut server_rng,
    )?;

    let mut clients = Vec::with_capacity(splits.len());
    for (k, (train, test)) in splits.into_iter().enumerate() {
        let mut init = stream(seed, Domain::ClientInit, k as u64);
        let arch = cfg.architecture(k);
        let extractor = if arch.0.is_empty() {
            DenseNet::identity(input_dim)?
        } else {
            let mut sizes = vec![input_dim];
            sizes.extend_from_slice(&arch.0);
            DenseNet::glorot(&sizes, Activation::Relu, cfg.extractor_output, &mut init)?
        };
        let rm = match cfg.rm {
            RmKind::Ap => RepresentationMap::AveragePool,
            RmKind::Mp => RepresentationMap::MaxPool,
            RmKind::Fc => RepresentationMap::FullyConnected(DenseNet::glorot(
                &[arch.raw_dim(input_dim), d],
                Activation::Identity,
                Activation::Identity,
                &mut init,
            )?),
        };
        clients.push(ClientState::new(
            k,
            extractor,
            rm,
            head.clone(),
            train,
            test,
            stream(seed, Domain::ClientTrain, k as u64),
            cfg.client,
        )?);
    }
    let server = ServerState {
        classifier: head,
        lr: cfg.server.lr,
        batch_size: cfg.server.batch_size,
        epochs: cfg.server.epochs,
        rng: stream(seed, Domain::ServerTrain, 0),
    };
    let mut fed = Federation::new(clients, server, cfg.strategy, cfg.comm_convention, seed)?;
    fed.participation_rate = cfg.participation_rate;
    fed.eval_head = cfg.eval_head;
    fed.execution = cfg.execution;
    Ok(fed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Mean accuracy before the first round.
    pub initial_acc: f64,
    pub trace: Vec<RoundMetrics>,
    pub ledger_total: RoundComm,
    /// Set when the run aborted; `trace` then holds the rounds completed.
    pub error: Option<String>,
}

impl SeedRun {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// Accuracy after the last round, or the initial accuracy when no round
    /// ran.
    pub fn final_acc(&self) -> f64 {
        self.trace.last().map_or(self.initial_acc, |m| m.mean_acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub rounds: usize,
    pub seeds: Vec<SeedRun>,
    /// Mean of final accuracies over seeds that completed.
    pub mean_acc: f64,
    /// Population standard deviation of the same.
    pub std_acc: f64,
}

impl RunSummary {
    pub fn final_accs(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .filter(|s| !s.failed())
            .map(SeedRun::final_acc)
            .collect()
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `rounds` rounds on a fresh federation. Errors inside a round end the
/// run and are recorded, not propagated.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> SeedRun {
    let mut out = SeedRun {
        seed,
        initial_acc: f64::NAN,
        trace: Vec::with_capacity(cfg.rounds),
        ledger_total: RoundComm::default(),
        error: None,
    };
    let mut fed = match build_federation(cfg, seed) {
        Ok(f) => f,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    match fed.evaluate() {
        Ok((acc, _)) => out.initial_acc = acc,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    }
    for _ in 0..cfg.rounds {
        match run_round(&mut fed) {
            Ok(m) => out.trace.push(m),
            Err(e) => {
                out.error = Some(e.to_string());
                break;
            }
        }
    }
    out.ledger_total = fed.ledger.total();
    out
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let seeds = exec::map(cfg.execution, &cfg.seeds, |&s| run_seed(cfg, s));
    let mut summary = RunSummary {
        strategy: cfg.strategy.label(),
        rounds: cfg.rounds,
        seeds,
        mean_acc: f64::NAN,
        std_acc: f64::NAN,
    };
    (summary.mean_acc, summary.std_acc) = mean_std(&summary.final_accs());
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: serde_json::Value,
    pub summary: std::result::Result<RunSummary, String>,
}

/// Runs the experiment once per value substituted at dotted `key`.
pub fn sweep(cfg: &ExperimentConfig, key: &str, values: &[serde_json::Value]) -> Vec<SweepPoint> {
    values
        .iter()
        .map(|v| SweepPoint {
            value: v.clone(),
            summary: cfg
                .with_override(key, v.clone())
                .and_then(|c| run_experiment(&c))
                .map_err(|e| e.to_string()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientInversion {
    pub seed: u64,
    pub client: usize,
    #[serde(flatten)]
    pub result: InversionResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub target_kind: TargetKind,
    pub mean_mse: f64,
    pub mean_psnr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySummary {
    pub inversions: Vec<ClientInversion>,
    pub by_kind: Vec<KindStats>,
    pub failed_seeds: Vec<(u64, String)>,
}

impl PrivacySummary {
    pub fn stats(&self, kind: TargetKind) -> Option<KindStats> {
        self.by_kind.iter().copied().find(|s| s.target_kind == kind)
    }
}

fn attack_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ClientInversion>> {
    let mut fed = build_federation(cfg, seed)?;
    for _ in 0..cfg.rounds {
        run_round(&mut fed)?;
    }
    let range = match cfg.data_range {
        Some(r) => r,
        None => {
            let all = Dataset::concat(
                &fed.clients
                    .iter()
                    .map(|c| c.train.clone())
                    .collect::<Vec<_>>(),
            )?;
            let (lo, hi) = all
                .value_range()
                .ok_or_else(|| Error::Empty("no training data to take a range from".into()))?;
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        }
    };
    let entangling = match cfg.strategy {
        s @ Strategy::FedRe { .. } => s,
        _ => Strategy::FedRe {
            mechanism: ReMechanism::default(),
            sampling: Sampling::Resample,
        },
    };
    let d = fed.unified_dim();
    let per_client = exec::map(
        fed.execution,
        &fed.clients,
        |c| -> Result<Vec<ClientInversion>> {
            if c.train.is_empty() {
                return Ok(Vec::new());
            }
            let mut probe = c.clone();
            let packet = packets_for(&entangling, &mut probe, d)?.remove(0);
            let mut rng = stream(seed, Domain::Attack, c.id as u64);
            Ok(
                attack_client(c, &packet.r_tilde, range, &cfg.attack, &mut rng)?
                    .into_iter()
                    .map(|result| ClientInversion {
                        seed,
                        client: c.id,
                        result,
                    })
                    .collect(),
            )
        },
    );
    let mut out = Vec::new();
    for r in per_client {
        out.extend(r?);
    }
    Ok(out)
}

/// Trains per config, then inverts raw, prototype and entangled targets on
/// every client of every seed.
pub fn run_privacy(cfg: &ExperimentConfig) -> Result<PrivacySummary> {
    cfg.validate()?;
    let per_seed = exec::map(cfg.execution, &cfg.seeds, |&s| attack_seed(cfg, s));
    let mut inversions = Vec::new();
    let mut failed_seeds = Vec::new();
    for (seed, r) in cfg.seeds.iter().zip(per_seed) {
        match r {
            Ok(v) => inversions.extend(v),
            Err(e) => failed_seeds.push((*seed, e.to_string())),
        }
    }
    let by_kind = TargetKind::ALL
        .iter()
        .map(|&kind| {
            let of: Vec<&InversionResult> = inversions
                .iter()
                .map(|i| &i.result)
                .filter(|r| r.target_kind == kind)
                .collect();
            let n = of.len().max(1) as f64;
            KindStats {
                target_kind: kind,
                mean_mse: of.iter().map(|r| r.mse).sum::<f64>() / n,
                mean_psnr: of.iter().map(|r| r.psnr).sum::<f64>() / n,
                count: of.len(),
            }
        })
        .collect();
    Ok(PrivacySummary {
        inversions,
        by_kind,
        failed_seeds,
    })
}
