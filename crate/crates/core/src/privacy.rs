//! White-box representation inversion.
//!
//! The attacker knows a client's extractor and representation map and has
//! intercepted a target vector in the unified space. Starting from a Gaussian
//! guess it runs gradient descent on `||RM(g(x)) - target||^2` over the input
//! `x`, then scores the best iterate against the samples the target was
//! built from.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::entangle::RepresentationMap;
use crate::nn::DenseNet;
use crate::protocol::ClientState;
use crate::{Error, Result};

/// Reported PSNR for a perfect reconstruction.
pub const PSNR_CAP_DB: f64 = 99.0;

const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Raw,
    Prototype,
    Entangled,
}

impl TargetKind {
    pub const ALL: [TargetKind; 3] = [
        TargetKind::Raw,
        TargetKind::Prototype,
        TargetKind::Entangled,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub reconstructed: Vec<f64>,
    pub target_kind: TargetKind,
    pub mse: f64,
    pub psnr: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub steps: usize,
    pub lr: f64,
    /// Standard deviation of the Gaussian starting point.
    pub init_std: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.05,
            init_std: 1.0,
        }
    }
}

/// The attacker's white-box view of one client.
#[derive(Debug, Clone, Copy)]
pub struct WhiteBox<'a> {
    pub extractor: &'a DenseNet,
    pub rm: &'a RepresentationMap,
    pub unified_dim: usize,
}

impl<'a> WhiteBox<'a> {
    pub fn of(client: &'a ClientState) -> Self {
        Self {
            extractor: &client.extractor,
            rm: &client.rm,
            unified_dim: client.unified_dim(),
        }
    }

    /// `||RM(g(x)) - target||^2`.
    pub fn objective(&self, x: &[f64], target: &[f64]) -> Result<f64> {
        let rep = self
            .rm
            .apply(&self.extractor.forward(x)?, self.unified_dim)?;
        Ok(rep.iter().zip(target).map(|(r, t)| (r - t) * (r - t)).sum())
    }

    fn objective_and_grad(&self, x: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        let cache = self.extractor.forward_cached(x)?;
        let trace = self.rm.apply_traced(cache.output(), self.unified_dim)?;
        let diff: Vec<f64> = trace
            .output
            .iter()
            .zip(target)
            .map(|(r, t)| r - t)
            .collect();
        let obj = diff.iter().map(|v| v * v).sum();
        let g_rep: Vec<f64> = diff.iter().map(|v| 2.0 * v).collect();
        let (_, g_raw) = self.rm.backward(&trace, &g_rep)?;
        let (_, g_x) = self.extractor.backward_from(&cache, &g_raw)?;
        Ok((obj, g_x))
    }
}

/// Outcome of [`invert`]: best input found and its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub x: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
}

/// Gradient descent on the input from a Gaussian start. Returns the iterate
/// with the lowest objective, so the result is never worse than the start.
/// A non-finite objective restarts from a fresh draw, at most three times.
pub fn invert<R: Rng + ?Sized>(
    model: WhiteBox<'_>,
    target: &[f64],
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Inversion> {
    if target.len() != model.unified_dim {
        return Err(Error::shape(format!(
            "target has {} values, unified dimension is {}",
            target.len(),
            model.unified_dim
        )));
    }
    if !target.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("inversion target must be finite"));
    }
    let init = Normal::new(0.0, cfg.init_std).map_err(|e| Error::invalid(e.to_string()))?;
    let dim = model.extractor.input_dim();

    'restart: for _ in 0..=MAX_RESTARTS {
        let mut x: Vec<f64> = (0..dim).map(|_| init.sample(rng)).collect();
        let initial_objective = model.objective(&x, target)?;
        if !initial_objective.is_finite() {
            continue;
        }
        let mut best = Inversion {
            x: x.clone(),
            objective: initial_objective,
            initial_objective,
            iterations: 0,
        };
        for step in 0..cfg.steps {
            let (_, grad) = model.objective_and_grad(&x, target)?;
            for (xi, g) in x.iter_mut().zip(&grad) {
                *xi -= cfg.lr * g;
            }
            if !x.iter().all(|v| v.is_finite()) {
                continue 'restart;
            }
            let obj = model.objective(&x, target)?;
            if !obj.is_finite() {
                continue 'restart;
            }
            if obj < best.objective {
                best.x.clone_from(&x);
                best.objective = obj;
            }
            best.iterations = step + 1;
        }
        return Ok(best);
    }
    Err(Error::Diverged(format!(
        "inversion objective stayed non-finite after {MAX_RESTARTS} restarts"
    )))
}

/// Smallest MSE against any original, and the matching PSNR for data range
/// `max`. A zero MSE reports [`PSNR_CAP_DB`].
pub fn score(reconstructed: &[f64], originals: &[&[f64]], max: f64) -> Result<(f64, f64)> {
    if originals.is_empty() {
        return Err(Error::Empty("no originals to score against".into()));
    }
    let mut mse = f64::INFINITY;
    for o in originals {
        if o.len() != reconstructed.len() {
            return Err(Error::shape("original and reconstruction differ in length"));
        }
        let m = o
            .iter()
            .zip(reconstructed)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / o.len() as f64;
        mse = mse.min(m);
    }
    Ok((mse, psnr(mse, max)))
}

pub fn psnr(mse: f64, max: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (max * max / mse).log10()).min(PSNR_CAP_DB)
}

/// Attacks one client three ways: a single training sample's representation,
/// one category prototype, and the client's entangled packet representation.
pub fn attack_client<R: Rng + ?Sized>(
    client: &ClientState,
    entangled_target: &[f64],
    data_range: f64,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Vec<InversionResult>> {
    let samples = client.train.samples();
    if samples.is_empty() {
        return Err(Error::Empty(format!(
            "client {} has no training data",
            client.id
        )));
    }
    let model = WhiteBox::of(client);
    let mut out = Vec::with_capacity(3);

    let pick = &samples[rng.random_range(0..samples.len())];
    let raw_target = client.represent(&pick.x)?;
    out.push(run_one(
        model,
        &raw_target,
        &[pick.x.as_slice()],
        TargetKind::Raw,
        data_range,
        cfg,
        rng,
    )?);

    let protos = client.prototypes()?;
    let (cat, proto) = &protos[rng.random_range(0..protos.len())];
    let members: Vec<&[f64]> = samples
        .iter()
        .filter(|s| s.label == *cat)
        .map(|s| s.x.as_slice())
        .collect();
    out.push(run_one(
        model,
        proto,
        &members,
        TargetKind::Prototype,
        data_range,
        cfg,
        rng,
    )?);

    let everyone: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    out.push(run_one(
        model,
        entangled_target,
        &everyone,
        TargetKind::Entangled,
        data_range,
        cfg,
        rng,
    )?);
    Ok(out)
}

fn run_one<R: Rng + ?Sized>(
    model: WhiteBox<'_>,
    target: &[f64],
    originals: &[&[f64]],
    kind: TargetKind,
    data_range: f64,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<InversionResult> {
    let inv = invert(model, target, cfg, rng)?;
    let (mse, psnr) = score(&inv.x, originals, data_range)?;
    Ok(InversionResult {
        reconstructed: inv.x,
        target_kind: kind,
        mse,
        psnr,
        iterations: inv.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::{stream, Domain};

    #[test]
    fn identity_model_is_inverted_exactly() {
        let net = DenseNet::identity(3).unwrap();
        let rm = RepresentationMap::AveragePool;
        let model = WhiteBox {
            extractor: &net,
            rm: &rm,
            unified_dim: 3,
        };
        let target = [0.3, -1.2, 2.5];
        let inv = invert(
            model,
            &target,
            &AttackConfig {
                steps: 300,
                lr: 0.1,
                init_std: 1.0,
            },
            &mut stream(0, Domain::Attack, 0),
        )
        .unwrap();
        for (a, b) in inv.x.iter().zip(target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_steps_returns_the_start() {
        let net = DenseNet::identity(2).unwrap();
        let rm = RepresentationMap::AveragePool;
        let model = WhiteBox {
            extractor: &net,
            rm: &rm,
            unified_dim: 2,
        };
        let cfg = AttackConfig {
            steps: 0,
            lr: 0.1,
            init_std: 1.0,
        };
        let inv = invert(model, &[5.0, 5.0], &cfg, &mut stream(1, Domain::Attack, 0)).unwrap();
        let mut rng = stream(1, Domain::Attack, 0);
        let init = Normal::new(0.0, 1.0).unwrap();
        let expected: Vec<f64> = (0..2).map(|_| init.sample(&mut rng)).collect();
        assert_eq!(inv.x, expected);
        assert_eq!(inv.iterations, 0);
    }

    #[test]
    fn descent_never_returns_worse_than_start() {
        let mut rng = stream(2, Domain::ClientInit, 0);
        let net =
            DenseNet::glorot(&[3, 12, 8], Activation::Relu, Activation::Relu, &mut rng).unwrap();
        let rm = RepresentationMap::MaxPool;
        let model = WhiteBox {
            extractor: &net,
            rm: &rm,
            unified_dim: 4,
        };
        let target = [0.5, 0.1, 0.0, 1.0];
        // Deliberately large step so plain descent oscillates.
        let cfg = AttackConfig {
            steps: 50,
            lr: 3.0,
            init_std: 1.0,
        };
        let inv = invert(model, &target, &cfg, &mut rng).unwrap();
        assert!(inv.objective <= inv.initial_objective);
        assert!((model.objective(&inv.x, &target).unwrap() - inv.objective).abs() < 1e-12);
    }

    #[test]
    fn score_formulas() {
        let x = [1.0, 2.0];
        let (mse, p) = score(&x, &[&[1.0, 2.0]], 1.0).unwrap();
        assert_eq!(mse, 0.0);
        assert_eq!(p, PSNR_CAP_DB);
        let (mse, p) = score(&x, &[&[2.0, 3.0]], 1.0).unwrap();
        assert_eq!(mse, 1.0);
        assert_eq!(p, 0.0);
        assert!(score(&x, &[], 1.0).is_err());
    }

    #[test]
    fn score_takes_the_closest_original() {
        let x = [0.0, 0.0];
        let far: &[f64] = &[3.0, 3.0];
        let near: &[f64] = &[1.0, 0.0];
        let (a, _) = score(&x, &[far, near], 2.0).unwrap();
        let (b, _) = score(&x, &[near, far], 2.0).unwrap();
        let (c, _) = score(&x, &[far], 2.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 0.5);
        assert!(a <= c);
    }

    #[test]
    fn target_shape_is_checked() {
        let net = DenseNet::identity(2).unwrap();
        let rm = RepresentationMap::AveragePool;
        let model = WhiteBox {
            extractor: &net,
            rm: &rm,
            unified_dim: 2,
        };
        let r = invert(
            model,
            &[1.0],
            &AttackConfig::default(),
            &mut stream(0, Domain::Attack, 0),
        );
        assert!(matches!(r, Err(Error::Shape(_))));
        let r = invert(
            model,
            &[1.0, f64::NAN],
            &AttackConfig::default(),
            &mut stream(0, Domain::Attack, 0),
        );
        assert!(r.is_err());
    }
}
