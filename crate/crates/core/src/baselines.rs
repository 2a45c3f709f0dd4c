//! Upload strategies sharing the round skeleton.
//!
//! | strategy        | upload per client            | server action                 |
//! |-----------------|------------------------------|-------------------------------|
//! | `Local`         | nothing                      | nothing                       |
//! | `FedAllRep`     | every mapped representation  | fit global classifier         |
//! | `FedGhStyle`    | one prototype per category   | fit global classifier         |
//! | `FedProtoStyle` | one prototype per category   | average prototypes per class  |
//! | `FedRe`         | one entangled packet         | fit global classifier         |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entangle::{entangle_mapped, re_weights, EntangledPacket, ReMechanism};
use crate::nn::LabelEncoding;
use crate::protocol::{ClientState, CommConvention, RoundComm};
use crate::{Error, Result};

/// Whether entanglement weights are redrawn every round or drawn once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    #[default]
    #[serde(rename = "rs")]
    Resample,
    #[serde(rename = "fs")]
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Local,
    #[serde(rename = "fedallrep")]
    FedAllRep,
    #[serde(rename = "fedgh_style")]
    FedGhStyle,
    #[serde(rename = "fedproto_style")]
    FedProtoStyle {
        #[serde(default = "default_proto_lambda")]
        lambda: f64,
    },
    #[serde(rename = "fedre")]
    FedRe {
        #[serde(default)]
        mechanism: ReMechanism,
        #[serde(default)]
        sampling: Sampling,
    },
}

fn default_proto_lambda() -> f64 {
    0.1
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::FedRe {
            mechanism: ReMechanism::default(),
            sampling: Sampling::Resample,
        }
    }
}

impl Strategy {
    /// True when the server trains and broadcasts a shared classifier.
    pub fn uses_global_classifier(&self) -> bool {
        matches!(
            self,
            Strategy::FedAllRep | Strategy::FedGhStyle | Strategy::FedRe { .. }
        )
    }

    pub fn label(&self) -> String {
        match self {
            Strategy::Local => "Local".into(),
            Strategy::FedAllRep => "FedAllRep".into(),
            Strategy::FedGhStyle => "FedGH-style".into(),
            Strategy::FedProtoStyle { .. } => "FedProto-style".into(),
            Strategy::FedRe {
                mechanism,
                sampling,
            } => {
                let s = match sampling {
                    Sampling::Resample => "RS",
                    Sampling::Fixed => "FS",
                };
                format!(
                    "FedRE({:?}/{:?}/{s})",
                    mechanism.kind, mechanism.distribution
                )
            }
        }
    }
}

/// What one client sends this round. The client's RNG advances only for
/// randomized entanglement.
pub fn packets_for(
    strategy: &Strategy,
    client: &mut ClientState,
    d: usize,
) -> Result<Vec<EntangledPacket>> {
    if client.unified_dim() != d {
        return Err(Error::shape(format!(
            "client {} maps to {} dims, round expects {d}",
            client.id,
            client.unified_dim()
        )));
    }
    let c = client.num_classes();
    match strategy {
        Strategy::Local => Ok(Vec::new()),
        Strategy::FedAllRep => {
            let set = client.representation_set()?;
            set.reps()
                .iter()
                .zip(set.classes())
                .map(|(r, &k)| EntangledPacket::new(r.clone(), LabelEncoding::one_hot(k, c)?))
                .collect()
        }
        Strategy::FedGhStyle | Strategy::FedProtoStyle { .. } => client
            .prototypes()?
            .into_iter()
            .map(|(k, p)| EntangledPacket::new(p, LabelEncoding::one_hot(k, c)?))
            .collect(),
        Strategy::FedRe {
            mechanism,
            sampling,
        } => {
            let set = client.representation_set()?;
            if set.is_empty() {
                return Err(Error::Empty(format!(
                    "client {} has no training data",
                    client.id
                )));
            }
            let w = match sampling {
                Sampling::Resample => re_weights(&set, *mechanism, &mut client.rng)?,
                Sampling::Fixed => match &client.fixed_weights {
                    Some(w) if w.len() == set.len() => w.clone(),
                    _ => {
                        let w = re_weights(&set, *mechanism, &mut client.rng)?;
                        client.fixed_weights = Some(w.clone());
                        w
                    }
                },
            };
            let (packet, _) = entangle_mapped(set.reps(), set.classes(), c, &w)?;
            Ok(vec![packet])
        }
    }
}

/// The weight vector a fixed-sampling client has cached, if any.
pub fn fixed_weights(client: &ClientState) -> Option<&[f64]> {
    client.fixed_weights.as_ref().map(|w| w.as_slice())
}

/// Per-category mean of uploaded one-hot prototypes, unweighted across
/// clients.
pub fn average_prototypes(uploads: &[EntangledPacket]) -> Vec<(usize, Vec<f64>)> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for p in uploads {
        let Some(k) = p.y_tilde.as_one_hot() else {
            continue;
        };
        let e = sums.entry(k).or_insert_with(|| (vec![0.0; p.dim()], 0));
        for (a, v) in e.0.iter_mut().zip(&p.r_tilde) {
            *a += v;
        }
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// What the ledger needs to know about one participating client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientStats {
    pub samples: usize,
    pub categories: usize,
}

/// Scalars moved in one round by the participating clients described in
/// `stats`.
///
/// Classifier-broadcasting strategies send `d*C + C` scalars per client; the
/// prototype-averaging strategy sends `d` per global prototype (plus `C` per
/// prototype under the labelled convention).
pub fn ledger_for(
    strategy: &Strategy,
    d: u64,
    c: u64,
    stats: &[ClientStats],
    convention: CommConvention,
    global_prototypes: u64,
) -> RoundComm {
    let k = stats.len() as u64;
    let per_item = match convention {
        CommConvention::RepresentationOnly => d,
        CommConvention::RepresentationPlusLabel => d + c,
    };
    let head = d * c + c;
    match strategy {
        Strategy::Local => RoundComm::default(),
        Strategy::FedAllRep => RoundComm {
            upload: stats.iter().map(|s| s.samples as u64 * per_item).sum(),
            broadcast: k * head,
        },
        Strategy::FedGhStyle => RoundComm {
            upload: stats.iter().map(|s| s.categories as u64 * per_item).sum(),
            broadcast: k * head,
        },
        Strategy::FedProtoStyle { .. } => RoundComm {
            upload: stats.iter().map(|s| s.categories as u64 * per_item).sum(),
            broadcast: k * global_prototypes * per_item,
        },
        Strategy::FedRe { .. } => RoundComm {
            upload: k * per_item,
            broadcast: k * head,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(n: &[(usize, usize)]) -> Vec<ClientStats> {
        n.iter()
            .map(|&(samples, categories)| ClientStats {
                samples,
                categories,
            })
            .collect()
    }

    #[test]
    fn local_moves_nothing() {
        let r = ledger_for(
            &Strategy::Local,
            512,
            10,
            &stats(&[(50, 3); 10]),
            CommConvention::RepresentationOnly,
            0,
        );
        assert_eq!(r, RoundComm::default());
    }

    #[test]
    fn fedre_upload_matches_closed_form() {
        let r = ledger_for(
            &Strategy::default(),
            512,
            100,
            &stats(&[(500, 40); 10]),
            CommConvention::RepresentationOnly,
            0,
        );
        assert_eq!(r.upload, 5120);
        assert_eq!(r.broadcast, 513_000);
    }

    #[test]
    fn prototype_upload_with_full_coverage() {
        // Direct count: every client sends C prototypes of d scalars.
        let (k, c, d) = (4u64, 6u64, 16u64);
        let s = stats(&vec![(30, c as usize); k as usize]);
        let r = ledger_for(
            &Strategy::FedGhStyle,
            d,
            c,
            &s,
            CommConvention::RepresentationOnly,
            0,
        );
        let mut direct = 0;
        for _client in 0..k {
            for _cat in 0..c {
                direct += d;
            }
        }
        assert_eq!(r.upload, direct);
        assert_eq!(r.upload, k * c * d);
    }

    #[test]
    fn upload_ordering() {
        let s = stats(&[(40, 3), (7, 1), (100, 10)]);
        let conv = CommConvention::RepresentationOnly;
        let re = ledger_for(&Strategy::default(), 8, 10, &s, conv, 0).upload;
        let gh = ledger_for(&Strategy::FedGhStyle, 8, 10, &s, conv, 0).upload;
        let all = ledger_for(&Strategy::FedAllRep, 8, 10, &s, conv, 0).upload;
        assert!(re <= gh && gh <= all);
    }

    #[test]
    fn strategy_json_shapes() {
        let s: Strategy = serde_json::from_str(r#"{"kind":"fedre","sampling":"fs"}"#).unwrap();
        assert_eq!(
            s,
            Strategy::FedRe {
                mechanism: ReMechanism::default(),
                sampling: Sampling::Fixed
            }
        );
        let s: Strategy = serde_json::from_str(r#"{"kind":"fedproto_style"}"#).unwrap();
        assert_eq!(s, Strategy::FedProtoStyle { lambda: 0.1 });
        assert!(serde_json::from_str::<Strategy>(r#"{"kind":"fedavg"}"#).is_err());
    }

    #[test]
    fn prototype_average_is_per_class_mean() {
        let p = |r: Vec<f64>, k| {
            EntangledPacket::new(r, LabelEncoding::one_hot(k, 2).unwrap()).unwrap()
        };
        let avg = average_prototypes(&[
            p(vec![0.0, 2.0], 0),
            p(vec![2.0, 4.0], 0),
            p(vec![1.0, 1.0], 1),
        ]);
        assert_eq!(avg, vec![(0, vec![1.0, 3.0]), (1, vec![1.0, 1.0])]);
    }
}
