use fedre::baselines::{fixed_weights, Sampling, Strategy};
use fedre::config::{DatasetSpec, ExperimentConfig};
use fedre::data::PartitionMode;
use fedre::entangle::ReMechanism;
use fedre::protocol::{client_local_update, run_round, LocalHyper};
use fedre::runner::{build_federation, run_experiment};
use fedre::Execution;

fn cfg(strategy: Strategy) -> ExperimentConfig {
    let mut c = ExperimentConfig::minimal(
        DatasetSpec::Blobs {
            num_classes: 4,
            per_class: 40,
            dim: 4,
            spread: 1.0,
            radius: 3.0,
            test_per_class: 0,
        },
        5,
    );
    c.partition = PartitionMode::Dirichlet { alpha: 0.5 };
    c.unified_dim = 4;
    c.rounds = 3;
    c.seeds = vec![0, 1];
    c.strategy = strategy;
    c
}

fn fedre(sampling: Sampling) -> Strategy {
    Strategy::FedRe {
        mechanism: ReMechanism::default(),
        sampling,
    }
}

const ALL: [Strategy; 6] = [
    Strategy::Local,
    Strategy::FedAllRep,
    Strategy::FedGhStyle,
    Strategy::FedProtoStyle { lambda: 0.1 },
    Strategy::FedRe {
        mechanism: ReMechanism {
            kind: fedre::entangle::ReKind::Rap,
            distribution: fedre::entangle::WeightDistribution::Uniform,
        },
        sampling: Sampling::Resample,
    },
    Strategy::FedRe {
        mechanism: ReMechanism {
            kind: fedre::entangle::ReKind::Rap,
            distribution: fedre::entangle::WeightDistribution::Uniform,
        },
        sampling: Sampling::Fixed,
    },
];

#[test]
fn runs_replay_bit_for_bit() {
    for s in ALL {
        let c = cfg(s);
        let a = serde_json::to_string(&run_experiment(&c).unwrap()).unwrap();
        let b = serde_json::to_string(&run_experiment(&c).unwrap()).unwrap();
        let mut seq = c.clone();
        seq.execution = Execution::Sequential;
        let d = serde_json::to_string(&run_experiment(&seq).unwrap()).unwrap();
        assert_eq!(a, b, "{s:?}");
        assert_eq!(a, d, "{s:?}");
    }
}

#[test]
fn seeds_differ() {
    let mut c = cfg(fedre(Sampling::Resample));
    c.seeds = vec![0];
    let a = run_experiment(&c).unwrap();
    c.seeds = vec![1];
    let b = run_experiment(&c).unwrap();
    assert_ne!(a.seeds[0].trace, b.seeds[0].trace);
}

#[test]
fn broadcast_installs_the_global_head() {
    let mut fed = build_federation(&cfg(fedre(Sampling::Resample)), 0).unwrap();
    run_round(&mut fed).unwrap();
    let global = fed.server.classifier.clone();
    for c in &mut fed.clients {
        // With a zero learning rate, local training leaves the broadcast head as is.
        c.hyper = LocalHyper { lr: 0.0, ..c.hyper };
        client_local_update(c, Some(&global)).unwrap();
        assert_eq!(c.classifier.parameters(), global.parameters());
    }
}

#[test]
fn local_training_never_touches_the_server() {
    let mut fed = build_federation(&cfg(Strategy::Local), 0).unwrap();
    let before = fed.server.classifier.parameters();
    for _ in 0..3 {
        let m = run_round(&mut fed).unwrap();
        assert_eq!(m.uploads, 0);
        assert_eq!((m.upload_scalars, m.broadcast_scalars), (0, 0));
    }
    assert_eq!(fed.server.classifier.parameters(), before);
}

#[test]
fn fixed_sampling_reuses_its_weights() {
    let mut fed = build_federation(&cfg(fedre(Sampling::Fixed)), 0).unwrap();
    run_round(&mut fed).unwrap();
    let first: Vec<Vec<f64>> = fed
        .clients
        .iter()
        .map(|c| fixed_weights(c).unwrap().to_vec())
        .collect();
    for _ in 0..3 {
        run_round(&mut fed).unwrap();
    }
    for (c, w) in fed.clients.iter().zip(&first) {
        assert_eq!(fixed_weights(c).unwrap(), &w[..]);
    }

    let mut rs = build_federation(&cfg(fedre(Sampling::Resample)), 0).unwrap();
    run_round(&mut rs).unwrap();
    assert!(rs.clients.iter().all(|c| fixed_weights(c).is_none()));
}

#[test]
fn one_packet_per_participant() {
    let mut c = cfg(fedre(Sampling::Resample));
    c.num_clients = 10;
    c.participation_rate = 0.3;
    let mut fed = build_federation(&c, 0).unwrap();
    fed.participation_rate = 0.3;
    for _ in 0..4 {
        let m = run_round(&mut fed).unwrap();
        assert_eq!(m.uploads, m.participants.len());
        assert_eq!(m.upload_scalars, (m.participants.len() * 4) as u64);
    }
}

#[test]
fn upload_volume_orders_strategies() {
    let volume = |s| {
        let mut fed = build_federation(&cfg(s), 0).unwrap();
        run_round(&mut fed).unwrap().upload_scalars
    };
    let re = volume(fedre(Sampling::Resample));
    let gh = volume(Strategy::FedGhStyle);
    let all = volume(Strategy::FedAllRep);
    assert!(re <= gh && gh <= all, "{re} {gh} {all}");
    assert!(re < all);
}

#[test]
fn ledger_accumulates_per_round() {
    let mut fed = build_federation(&cfg(fedre(Sampling::Resample)), 0).unwrap();
    let mut up = 0;
    let mut down = 0;
    for _ in 0..3 {
        let m = run_round(&mut fed).unwrap();
        up += m.upload_scalars;
        down += m.broadcast_scalars;
    }
    let t = fed.ledger.total();
    assert_eq!((t.upload, t.broadcast), (up, down));
    // 5 clients, d = 4, C = 4: head is 4*4 + 4 per client per round.
    assert_eq!(down, 3 * 5 * 20);
}

#[test]
fn accuracies_are_fractions() {
    for s in ALL {
        let summary = run_experiment(&cfg(s)).unwrap();
        for run in &summary.seeds {
            assert!(!run.failed(), "{s:?}: {:?}", run.error);
            for m in &run.trace {
                assert!((0.0..=1.0).contains(&m.mean_acc));
            }
        }
    }
}
