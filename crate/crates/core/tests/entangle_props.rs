use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedre::entangle::{
    compute_prototypes, entangle, re_weights, weights_from_draws, ReKind, ReMechanism,
    RepresentationMap, RepresentationSet, WeightDistribution,
};

const C: usize = 5;

fn set_strategy() -> impl Strategy<Value = RepresentationSet> {
    (1usize..5).prop_flat_map(|d| {
        prop::collection::vec((prop::collection::vec(-10.0f64..10.0, d), 0usize..C), 1..20)
            .prop_map(|items| {
                let (reps, classes): (Vec<_>, Vec<_>) = items.into_iter().unzip();
                RepresentationSet::from_classes(reps, classes, C).unwrap()
            })
    })
}

fn mechanism() -> impl Strategy<Value = ReMechanism> {
    (0usize..6, 0usize..3)
        .prop_map(|(k, d)| ReMechanism::new(ReKind::ALL[k], WeightDistribution::ALL[d]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn packet_lies_in_the_hull(set in set_strategy(), mech in mechanism(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = re_weights(&set, mech, &mut rng).unwrap();
        prop_assert!(w.as_slice().iter().all(|&v| v >= 0.0));
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let d = set.raw_dim().unwrap();
        let p = entangle(&set, &w, &RepresentationMap::AveragePool, d).unwrap();
        for j in 0..d {
            let lo = set.reps().iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = set.reps().iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p.r_tilde[j] >= lo - 1e-9 && p.r_tilde[j] <= hi + 1e-9);
        }
        // Soft label mass sits only on categories the client has.
        let present = set.category_counts();
        for (c, &y) in p.y_tilde.probs().iter().enumerate() {
            if !present.contains_key(&c) {
                prop_assert_eq!(y, 0.0);
            }
        }
    }

    #[test]
    fn category_mass_matches_weights(set in set_strategy(), mech in mechanism(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = re_weights(&set, mech, &mut rng).unwrap();
        let d = set.raw_dim().unwrap();
        let p = entangle(&set, &w, &RepresentationMap::AveragePool, d).unwrap();
        for c in 0..C {
            let mass: f64 = set.classes().iter().zip(w.as_slice())
                .filter(|(&k, _)| k == c).map(|(_, &v)| v).sum();
            prop_assert!((p.y_tilde.probs()[c] - mass).abs() < 1e-12);
        }
    }

    #[test]
    fn prototype_mechanisms_balance_categories(set in set_strategy(), seed in 0u64..1000) {
        // Under VAP every present category gets the same total weight.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = re_weights(&set, ReMechanism::new(ReKind::Vap, WeightDistribution::Uniform), &mut rng).unwrap();
        let present = set.category_counts();
        for &c in present.keys() {
            let mass: f64 = set.classes().iter().zip(w.as_slice())
                .filter(|(&k, _)| k == c).map(|(_, &v)| v).sum();
            prop_assert!((mass - 1.0 / present.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rap_weights_are_shared_within_a_category(set in set_strategy(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = re_weights(&set, ReMechanism::new(ReKind::Rap, WeightDistribution::Gaussian), &mut rng).unwrap();
        let counts = set.category_counts();
        let mut per_cat = std::collections::BTreeMap::new();
        for (&c, &v) in set.classes().iter().zip(w.as_slice()) {
            let total = v * counts[&c] as f64;
            let e = per_cat.entry(c).or_insert(total);
            prop_assert!((*e - total).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_draws_collapse_to_the_fixed_mechanism(set in set_strategy(), v in 0.01f64..5.0) {
        let rar = weights_from_draws(&set, ReKind::Rar, &vec![v; set.len()]).unwrap();
        for &x in rar.as_slice() {
            prop_assert!((x - 1.0 / set.len() as f64).abs() < 1e-12);
        }
        let cats = set.category_counts().len();
        let rap = weights_from_draws(&set, ReKind::Rap, &vec![v; cats]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vap = re_weights(&set, ReMechanism::new(ReKind::Vap, WeightDistribution::Uniform), &mut rng).unwrap();
        for (a, b) in rap.as_slice().iter().zip(vap.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn average_pool_takes_block_means(blocks in 1usize..4, d in 1usize..5, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..blocks * d).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
        let ap = RepresentationMap::AveragePool.apply(&r, d).unwrap();
        let mp = RepresentationMap::MaxPool.apply(&r, d).unwrap();
        for j in 0..d {
            let block = &r[j * blocks..(j + 1) * blocks];
            prop_assert!((ap[j] - block.iter().sum::<f64>() / blocks as f64).abs() < 1e-12);
            prop_assert_eq!(mp[j], block.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}

#[test]
fn prototypes_are_class_means() {
    let set = RepresentationSet::from_classes(
        vec![vec![0.0, 2.0], vec![2.0, 4.0], vec![10.0, -1.0]],
        vec![1, 1, 3],
        4,
    )
    .unwrap();
    let p = compute_prototypes(&set, &RepresentationMap::AveragePool, 2).unwrap();
    assert_eq!(p, vec![(1, vec![1.0, 3.0]), (3, vec![10.0, -1.0])]);
}

#[test]
fn pooling_rejects_indivisible_widths() {
    assert!(RepresentationMap::AveragePool.apply(&[1.0; 5], 2).is_err());
    assert!(RepresentationMap::MaxPool.apply(&[1.0; 3], 4).is_err());
}

#[test]
fn draw_count_must_match() {
    let set = RepresentationSet::from_classes(vec![vec![0.0]; 3], vec![0, 0, 1], 2).unwrap();
    assert!(weights_from_draws(&set, ReKind::Rar, &[1.0, 1.0]).is_err());
    assert!(weights_from_draws(&set, ReKind::Rap, &[1.0, 1.0, 1.0]).is_err());
    assert!(weights_from_draws(&set, ReKind::Vap, &[1.0, 1.0]).is_err());
}
