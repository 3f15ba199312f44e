use std::sync::Arc;

use identity_core::analysis::{detect_clusters, mean_opinion};
use identity_core::engine::{OpinionState, SimConfig, Simulation};
use identity_core::experiments::{sweep, Axis, SweepSpec};
use identity_core::graphgen::{gen_deterministic, gen_random_seeded, validate_doubly_stochastic};
use identity_core::{run, AdjacencySpec, BlockLayout, NoiseSpec, Param, PotentialSpec, Scenario};
use proptest::prelude::*;

fn single_group(k: usize, horizon: u64) -> SimConfig {
    let layout = BlockLayout::new(1, k).unwrap();
    SimConfig {
        layout,
        adjacency: Arc::new(gen_deterministic(layout, 0.0).unwrap()),
        potential: PotentialSpec::tent(0.63).unwrap(),
        alpha: 0.1,
        noise: NoiseSpec::off(),
        initial_opinions: vec![0.5],
        horizon,
        record_every: 10,
        seed: k as u64,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn deterministic_matrix_is_exact(n_s in 1usize..6, n_p in 2usize..8, i_p in 0.0f64..0.2) {
        let adj = gen_deterministic(BlockLayout::new(n_s, n_p).unwrap(), i_p).unwrap();
        let rep = validate_doubly_stochastic(&adj, 1e-12);
        prop_assert!(rep.passed, "{rep:?}");
        prop_assert_eq!(rep.max_asymmetry, 0.0);
    }

    #[test]
    fn random_matrix_is_balanced_and_reproducible(n_s in 1usize..5, n_p in 2usize..7, u_b in 0.0f64..=1.0, seed in any::<u64>()) {
        let layout = BlockLayout::new(n_s, n_p).unwrap();
        let a = gen_random_seeded(layout, u_b, seed).unwrap();
        let rep = validate_doubly_stochastic(&a, 1e-6);
        prop_assert!(rep.passed, "{rep:?}");
        prop_assert_eq!(rep.max_asymmetry, 0.0);
        let b = gen_random_seeded(layout, u_b, seed).unwrap();
        prop_assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn reclustering_centroids_keeps_count(ops in proptest::collection::vec(0.0f64..=1.0, 1..40), gap in 0.01f64..0.2) {
        let first = detect_clusters(&ops, gap);
        let again = detect_clusters(&first.centroids(), gap);
        prop_assert_eq!(first.len(), again.len());
    }

    #[test]
    fn noise_free_mean_is_constant_across_samples(
        initial in proptest::collection::vec(0.35f64..0.65, 3),
        i_p in 0.0f64..0.05,
        seed in any::<u64>(),
    ) {
        let mut sc = Scenario::three_communities(3, AdjacencySpec::Deterministic { i_p }, 2000).unwrap();
        sc.initial_opinions = initial;
        let cfg = sc.instantiate(seed).unwrap();
        let out = run(&cfg).unwrap();
        prop_assume!(out.final_state.clamp_events == 0);
        let m0 = mean_opinion(&out.trajectory.samples[0]);
        for s in &out.trajectory.samples {
            prop_assert!((mean_opinion(s) - m0).abs() < 1e-10);
        }
    }

    #[test]
    fn deviant_drifts_group_by_share(k in 2usize..9, delta in -0.3f64..0.3) {
        let mut ops = vec![0.5; k];
        ops[0] += delta;
        let mut sim = Simulation::with_state(single_group(k, 100_000), OpinionState::from_opinions(ops).unwrap()).unwrap();
        sim.advance(20_000);
        prop_assert_eq!(sim.state().clamp_events, 0);
        let consensus = mean_opinion(sim.opinions());
        prop_assert!((consensus - (0.5 + delta / k as f64)).abs() < 1e-3);
        let spread = sim.opinions().iter().map(|x| (x - consensus).abs()).fold(0.0, f64::max);
        prop_assert!(spread < 1e-4);
    }
}

#[test]
fn sweep_points_independent_of_grid_order() {
    let mut base = Scenario::three_communities(3, AdjacencySpec::Random { u_b: 0.05 }, 1500).unwrap();
    base.noise = NoiseSpec::symmetric(0.0);
    let values = vec![0.0, 0.001, 0.003];
    let spec = |values: Vec<f64>| SweepSpec {
        base: base.clone(),
        axis1: Axis {
            param: Param::S,
            values,
        },
        axis2: None,
        replicates: 5,
        base_seed: 99,
    };
    let forward = sweep(&spec(values.clone()), 1).unwrap();
    let backward = sweep(&spec(values.iter().rev().cloned().collect()), 2).unwrap();
    for p in &forward.points {
        let q = backward.points.iter().find(|q| q.values == p.values).unwrap();
        assert_eq!(p.aggregate, q.aggregate);
    }
}
