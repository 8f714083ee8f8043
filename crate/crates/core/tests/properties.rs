use capanneal_core::baselines::brute_force_capacitated;
use capanneal_core::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::Config;

fn dataset(rows: &[Vec<f64>], weights: &[f64]) -> Dataset {
    Dataset::from_rows(rows, Some(weights.to_vec())).unwrap()
}

/// Points, weights and `k` locations in `d` dimensions.
fn instance(max_n: usize, max_k: usize) -> impl Strategy<Value = (Dataset, Array2<f64>)> {
    (1usize..=3, 1usize..=max_k)
        .prop_flat_map(move |(d, k)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), k.max(2)..=max_n),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), k),
            )
        })
        .prop_flat_map(|(rows, locs)| {
            let n = rows.len();
            (Just(rows), Just(locs), prop::collection::vec(0.1f64..2.0, n))
        })
        .prop_map(|(rows, locs, w)| {
            let k = locs.len();
            let d = locs[0].len();
            let y = Array2::from_shape_vec((k, d), locs.concat()).unwrap();
            (dataset(&rows, &w), y)
        })
}

fn log_eta(k: usize) -> impl Strategy<Value = Eta> {
    prop::collection::vec(-3.0f64..3.0, k).prop_map(|v| Eta::PerCluster(Array1::from(v)))
}

fn with_eta(max_n: usize, max_k: usize) -> impl Strategy<Value = (Dataset, Array2<f64>, Eta)> {
    instance(max_n, max_k).prop_flat_map(|(ds, y)| {
        let k = y.nrows();
        (Just(ds), Just(y), log_eta(k))
    })
}

fn log_beta(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

fn row_stochastic(p: &AssocMatrix, tol: f64) -> bool {
    p.values()
        .outer_iter()
        .all(|r| (r.sum() - 1.0).abs() <= tol && r.iter().all(|v| v.is_finite() && *v >= 0.0))
}

fn translate(ds: &Dataset, t: f64) -> Dataset {
    ds.map_points(|v| v + t)
}

proptest! {
    #![proptest_config(Config::with_cases(128))]

    #[test]
    fn distortion_bounds_and_entropy_range((ds, y, eta) in with_eta(10, 4), beta in log_beta(1e-3, 1e3)) {
        let k = y.nrows();
        let state = ClusterState::new(y.clone(), eta, beta);
        let p = associations(&ds, &state).unwrap();
        let d = distortion(&ds, y.view()).unwrap();
        let dbar = modified_distortion(&ds, y.view(), &p).unwrap();
        prop_assert!(d <= dbar + 1e-12 * dbar.max(1.0));
        let h = conditional_entropy(&ds, &p).unwrap();
        prop_assert!(h >= -1e-15 && h <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn distortion_translates_and_scales((ds, y) in instance(10, 4), t in -50.0f64..50.0, sigma in 0.1f64..10.0) {
        let d = distortion(&ds, y.view()).unwrap();
        let dt = distortion(&translate(&ds, t), y.mapv(|v| v + t).view()).unwrap();
        prop_assert!((d - dt).abs() <= 1e-9 * d.max(1.0));
        let ds_s = ds.map_points(|v| v * sigma);
        let ds2 = distortion(&ds_s, y.mapv(|v| v * sigma).view()).unwrap();
        prop_assert!((ds2 - sigma * sigma * d).abs() <= 1e-10 * ds2.max(1.0));
    }

    #[test]
    fn rows_are_stochastic_for_every_beta((ds, y, eta) in with_eta(10, 5), beta in log_beta(1e-6, 1e8)) {
        let p = associations(&ds, &ClusterState::new(y.clone(), eta.clone(), beta)).unwrap();
        prop_assert!(row_stochastic(&p, 1e-10));
        let p0 = associations(&ds, &ClusterState::new(y, eta.clone(), 0.0)).unwrap();
        let lin = eta.to_linear(p0.num_clusters());
        let total = lin.sum();
        for row in p0.values().outer_iter() {
            for (a, b) in row.iter().zip(lin.column(0).iter()) {
                prop_assert!((a - b / total).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn no_overflow_at_extreme_scale((ds, y, eta) in with_eta(10, 4)) {
        let far = ds.map_points(|v| v * 100.0);
        let p = associations(&far, &ClusterState::new(y, eta, 1e6)).unwrap();
        prop_assert!(row_stochastic(&p, 1e-10));
    }

    #[test]
    fn eta_scale_does_not_matter((ds, y, eta) in with_eta(10, 4), shift in -20.0f64..20.0, beta in log_beta(1e-2, 1e2)) {
        let Eta::PerCluster(log) = &eta else { unreachable!() };
        let shifted = Eta::PerCluster(log.mapv(|v| v + shift));
        let p = associations(&ds, &ClusterState::new(y.clone(), eta, beta)).unwrap();
        let q = associations(&ds, &ClusterState::new(y, shifted, beta)).unwrap();
        for (a, b) in p.values().iter().zip(q.values().iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn gibbs_minimizes_the_free_energy(
        (ds, y) in instance(8, 4),
        beta in log_beta(1e-2, 1e2),
        noise in prop::collection::vec(0.0f64..1.0, 32),
        mix in 0.01f64..1.0,
    ) {
        let state = ClusterState::new(y.clone(), Eta::Uniform, beta);
        let p = associations(&ds, &state).unwrap();
        let f = free_energy(&ds, &state).unwrap().value;
        let (n, k) = p.values().dim();
        let mut q = p.values().clone();
        for ((i, j), v) in q.indexed_iter_mut() {
            *v = (1.0 - mix) * *v + mix * noise[(i * k + j) % noise.len()];
        }
        for mut row in q.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let q = AssocMatrix::new(q).unwrap();
        let lagrangian = modified_distortion(&ds, y.view(), &q).unwrap()
            - conditional_entropy(&ds, &q).unwrap() / beta;
        prop_assert!(lagrangian >= f - 1e-9 * f.abs().max(1.0), "{} < {} (n = {})", lagrangian, f, n);
    }

    #[test]
    fn gradient_matches_finite_differences((ds, y, eta) in with_eta(10, 4), beta in 0.1f64..10.0) {
        let state = ClusterState::new(y.clone(), eta, beta);
        let g = free_energy_gradient(&ds, &state).unwrap();
        let h = 1e-5;
        for j in 0..y.nrows() {
            for d in 0..y.ncols() {
                let mut plus = state.clone();
                plus.locations[[j, d]] += h;
                let mut minus = state.clone();
                minus.locations[[j, d]] -= h;
                let fd = (free_energy(&ds, &plus).unwrap().value - free_energy(&ds, &minus).unwrap().value) / (2.0 * h);
                let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
                prop_assert!((fd - g[[j, d]]).abs() <= 1e-6 * scale, "{} vs {}", fd, g[[j, d]]);
            }
        }
    }

    #[test]
    fn gradient_is_scaled_centroid_gap((ds, y, eta) in with_eta(10, 4), beta in log_beta(1e-2, 1e2)) {
        let state = ClusterState::new(y.clone(), eta, beta);
        let p = associations(&ds, &state).unwrap();
        let m = masses(&ds, &p).per_cluster;
        prop_assume!(m.iter().all(|v| *v > 1e-9));
        let c = centroid_update(&ds, &p).unwrap();
        let g = free_energy_gradient(&ds, &state).unwrap();
        for ((j, d), v) in g.indexed_iter() {
            let expect = 2.0 * m[j] * (y[[j, d]] - c[[j, d]]);
            prop_assert!((v - expect).abs() <= 1e-12 * (1.0 + y[[j, d]].abs() + c[[j, d]].abs()));
        }
    }

    #[test]
    fn location_update_descends((ds, y, eta) in with_eta(10, 4), beta in log_beta(1e-2, 1e2)) {
        let state = ClusterState::new(y, eta, beta);
        let p = associations(&ds, &state).unwrap();
        prop_assume!(masses(&ds, &p).per_cluster.iter().all(|v| *v > 1e-9));
        let step = descent_step(&ds, &state, 1.0).unwrap();
        let g = free_energy_gradient(&ds, &state).unwrap();
        let norm2 = g.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(step.dot <= 0.0);
        if norm2 > 1e-20 {
            prop_assert!(step.dot < 0.0);
        }
    }

    #[test]
    fn scaled_instance_has_equal_associations((ds, y, eta) in with_eta(10, 4), beta in log_beta(1e-2, 1e2), sigma in 0.1f64..10.0) {
        let p = associations(&ds, &ClusterState::new(y.clone(), eta.clone(), beta)).unwrap();
        let (scaled, map) = scale_instance(&ds, sigma).unwrap();
        let q = associations(&scaled, &ClusterState::new(y.mapv(|v| v / sigma), eta, map.apply(beta))).unwrap();
        for (a, b) in p.values().iter().zip(q.values().iter()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn entropy_and_modified_distortion_fall_with_beta() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
    let ds = Dataset::from_rows(&synthetic::uniform_points(20, 2, &mut rng), None).unwrap();
    let y = ndarray::array![[0.2, 0.2], [0.8, 0.3], [0.5, 0.9]];
    let d = distortion(&ds, y.view()).unwrap();
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for e in 0..=60 {
        let beta = 10f64.powf(-2.0 + e as f64 / 10.0);
        let p = associations(&ds, &ClusterState::new(y.clone(), Eta::Uniform, beta)).unwrap();
        let h = conditional_entropy(&ds, &p).unwrap();
        let dbar = modified_distortion(&ds, y.view(), &p).unwrap();
        assert!(h <= prev.0 + 1e-12 && dbar <= prev.1 + 1e-12);
        prev = (h, dbar);
    }
    assert!(prev.0 < 1e-6);
    assert!((prev.1 - d).abs() < 1e-9);
}

proptest! {
    #![proptest_config(Config::with_cases(12))]

    #[test]
    fn sized_anneal_meets_capacities(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 2), 12..30),
        caps in prop::collection::vec(1.0f64..5.0, 2..=4),
        seed in 0u64..1000,
    ) {
        let ds = Dataset::from_rows(&rows, None).unwrap();
        let cap = CapacitySpec::per_cluster(&caps).unwrap();
        let cfg = AnnealConfig { inner_tol: 1e-10, rng_seed: seed, ..AnnealConfig::default() };
        let r = anneal(&ds, caps.len(), &cap, &cfg).unwrap();
        prop_assert!(r.residual <= 1e-6, "residual {}", r.residual);
    }

    #[test]
    fn typed_anneal_meets_capacities(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 2), 12..30),
        k in 2usize..=4,
        seed in 0u64..1000,
    ) {
        let n = rows.len();
        let ds = Dataset::from_rows(&rows, None).unwrap().with_types((0..n).map(|i| i % 3).collect(), 3).unwrap();
        let cap = synthetic::random_type_capacities(&ds, k, seed).unwrap();
        let cfg = AnnealConfig { inner_tol: 1e-10, rng_seed: seed, ..AnnealConfig::default() };
        let r = anneal(&ds, k, &cap, &cfg).unwrap();
        prop_assert!(r.residual <= 1e-6, "residual {}", r.residual);
    }

    #[test]
    fn anneal_is_translation_and_scale_equivariant(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 6..14),
        k in 2usize..=3,
        t in -100.0f64..100.0,
        sigma in prop::sample::select(vec![0.5, 2.0, 10.0]),
        seed in 0u64..1000,
    ) {
        let ds = Dataset::from_rows(&rows, None).unwrap();
        let cfg = AnnealConfig {
            beta_init: BetaInit::Value(1.0),
            beta_max: BetaMax::Value(500.0),
            beta_growth: 1.1,
            rng_seed: seed,
            ..AnnealConfig::default()
        };
        let base = anneal(&ds, k, &CapacitySpec::None, &cfg).unwrap();

        let moved = anneal(&translate(&ds, t), k, &CapacitySpec::None, &cfg).unwrap();
        for (a, b) in base.final_state.locations.iter().zip(moved.final_state.locations.iter()) {
            prop_assert!((a + t - b).abs() <= 1e-8);
        }

        let (scaled, map) = scale_instance(&ds, sigma).unwrap();
        let scfg = AnnealConfig {
            beta_init: BetaInit::Value(map.apply(1.0)),
            beta_max: BetaMax::Value(map.apply(500.0)),
            ..cfg
        };
        let small = anneal(&scaled, k, &CapacitySpec::None, &scfg).unwrap();
        for (a, b) in base.final_state.locations.iter().zip(small.final_state.locations.iter()) {
            prop_assert!((a / sigma - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn lloyd_never_increases_distortion(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 5..40),
        k in 1usize..=5,
        seed in 0u64..1000,
    ) {
        prop_assume!(k <= rows.len());
        let ds = Dataset::from_rows(&rows, None).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let init = random_init(&ds, k, &mut rng).unwrap();
        let r = lloyd(&ds, k, init, 1000).unwrap();
        for w in r.distortion_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn capacity_never_beats_the_free_optimum(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 8),
        split in 1usize..=4,
    ) {
        let ds = Dataset::from_rows(&rows, None).unwrap();
        let free = brute_force_unconstrained(&ds, 2).unwrap();
        let capped = brute_force_capacitated(&ds, 2, &[split, 8 - split]).unwrap();
        prop_assert!(capped.best_cost >= free.best_cost - 1e-12);
    }
}
