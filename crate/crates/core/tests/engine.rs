use mfsde_core::engine::{generate_increments, simulate_with_increments};
use mfsde_core::measure::wasserstein1_to_gaussian;
use mfsde_core::oracles::{cdf_drift_oracle, ou_oracle};
use mfsde_core::{
    hoelder_probe, make_builtin, picard_iterate, simulate, CoefficientPair, ParamValue, Params, TimeGrid,
};
use proptest::prelude::*;

fn params(list: &[(&str, f64)]) -> Params {
    list.iter()
        .map(|(k, v)| (k.to_string(), ParamValue::Number(*v)))
        .collect()
}

fn ou(a: f64, c: f64) -> CoefficientPair {
    make_builtin("mean_field_ou", &params(&[("a", a), ("c", c)])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reruns_are_bit_identical_and_drift_is_reconstructible(
        seed in any::<u64>(),
        n in 2usize..40,
        steps in 1usize..24,
        x0 in -3.0f64..3.0,
        a in -2.0f64..1.0,
        c in -1.0f64..1.0,
    ) {
        let pair = ou(a, c);
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let first = simulate(&pair, &grid, n, &[x0], seed).unwrap();
        let second = simulate(&pair, &grid, n, &[x0], seed).unwrap();
        prop_assert_eq!(first.states(), second.states());
        prop_assert!(first.snapshot(0).iter().all(|&x| x == x0));
        for k in 0..steps {
            let snap = first.snapshot(k);
            let mean = snap.iter().sum::<f64>() / n as f64;
            for (i, &x) in snap.iter().enumerate() {
                let b = pair.b1(grid.time(k), x, mean);
                prop_assert!((first.implied_drift(k, i)[0] - b).abs() <= 1e-8 * (1.0 + b.abs()) / grid.dt());
            }
        }
    }

    #[test]
    fn driftless_paths_are_brownian_sums(seed in any::<u64>(), n in 2usize..30, steps in 1usize..40) {
        let pair = make_builtin("zero_drift", &Params::new()).unwrap();
        let grid = TimeGrid::new(0.5, steps).unwrap();
        let ens = simulate(&pair, &grid, n, &[0.0], seed).unwrap();
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..steps {
                acc += ens.increment(k, i)[0];
                prop_assert_eq!(ens.state(k + 1, i)[0].to_bits(), acc.to_bits());
            }
        }
    }
}

#[test]
fn shifted_driftless_paths_track_brownian_sums() {
    let pair = make_builtin("zero_drift", &Params::new()).unwrap();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let ens = simulate(&pair, &grid, 50, &[1.5], 2).unwrap();
    for i in 0..50 {
        let b: f64 = (0..64).map(|k| ens.increment(k, i)[0]).sum();
        assert!((ens.terminal()[i] - 1.5 - b).abs() < 1e-13);
    }
}

#[test]
fn increments_have_brownian_moments() {
    let grid = TimeGrid::new(2.0, 8).unwrap();
    let n = 40_000;
    let inc = generate_increments(&grid, n, 1, 17);
    let dt = grid.dt();
    for row in inc.chunks_exact(n) {
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (dt / n as f64).sqrt());
        assert!((var - dt).abs() < 3.0 * dt * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let pair = CoefficientPair::scalar("pairwise", |_, y, z| -y + 0.3 * z, |_, y, z| (z - y).tanh());
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let inc = generate_increments(&grid, 300, 1, 5);
    let run = |workers: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap()
            .install(|| simulate_with_increments(&pair, &grid, 300, &[0.2], 5, &inc).unwrap())
    };
    assert_eq!(run(1).states(), run(4).states());
}

#[test]
fn ou_terminal_mean_matches_oracle() {
    let (a, c) = (-1.0, 0.5);
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let n = 20_000;
    let ens = simulate(&ou(a, c), &grid, n, &[1.0], 11).unwrap();
    let oracle = ou_oracle(a, c, 1.0, &grid);
    let t = ens.terminal();
    let mean = t.iter().sum::<f64>() / n as f64;
    let var = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    assert!((mean - oracle.terminal_mean()).abs() < 3.0 * se + 2.0 * grid.dt());
    assert!((var - oracle.terminal_variance()).abs() < 0.05 * oracle.terminal_variance());
}

#[test]
fn cdf_drift_law_approaches_gaussian_reduction() {
    let pair = make_builtin("cdf_drift", &params(&[("u", 0.0)])).unwrap();
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let oracle = cdf_drift_oracle(0.0, 0.0, &grid).unwrap();
    let distances: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&n| {
            let ens = simulate(&pair, &grid, n, &[0.0], 3).unwrap();
            wasserstein1_to_gaussian(&ens.terminal_measure(), oracle.terminal_mean(), 1.0).unwrap()
        })
        .collect();
    assert!(distances.windows(2).all(|w| w[1] < w[0]), "{distances:?}");
}

#[test]
fn picard_history_decreases_for_ou() {
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let out = picard_iterate(&ou(-1.0, 0.5), &grid, 2000, &[1.0], 9, 6, 1e-12).unwrap();
    assert!(out.history.len() >= 3);
    assert!(
        out.history[1] < out.history[0] && out.history[2] < out.history[1],
        "{:?}",
        out.history
    );
    // Deterministic analogue: the mean map m ↦ x0 + ∫(a + c)m contracts from m ≡ x0.
    let mut m: Vec<f64> = vec![1.0; 65];
    let mut prev_change = f64::INFINITY;
    for _ in 0..3 {
        let mut next = vec![1.0; 65];
        for k in 0..64 {
            next[k + 1] = next[k] + grid.dt() * (-0.5) * m[k];
        }
        let change = m.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(change < prev_change);
        prev_change = change;
        m = next;
    }
}

#[test]
fn hoelder_probe_zero_drift_identities() {
    let pair = make_builtin("zero_drift", &Params::new()).unwrap();
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let report = hoelder_probe(&pair, &grid, 500, &[-1.0, 0.0, 0.4], 8).unwrap();
    for e in &report.entries {
        let gap = (grid.time(e.t_index) - grid.time(e.s_index)).abs();
        let dx = [-1.0, 0.0, 0.4][e.x_index] - [-1.0, 0.0, 0.4][e.y_index];
        assert!((e.second_moment - gap - dx * dx).abs() < 1e-12);
    }
}

#[test]
fn hoelder_constant_is_stable_for_ou() {
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let constants: Vec<f64> = (0..3)
        .map(|seed| {
            hoelder_probe(&ou(-1.0, 0.5), &grid, 4000, &[0.0, 0.5, 1.0], seed)
                .unwrap()
                .constant
        })
        .collect();
    let (lo, hi) = constants
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(lo.is_finite() && hi <= 1.2 * lo, "{constants:?}");
}
