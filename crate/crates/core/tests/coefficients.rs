use mfsde_core::{make_builtin, mollify, probe_regularity, CoefficientPair, MollifierConfig, ParamValue, Params};
use proptest::prelude::*;

fn table() -> CoefficientPair {
    let mut p = Params::new();
    p.insert("knots".into(), ParamValue::List(vec![-1.0, 0.0, 0.5, 2.0]));
    p.insert("values".into(), ParamValue::List(vec![1.0, -0.5, 0.75, 0.0]));
    p.insert("coupling".into(), ParamValue::Number(0.3));
    make_builtin("custom_table", &p).unwrap()
}

fn sup_distance(a: &CoefficientPair, b: &CoefficientPair) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..=80 {
        let y = -3.0 + 6.0 * i as f64 / 80.0;
        for z in [-1.0, 0.0, 0.7] {
            worst = worst.max((a.b1(0.0, y, z) - b.b1(0.0, y, z)).abs());
        }
    }
    worst
}

#[test]
fn mollified_drift_converges_monotonically() {
    let pair = table();
    let distances: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&h| sup_distance(&mollify(&pair, &MollifierConfig::new(h, 16).unwrap()).unwrap(), &pair))
        .collect();
    assert!(distances.windows(2).all(|w| w[1] < w[0]), "{distances:?}");
}

#[test]
fn absolute_value_kink_closed_form() {
    let pair = CoefficientPair::scalar("abs", |_, y, _| y.abs(), |_, _, z| z);
    for h in [0.4, 0.2, 0.1, 0.05] {
        let m = mollify(&pair, &MollifierConfig::new(h, 10).unwrap()).unwrap();
        assert!((m.b1(0.0, 0.0, 1.0) - h * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-6);
    }
}

#[test]
fn mollified_pairs_pass_jacobian_probe() {
    let mut p = Params::new();
    p.insert("u".into(), ParamValue::Number(0.0));
    let cdf = make_builtin("cdf_drift", &p).unwrap();
    let smooth = mollify(&cdf, &MollifierConfig::new(0.2, 12).unwrap()).unwrap();
    let report = probe_regularity(&smooth, 100, 5);
    assert!(report.get("jacobians").unwrap().passed, "{report:?}");
    let table = mollify(&table(), &MollifierConfig::new(0.3, 8).unwrap()).unwrap();
    assert!(probe_regularity(&table, 100, 6).get("jacobians").unwrap().passed);
}

#[test]
fn mollified_indicator_matches_normal_cdf_everywhere() {
    let mut p = Params::new();
    p.insert("u".into(), ParamValue::Number(0.25));
    let cdf = make_builtin("cdf_drift", &p).unwrap();
    let h = 0.3;
    let smooth = mollify(&cdf, &MollifierConfig::new(h, 10).unwrap()).unwrap();
    for i in 0..=60 {
        let z = -1.5 + 3.0 * i as f64 / 60.0;
        let exact = statrs::function::erf::erfc((z - 0.25) / (h * 2f64.sqrt())) / 2.0;
        assert!((smooth.phi1(0.0, 0.4, z) - exact).abs() < 1e-8, "z = {z}");
    }
}

#[test]
fn mollified_modulus_in_z_is_controlled() {
    // Equicontinuity surrogate: |b_h(y, z) - b_h(y, z')| ≤ sup over kernel shifts of |b(·, z + s) - b(·, z' + s)|,
    // and for b(y, z) = g(y) + κ z that sup is exactly |κ| |z - z'|.
    let pair = table();
    for h in [0.4, 0.1, 0.02] {
        let m = mollify(&pair, &MollifierConfig::new(h, 8).unwrap()).unwrap();
        for (y, z, dz) in [(0.1, -0.4, 0.3), (1.7, 2.0, -0.05), (-0.9, 0.0, 1e-3)] {
            let lhs = (m.b1(0.0, y, z + dz) - m.b1(0.0, y, z)).abs();
            assert!(lhs <= 0.3 * dz.abs() * (1.0 + 1e-9) + 1e-12, "h = {h}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constants_survive_mollification(c in -100.0f64..100.0, h in 0.01f64..2.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
        let pair = CoefficientPair::scalar("const", move |_, _, _| c, move |_, _, _| -c);
        let m = mollify(&pair, &MollifierConfig::new(h, 8).unwrap()).unwrap();
        prop_assert!((m.b1(0.3, y, z) - c).abs() <= 1e-10 * (1.0 + c.abs()));
        prop_assert!((m.phi1(0.3, y, z) + c).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn declared_builtins_pass_their_own_probe(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let mut p = Params::new();
        p.insert("a".into(), ParamValue::Number(a));
        p.insert("c".into(), ParamValue::Number(c));
        let ou = make_builtin("mean_field_ou", &p).unwrap();
        prop_assert!(probe_regularity(&ou, 30, seed).all_passed());
    }
}
