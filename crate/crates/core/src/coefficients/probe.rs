use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CoefficientPair, Field};

/// A pair of argument points exhibiting the worst observed behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub first: (Vec<f64>, Vec<f64>),
    pub second: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub condition: &'static str,
    /// Whether the pair declares this condition. Undeclared conditions are
    /// still measured but always pass.
    pub declared: bool,
    pub passed: bool,
    /// Growth ratio `‖f‖ / (C(1 + ‖y‖ + ‖z‖))`, difference quotient, or
    /// relative Jacobian error, depending on the condition.
    pub worst: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub probes: usize,
    pub checks: Vec<ConditionCheck>,
}

impl RegularityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

const PROBE_RADIUS: f64 = 5.0;
const BISECTION_STEPS: usize = 40;
// Difference quotients above this after bisection indicate a jump, not a steep slope.
const QUOTIENT_LIMIT: f64 = 1e6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn eval(f: &Field, t: f64, y: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    f(t, y, z, &mut out);
    out
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct Probe {
    t: f64,
    y: Vec<f64>,
    z: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, dim: usize) -> Probe {
    Probe {
        t: rng.random::<f64>(),
        y: (0..dim)
            .map(|_| rng.random_range(-PROBE_RADIUS..PROBE_RADIUS))
            .collect(),
        z: (0..dim)
            .map(|_| rng.random_range(-PROBE_RADIUS..PROBE_RADIUS))
            .collect(),
    }
}

/// Bisects the segment between two arguments of `g`, keeping the half with the
/// larger change. Lipschitz functions keep the quotient bounded by their constant;
/// a jump keeps the change fixed while the segment shrinks.
fn bisect_quotient(g: &dyn Fn(&[f64]) -> Vec<f64>, a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = (a.to_vec(), b.to_vec());
    let (mut glo, mut ghi) = (g(&lo), g(&hi));
    let mut quotient = diff_norm(&glo, &ghi) / diff_norm(&lo, &hi);
    for _ in 0..BISECTION_STEPS {
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(x, y)| 0.5 * (x + y)).collect();
        if diff_norm(&mid, &lo) == 0.0 || diff_norm(&mid, &hi) == 0.0 {
            break;
        }
        let gmid = g(&mid);
        if diff_norm(&glo, &gmid) >= diff_norm(&gmid, &ghi) {
            hi = mid;
            ghi = gmid;
        } else {
            lo = mid;
            glo = gmid;
        }
        quotient = quotient.max(diff_norm(&glo, &ghi) / diff_norm(&lo, &hi));
    }
    (quotient, lo, hi)
}

/// Randomized, report-only validation of the declared conditions: linear growth
/// of `b` and `φ`, Lipschitz continuity of `b` in `z` and of `φ` in `z` and `y`,
/// `y`-independence of `φ`, and (for smooth pairs) Jacobians against central
/// differences with step 1e-5 at relative tolerance 1e-4.
pub fn probe_regularity(pair: &CoefficientPair, probes: usize, seed: u64) -> RegularityReport {
    let probes = probes.max(1);
    let dim = pair.dim();
    let flags = pair.flags();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Probe> = (0..probes).map(|_| draw(&mut rng, dim)).collect();
    let partners: Vec<Probe> = (0..probes).map(|_| draw(&mut rng, dim)).collect();

    let mut checks = Vec::new();

    for (condition, field) in [("linear_growth_b", pair.b()), ("linear_growth_phi", pair.phi())] {
        let c = pair.growth_constant();
        let mut worst = 0.0f64;
        let mut witness = None;
        for p in &samples {
            let value = norm(&eval(field, p.t, &p.y, &p.z));
            let scale = 1.0 + norm(&p.y) + norm(&p.z);
            let ratio = match c {
                Some(c) if c > 0.0 => value / (c * scale),
                Some(_) if value == 0.0 => 0.0,
                Some(_) => f64::INFINITY,
                None => value / scale,
            };
            if ratio > worst {
                worst = ratio;
                witness = Some(Witness {
                    t: p.t,
                    first: (p.y.clone(), p.z.clone()),
                    second: (p.y.clone(), p.z.clone()),
                });
            }
        }
        checks.push(ConditionCheck {
            condition,
            declared: c.is_some(),
            passed: c.is_none() || worst <= 1.0 + 1e-12,
            worst,
            witness,
        });
    }

    let lipschitz = [
        ("lipschitz_z_b", pair.b(), flags.lipschitz_z_b, false),
        ("lipschitz_z_phi", pair.phi(), flags.lipschitz_z_phi, false),
        ("lipschitz_y_phi", pair.phi(), flags.lipschitz_y_phi, true),
    ];
    for (condition, field, declared, in_y) in lipschitz {
        let mut worst = 0.0f64;
        let mut witness = None;
        for (p, q) in samples.iter().zip(&partners) {
            let g = |arg: &[f64]| {
                if in_y {
                    eval(field, p.t, arg, &p.z)
                } else {
                    eval(field, p.t, &p.y, arg)
                }
            };
            let (a, b) = if in_y { (&p.y, &q.y) } else { (&p.z, &q.z) };
            let (quotient, lo, hi) = bisect_quotient(&g, a, b);
            if quotient > worst {
                worst = quotient;
                let (first, second) = if in_y {
                    ((lo, p.z.clone()), (hi, p.z.clone()))
                } else {
                    ((p.y.clone(), lo), (p.y.clone(), hi))
                };
                witness = Some(Witness { t: p.t, first, second });
            }
        }
        checks.push(ConditionCheck {
            condition,
            declared,
            passed: !declared || worst <= QUOTIENT_LIMIT,
            worst,
            witness,
        });
    }

    {
        let mut worst = 0.0f64;
        let mut witness = None;
        for (p, q) in samples.iter().zip(&partners) {
            let d = diff_norm(&eval(pair.phi(), p.t, &p.y, &p.z), &eval(pair.phi(), p.t, &q.y, &p.z));
            if d > worst {
                worst = d;
                witness = Some(Witness {
                    t: p.t,
                    first: (p.y.clone(), p.z.clone()),
                    second: (q.y.clone(), p.z.clone()),
                });
            }
        }
        checks.push(ConditionCheck {
            condition: "phi_y_independent",
            declared: flags.phi_y_independent,
            passed: !flags.phi_y_independent || worst == 0.0,
            worst,
            witness,
        });
    }

    if flags.smooth {
        let jacobians = [
            (pair.b(), pair.db_dy(), true),
            (pair.b(), pair.db_dz(), false),
            (pair.phi(), pair.dphi_dy(), true),
            (pair.phi(), pair.dphi_dz(), false),
        ];
        let step = 1e-5;
        let mut worst = 0.0f64;
        let mut witness = None;
        for p in &samples {
            for (f, jac, in_y) in jacobians {
                let jac = jac.expect("smooth pairs carry all Jacobians");
                let mut declared = vec![0.0; dim * dim];
                jac(p.t, &p.y, &p.z, &mut declared);
                for col in 0..dim {
                    let shifted = |sign: f64| {
                        let (mut y, mut z) = (p.y.clone(), p.z.clone());
                        if in_y {
                            y[col] += sign * step;
                        } else {
                            z[col] += sign * step;
                        }
                        eval(f, p.t, &y, &z)
                    };
                    let (plus, minus) = (shifted(1.0), shifted(-1.0));
                    for row in 0..dim {
                        let fd = (plus[row] - minus[row]) / (2.0 * step);
                        let exact = declared[row * dim + col];
                        let err = (fd - exact).abs() / exact.abs().max(fd.abs()).max(1e-3);
                        if err > worst {
                            worst = err;
                            witness = Some(Witness {
                                t: p.t,
                                first: (p.y.clone(), p.z.clone()),
                                second: (p.y.clone(), p.z.clone()),
                            });
                        }
                    }
                }
            }
        }
        checks.push(ConditionCheck {
            condition: "jacobians",
            declared: true,
            passed: worst <= 1e-4,
            worst,
            witness,
        });
    }

    RegularityReport { probes, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_builtin, ParamValue, Params, RegularityFlags};

    fn ou() -> CoefficientPair {
        let mut p = Params::new();
        p.insert("a".into(), ParamValue::Number(-1.0));
        p.insert("c".into(), ParamValue::Number(0.5));
        make_builtin("mean_field_ou", &p).unwrap()
    }

    #[test]
    fn zero_drift_passes_with_zero_ratio() {
        let pair = make_builtin("zero_drift", &Params::new()).unwrap();
        let report = probe_regularity(&pair, 100, 1);
        assert!(report.all_passed());
        assert_eq!(report.get("linear_growth_b").unwrap().worst, 0.0);
    }

    #[test]
    fn ou_growth_with_declared_constant() {
        let pair = ou().with_growth_constant(1.5);
        let report = probe_regularity(&pair, 100, 7);
        let growth = report.get("linear_growth_b").unwrap();
        assert!(growth.passed);
        // Oracle: |a y + c z| ≤ max(|a|, |c|)(|y| + |z|), so the ratio never exceeds 1/1.5.
        assert!(growth.worst <= 1.0 / 1.5 + 1e-12);
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn too_small_growth_constant_fails() {
        let pair = ou().with_growth_constant(0.1);
        assert!(!probe_regularity(&pair, 100, 3).get("linear_growth_b").unwrap().passed);
    }

    #[test]
    fn indicator_declared_lipschitz_fails_with_straddling_witness() {
        let mut p = Params::new();
        p.insert("u".into(), ParamValue::Number(0.0));
        let pair = make_builtin("cdf_drift", &p).unwrap();
        let flags = RegularityFlags {
            lipschitz_z_phi: true,
            ..pair.flags()
        };
        let pair = pair.with_flags(flags).unwrap();
        let report = probe_regularity(&pair, 100, 11);
        let check = report.get("lipschitz_z_phi").unwrap();
        assert!(!check.passed);
        let w = check.witness.as_ref().unwrap();
        let (z1, z2) = (w.first.1[0], w.second.1[0]);
        assert!(z1.min(z2) <= 0.0 && z1.max(z2) > 0.0, "{z1} {z2}");
        assert!((z1 - z2).abs() < 1e-6);
    }

    #[test]
    fn undeclared_failures_still_pass() {
        let mut p = Params::new();
        p.insert("u".into(), ParamValue::Number(0.0));
        let pair = make_builtin("cdf_drift", &p).unwrap();
        let report = probe_regularity(&pair, 50, 2);
        let check = report.get("lipschitz_z_phi").unwrap();
        assert!(check.passed && !check.declared);
        assert!(check.worst > QUOTIENT_LIMIT);
    }

    #[test]
    fn wrong_jacobian_is_detected() {
        let pair = CoefficientPair::scalar("sq", |_, y, _| y * y, |_, _, z| z).with_scalar_jacobians(
            |_, y, _| y, // should be 2y
            |_, _, _| 0.0,
            |_, _, _| 0.0,
            |_, _, _| 1.0,
        );
        assert!(!probe_regularity(&pair, 20, 5).get("jacobians").unwrap().passed);
    }
}
