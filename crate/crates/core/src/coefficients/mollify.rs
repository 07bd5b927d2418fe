use std::sync::Arc;

use super::{CoefficientPair, Field};
use crate::quadrature::{gauss_legendre, Rule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
}

/// Bandwidth `h` and quadrature order for Gaussian mollification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierConfig {
    bandwidth: f64,
    quadrature_order: usize,
    kernel: Kernel,
}

impl MollifierConfig {
    pub fn new(bandwidth: f64, quadrature_order: usize) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if quadrature_order < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature order must be at least 2, got {quadrature_order}"
            )));
        }
        Ok(Self {
            bandwidth,
            quadrature_order,
            kernel: Kernel::Gaussian,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
}

// Half-width of the integration window in bandwidths; the kernel mass outside is below 1e-15.
const WINDOW: f64 = 8.0;

// Composite Gauss–Legendre rule for `∫ g(x) K_h(x - c) dx` over `c ± WINDOW·h`.
// Panel ends sit on the fixed lattice `hℤ` and at the declared breakpoints, so
// the nodes do not move with `c` and the result is smooth in `c` even when `g`
// jumps. Kinks and jumps at breakpoints or lattice points are integrated exactly.
struct Panels {
    rule: Rule,
    h: f64,
    breaks: Vec<f64>,
}

impl Panels {
    fn fill(&self, c: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let h = self.h;
        let (lo, hi) = (c - WINDOW * h, c + WINDOW * h);
        let mut cuts = Vec::with_capacity(2 * WINDOW as usize + 4 + self.breaks.len());
        cuts.push(lo);
        let mut k = (lo / h).floor() + 1.0;
        while k * h < hi {
            cuts.push(k * h);
            k += 1.0;
        }
        cuts.extend(self.breaks.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= 1e-14 * h {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (&s, &g) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let x = mid + half * s;
                let u = (x - c) / h;
                xs.push(x);
                ws.push(g * half * norm * (-0.5 * u * u).exp());
            }
        }
    }
}

// Which quantity a smoothed field returns. Derivatives differentiate the
// kernel weights, `∂_c K_h(x - c) = K_h(x - c) (x - c) / h²`, so they are the
// exact derivatives of the returned value.
#[derive(Clone, Copy)]
enum Output {
    Value,
    DerivY,
    DerivZ,
}

fn smoothed(f: Field, panels: Arc<Panels>, output: Output) -> Field {
    Arc::new(move |t, y, z, out| {
        let (mut yx, mut yw, mut zx, mut zw) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        panels.fill(y[0], &mut yx, &mut yw);
        panels.fill(z[0], &mut zx, &mut zw);
        let h2 = panels.h * panels.h;
        let score = |j: usize, l: usize| match output {
            Output::Value => 0.0,
            Output::DerivY => (yx[j] - y[0]) / h2,
            Output::DerivZ => (zx[l] - z[0]) / h2,
        };
        let mass = yw.iter().sum::<f64>() * zw.iter().sum::<f64>();
        let (mut m0, mut m1, mut g) = (0.0, 0.0, 0.0);
        let mut buf = [0.0];
        for (j, (&xj, &wj)) in yx.iter().zip(&yw).enumerate() {
            for (l, (&xl, &wl)) in zx.iter().zip(&zw).enumerate() {
                f(t, &[xj], &[xl], &mut buf);
                let w = wj * wl;
                let s = score(j, l);
                m0 += w * buf[0];
                m1 += w * s * buf[0];
                g += w * s;
            }
        }
        // Weights are renormalised, so constants are reproduced to rounding.
        let value = m0 / mass;
        out[0] = match output {
            Output::Value => value,
            _ => (m1 - value * g) / mass,
        };
    })
}

/// Gaussian-kernel smoothing of `b` and `φ` jointly in `(y, z)`:
/// `b_h(t, y, z) = E[b(t, y + hξ₁, z + hξ₂)]` with independent standard normals.
///
/// Expectations use a tensor product of composite Gauss–Legendre rules whose
/// panels are fixed in space (the lattice `hℤ` plus the pair's breakpoints),
/// with `quadrature_order` nodes per panel. The result is smooth even when `b`
/// or `φ` jump, and the Jacobians are the exact derivatives of the returned
/// values. `t` is not smoothed.
pub fn mollify(pair: &CoefficientPair, cfg: &MollifierConfig) -> Result<CoefficientPair> {
    if pair.dim() != 1 {
        return Err(Error::NotScalar(pair.dim()));
    }
    let h = cfg.bandwidth;
    let rule = Arc::new(Panels {
        rule: gauss_legendre(cfg.quadrature_order),
        h,
        breaks: pair.breakpoints().to_vec(),
    });
    let b = pair.b().clone();
    let phi = pair.phi().clone();

    let mut flags = pair.flags();
    flags.smooth = true;
    // E|ξ₁| + E|ξ₂| = 2√(2/π): the shift a kernel draw adds to |y| + |z| on average.
    let spread = 2.0 * h * (2.0 / std::f64::consts::PI).sqrt();

    let mut out = CoefficientPair::new(
        format!("{}~h={}", pair.name(), h),
        1,
        smoothed(b.clone(), rule.clone(), Output::Value),
        smoothed(phi.clone(), rule.clone(), Output::Value),
    )?
    .with_jacobians(
        Some(smoothed(b.clone(), rule.clone(), Output::DerivY)),
        Some(smoothed(b, rule.clone(), Output::DerivZ)),
        Some(smoothed(phi.clone(), rule.clone(), Output::DerivY)),
        Some(smoothed(phi, rule, Output::DerivZ)),
    );
    if let Some(c) = pair.growth_constant() {
        out = out.with_growth_constant(c * (1.0 + spread));
    }
    let out = out.with_flags(flags)?;
    check_finite(&out)?;
    Ok(out)
}

fn check_finite(pair: &CoefficientPair) -> Result<()> {
    let fields = [
        ("b", pair.b()),
        ("phi", pair.phi()),
        ("db_dy", pair.db_dy().expect("smooth")),
        ("db_dz", pair.db_dz().expect("smooth")),
        ("dphi_dy", pair.dphi_dy().expect("smooth")),
        ("dphi_dz", pair.dphi_dz().expect("smooth")),
    ];
    let probes = [-2.0, -0.5, 0.0, 0.5, 2.0];
    for (name, field) in fields {
        for &t in &[0.0, 1.0] {
            for &y in &probes {
                for &z in &probes {
                    let mut v = [0.0];
                    field(t, &[y], &[z], &mut v);
                    if !v[0].is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("mollified {name}"),
                            point: format!("(t={t}, y={y}, z={z})"),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_builtin, ParamValue, Params};

    fn abs_pair() -> CoefficientPair {
        CoefficientPair::scalar("abs", |_, y, _| y.abs(), |_, _, z| z.abs())
    }

    // Independent oracle: composite Simpson on [-12, 12] of |h ξ| against the standard normal density.
    fn simpson_abs_moment(h: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (-12.0, 12.0);
        let dx = (b - a) / n as f64;
        let g = |x: f64| (h * x).abs() * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = g(a) + g(b);
        for k in 1..n {
            let x = a + k as f64 * dx;
            s += if k % 2 == 1 { 4.0 * g(x) } else { 2.0 * g(x) };
        }
        s * dx / 3.0
    }

    #[test]
    fn config_validation() {
        assert!(MollifierConfig::new(0.0, 8).is_err());
        assert!(MollifierConfig::new(0.1, 1).is_err());
        assert!(MollifierConfig::new(0.1, 2).is_ok());
    }

    #[test]
    fn constant_is_preserved() {
        let pair = CoefficientPair::scalar("c", |_, _, _| 2.5, |_, _, _| -1.25);
        for h in [0.05, 0.4, 3.0] {
            let m = mollify(&pair, &MollifierConfig::new(h, 12).unwrap()).unwrap();
            for (y, z) in [(0.0, 0.0), (1.3, -7.0), (-40.0, 2.0)] {
                assert!((m.b1(0.0, y, z) - 2.5).abs() < 1e-10);
                assert!((m.phi1(0.0, y, z) + 1.25).abs() < 1e-10);
                assert!(eval_jac(m.db_dy().unwrap(), y, z).abs() < 1e-10);
            }
        }
    }

    fn eval_jac(f: &Field, y: f64, z: f64) -> f64 {
        let mut o = [0.0];
        f(0.0, &[y], &[z], &mut o);
        o[0]
    }

    #[test]
    fn absolute_value_at_kink() {
        for h in [0.05, 0.2, 1.0] {
            let oracle = simpson_abs_moment(h);
            assert!((oracle - h * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
            let m = mollify(&abs_pair(), &MollifierConfig::new(h, 8).unwrap()).unwrap();
            assert!((m.b1(0.0, 0.0, 3.0) - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn indicator_at_jump_is_half() {
        let mut p = Params::new();
        p.insert("u".into(), ParamValue::Number(0.25));
        let pair = make_builtin("cdf_drift", &p).unwrap();
        for h in [0.01, 0.3] {
            let m = mollify(&pair, &MollifierConfig::new(h, 10).unwrap()).unwrap();
            assert!((m.phi1(0.0, 1.0, 0.25) - 0.5).abs() < 1e-6);
            assert!(m.is_smooth());
            // The smoothed indicator decreases through the jump.
            assert!(eval_jac(m.dphi_dz().unwrap(), 1.0, 0.25) < 0.0);
        }
    }

    #[test]
    fn growth_constant_inflated() {
        let mut p = Params::new();
        p.insert("a".into(), ParamValue::Number(-2.0));
        p.insert("c".into(), ParamValue::Number(0.5));
        let pair = make_builtin("mean_field_ou", &p).unwrap();
        let m = mollify(&pair, &MollifierConfig::new(0.1, 6).unwrap()).unwrap();
        let expected = 2.0 * (1.0 + 0.2 * (2.0 / std::f64::consts::PI).sqrt());
        assert!((m.growth_constant().unwrap() - expected).abs() < 1e-12);
        // Gaussian smoothing leaves affine maps unchanged.
        assert!((m.b1(0.0, 0.7, -0.3) - pair.b1(0.0, 0.7, -0.3)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_coefficients_are_reported() {
        let pair = CoefficientPair::scalar("log", |_, y, _| y.ln(), |_, _, z| z);
        let err = mollify(&pair, &MollifierConfig::new(0.1, 4).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }
}
