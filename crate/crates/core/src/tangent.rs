//! First variation `J = ∂ₓX`, the law-derivative term and the Malliavin factor.
//!
//! All quantities are scalar (`d = 1`), use left-point quadrature on the
//! simulation grid and are tied to the [`PathEnsemble`] they were derived from
//! through its fingerprint.

use rayon::prelude::*;

use crate::coefficients::{eval1, CoefficientPair, ScalarJacobians};
use crate::engine::{law_integrals, PathEnsemble, TimeGrid};
use crate::{Error, Result};

/// Tangent particles `J^i_k`, time-major `(M + 1) × N`, with `J^i_0 = 1`.
#[derive(Debug, Clone)]
pub struct TangentEnsemble {
    grid: TimeGrid,
    n: usize,
    values: Vec<f64>,
    linked: [u8; 32],
}

impl TangentEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.n + i]
    }

    pub fn terminal(&self) -> &[f64] {
        self.snapshot(self.grid.steps())
    }

    /// Fingerprint of the ensemble this tangent differentiates.
    pub fn linked_fingerprint(&self) -> &[u8; 32] {
        &self.linked
    }

    pub(crate) fn check_linked(&self, ens: &PathEnsemble) -> Result<()> {
        if &self.linked != ens.fingerprint() {
            return Err(Error::EnsembleMismatch(
                "tangent ensemble was derived from a different path ensemble".into(),
            ));
        }
        Ok(())
    }
}

/// Per-particle coefficient data at one grid step.
struct StepCoefficients {
    db_dy: Vec<f64>,
    db_dz: Vec<f64>,
    /// `(1/N) Σ_j ∂₂φ(t, X^i, X^j)`.
    mean_dphi_dy: Vec<f64>,
}

fn step_coefficients(jac: &ScalarJacobians<'_>, pair: &CoefficientPair, t: f64, x: &[f64]) -> StepCoefficients {
    let n = x.len();
    let mut rho = vec![0.0; n];
    law_integrals(pair, t, x, x, &mut rho);
    let (db_dy, db_dz): (Vec<f64>, Vec<f64>) = x
        .par_iter()
        .zip(&rho)
        .map(|(&y, &z)| (eval1(jac.db_dy, t, y, z), eval1(jac.db_dz, t, y, z)))
        .unzip();
    let mean_dphi_dy = if pair.flags().phi_y_independent {
        vec![0.0; n]
    } else {
        x.par_iter()
            .map(|&y| x.iter().map(|&z| eval1(jac.dphi_dy, t, y, z)).sum::<f64>() / n as f64)
            .collect()
    };
    StepCoefficients {
        db_dy,
        db_dz,
        mean_dphi_dy,
    }
}

/// `(1/N) Σ_j ∂₃φ(t, y, X^j) J^j` for each `y` in `ys`.
fn law_derivative(
    jac: &ScalarJacobians<'_>,
    y_independent: bool,
    t: f64,
    x: &[f64],
    j: &[f64],
    ys: &[f64],
) -> Vec<f64> {
    let n = x.len() as f64;
    let at = |y: f64| {
        x.iter()
            .zip(j)
            .map(|(&z, &jz)| eval1(jac.dphi_dz, t, y, z) * jz)
            .sum::<f64>()
            / n
    };
    if y_independent {
        let v = at(ys[0]);
        vec![v; ys.len()]
    } else {
        ys.par_iter().map(|&y| at(y)).collect()
    }
}

fn require_interacting(ens: &PathEnsemble) -> Result<()> {
    ens.require_scalar()?;
    if ens.scheme() != crate::engine::Scheme::Interacting {
        return Err(Error::EnsembleMismatch(
            "sensitivities need an interacting-scheme ensemble".into(),
        ));
    }
    Ok(())
}

/// Euler scheme for the coupled tangent system
/// `J^i_{k+1} = J^i_k + Δ[∂₂b J^i_k + ∂₃b ((1/N)Σ_j ∂₂φ J^i_k + (1/N)Σ_j ∂₃φ J^j_k)]`,
/// every coefficient evaluated at `(t_k, X^i_k, ρ^i_k)`.
pub fn propagate_tangent(ens: &PathEnsemble, pair: &CoefficientPair) -> Result<TangentEnsemble> {
    require_interacting(ens)?;
    let jac = pair.require_smooth_scalar()?;
    let grid = *ens.grid();
    let n = ens.particles();
    let dt = grid.dt();
    let y_independent = pair.flags().phi_y_independent;

    let mut values = Vec::with_capacity((grid.steps() + 1) * n);
    values.resize(n, 1.0);
    for k in 0..grid.steps() {
        let t = grid.time(k);
        let x = ens.snapshot(k);
        let coeffs = step_coefficients(&jac, pair, t, x);
        let current = &values[k * n..];
        let law = law_derivative(&jac, y_independent, t, x, &current[..n], x);
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let ji = current[i];
                ji + dt * (coeffs.db_dy[i] * ji + coeffs.db_dz[i] * (coeffs.mean_dphi_dy[i] * ji + law[i]))
            })
            .collect();
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "tangent".into(),
                point: format!("step {} particle {}", k + 1, i),
            });
        }
        values.extend_from_slice(&next);
    }
    Ok(TangentEnsemble {
        grid,
        n,
        values,
        linked: *ens.fingerprint(),
    })
}

/// `(1/N) Σ_j ∂₃φ(t_k, y, X^j_k) J^j_k`: derivative in the initial condition of
/// the law integral with `y` held fixed.
pub fn dx_rho(ens: &PathEnsemble, tang: &TangentEnsemble, pair: &CoefficientPair, k: usize, y: f64) -> Result<f64> {
    tang.check_linked(ens)?;
    let dphi_dz = pair.dphi_dz().ok_or_else(|| Error::NotSmooth {
        pair: pair.name().to_string(),
        missing: "dphi_dz",
    })?;
    if k > ens.grid().steps() {
        return Err(Error::InvalidArgument(format!("step {k} is beyond the grid")));
    }
    let t = ens.grid().time(k);
    let x = ens.snapshot(k);
    let j = tang.snapshot(k);
    Ok(x.iter()
        .zip(j)
        .map(|(&z, &jz)| eval1(dphi_dz, t, y, z) * jz)
        .sum::<f64>()
        / x.len() as f64)
}

/// `dx_rho(k, y = X^i_k)` for every particle at step `k`.
pub(crate) fn dx_rho_along(
    ens: &PathEnsemble,
    tang: &TangentEnsemble,
    pair: &CoefficientPair,
    k: usize,
    ys: &[f64],
) -> Result<Vec<f64>> {
    let jac = pair.require_smooth_scalar()?;
    let t = ens.grid().time(k);
    Ok(law_derivative(
        &jac,
        pair.flags().phi_y_independent,
        t,
        ens.snapshot(k),
        tang.snapshot(k),
        ys,
    ))
}

/// `∂₃b(t_k, X^i_k, ρ^i_k)` for every particle at step `k`.
pub(crate) fn db_dz_along(ens: &PathEnsemble, pair: &CoefficientPair, k: usize) -> Result<Vec<f64>> {
    let jac = pair.require_smooth_scalar()?;
    let t = ens.grid().time(k);
    let x = ens.snapshot(k);
    let mut rho = vec![0.0; x.len()];
    law_integrals(pair, t, x, x, &mut rho);
    Ok(x.iter().zip(&rho).map(|(&y, &z)| eval1(jac.db_dz, t, y, z)).collect())
}

/// `log D_s X_t` as per-particle prefix sums of the left-point integrand
/// `∂₂b + ∂₃b (1/N)Σ_j ∂₂φ`. Any `(s, t)` is a difference of two prefix sums.
#[derive(Debug, Clone)]
pub struct MalliavinFactor {
    grid: TimeGrid,
    n: usize,
    prefix: Vec<f64>,
    linked: [u8; 32],
}

impl MalliavinFactor {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `log D_{t_s} X_{t_t}` of particle `i`; zero on the diagonal.
    pub fn log_d(&self, s: usize, t: usize, i: usize) -> f64 {
        assert!(s <= t && t <= self.grid.steps(), "need s ≤ t ≤ M");
        if s == t {
            return 0.0;
        }
        self.prefix[t * self.n + i] - self.prefix[s * self.n + i]
    }

    pub fn d(&self, s: usize, t: usize, i: usize) -> f64 {
        self.log_d(s, t, i).exp()
    }

    pub(crate) fn check_linked(&self, ens: &PathEnsemble) -> Result<()> {
        if &self.linked != ens.fingerprint() {
            return Err(Error::EnsembleMismatch(
                "Malliavin factor was derived from a different path ensemble".into(),
            ));
        }
        Ok(())
    }
}

pub fn malliavin_factor(ens: &PathEnsemble, pair: &CoefficientPair) -> Result<MalliavinFactor> {
    require_interacting(ens)?;
    let jac = pair.require_smooth_scalar()?;
    let grid = *ens.grid();
    let n = ens.particles();
    let dt = grid.dt();
    let mut prefix = Vec::with_capacity((grid.steps() + 1) * n);
    prefix.resize(n, 0.0);
    for k in 0..grid.steps() {
        let c = step_coefficients(&jac, pair, grid.time(k), ens.snapshot(k));
        for i in 0..n {
            let rate = c.db_dy[i] + c.db_dz[i] * c.mean_dphi_dy[i];
            let prev = prefix[k * n + i];
            prefix.push(prev + dt * rate);
        }
    }
    Ok(MalliavinFactor {
        grid,
        n,
        prefix,
        linked: *ens.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    pub s: usize,
    /// `max_i |lhs − rhs|` at the terminal time.
    pub residual: f64,
    pub worst_particle: usize,
}

/// Residual of `J_T = D_s X_T J_s + Σ_{l=s}^{M−1} D_{t_l} X_T ∂₃b(t_l) dx_rho(t_l, X_l) Δ`.
pub fn check_derivative_relation(
    ens: &PathEnsemble,
    tang: &TangentEnsemble,
    mf: &MalliavinFactor,
    pair: &CoefficientPair,
    s: usize,
) -> Result<RelationReport> {
    tang.check_linked(ens)?;
    mf.check_linked(ens)?;
    let steps = ens.grid().steps();
    if s > steps {
        return Err(Error::InvalidArgument(format!("step {s} is beyond the grid")));
    }
    let n = ens.particles();
    let dt = ens.grid().dt();
    let mut rhs: Vec<f64> = (0..n).map(|i| mf.d(s, steps, i) * tang.value(s, i)).collect();
    for l in s..steps {
        let x = ens.snapshot(l);
        let gamma = dx_rho_along(ens, tang, pair, l, x)?;
        let db_dz = db_dz_along(ens, pair, l)?;
        for i in 0..n {
            rhs[i] += mf.d(l, steps, i) * db_dz[i] * gamma[i] * dt;
        }
    }
    let (worst_particle, residual) = tang
        .terminal()
        .iter()
        .zip(&rhs)
        .map(|(l, r)| (l - r).abs())
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(RelationReport {
        s,
        residual,
        worst_particle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_builtin, ParamValue, Params};
    use crate::engine::{simulate, TimeGrid};

    fn ou(a: f64, c: f64) -> CoefficientPair {
        let mut p = Params::new();
        p.insert("a".into(), ParamValue::Number(a));
        p.insert("c".into(), ParamValue::Number(c));
        make_builtin("mean_field_ou", &p).unwrap()
    }

    #[test]
    fn zero_drift_tangent_is_one() {
        let pair = make_builtin("zero_drift", &Params::new()).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let ens = simulate(&pair, &grid, 20, &[0.3], 1).unwrap();
        let tang = propagate_tangent(&ens, &pair).unwrap();
        assert!(tang.values().iter().all(|&j| j == 1.0));
        let mf = malliavin_factor(&ens, &pair).unwrap();
        let rel = check_derivative_relation(&ens, &tang, &mf, &pair, 0).unwrap();
        assert_eq!(rel.residual, 0.0);
    }

    #[test]
    fn ou_tangent_matches_discrete_recursion() {
        let (a, c) = (-1.0, 0.5);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let pair = ou(a, c);
        let ens = simulate(&pair, &grid, 30, &[1.0], 2).unwrap();
        let tang = propagate_tangent(&ens, &pair).unwrap();
        let expected = (1.0 + (a + c) * grid.dt()).powi(64);
        for &j in tang.terminal() {
            assert!((j - expected).abs() < 1e-12);
        }
        let mean = tang.terminal().iter().sum::<f64>() / 30.0;
        assert!((dx_rho(&ens, &tang, &pair, 64, 0.0).unwrap() - mean).abs() < 1e-14);
    }

    #[test]
    fn linked_ensemble_required() {
        let pair = ou(-1.0, 0.5);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let a = simulate(&pair, &grid, 10, &[1.0], 1).unwrap();
        let b = simulate(&pair, &grid, 10, &[1.0], 2).unwrap();
        let tang = propagate_tangent(&a, &pair).unwrap();
        let mf = malliavin_factor(&b, &pair).unwrap();
        assert!(matches!(
            dx_rho(&b, &tang, &pair, 0, 0.0),
            Err(Error::EnsembleMismatch(_))
        ));
        assert!(check_derivative_relation(&a, &tang, &mf, &pair, 0).is_err());
    }

    #[test]
    fn non_smooth_rejected() {
        let mut p = Params::new();
        p.insert("u".into(), ParamValue::Number(0.0));
        let pair = make_builtin("cdf_drift", &p).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let ens = simulate(&pair, &grid, 10, &[0.0], 1).unwrap();
        assert!(matches!(propagate_tangent(&ens, &pair), Err(Error::NotSmooth { .. })));
        assert!(matches!(malliavin_factor(&ens, &pair), Err(Error::NotSmooth { .. })));
    }

    #[test]
    fn diagonal_and_cocycle() {
        let pair = ou(-1.0, 0.5);
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let ens = simulate(&pair, &grid, 10, &[1.0], 1).unwrap();
        let mf = malliavin_factor(&ens, &pair).unwrap();
        for i in 0..10 {
            assert_eq!(mf.log_d(5, 5, i), 0.0);
            let lhs = mf.d(0, 16, i);
            let rhs = mf.d(0, 8, i) * mf.d(8, 16, i);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
