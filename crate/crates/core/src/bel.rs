//! Delta `∂ₓ E[Φ(X_T^x)]` for scalar mean-field SDEs.
//!
//! Three estimators share one result type: the Bismut–Elworthy–Li weight
//! (no derivative of `Φ`), the pathwise tangent estimator and a central finite
//! difference with common random numbers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::coefficients::{CoefficientPair, ParamValue, Params};
use crate::engine::{simulate_terminal, PathEnsemble, TimeGrid};
use crate::quadrature::gauss_hermite;
use crate::tangent::{db_dz_along, dx_rho_along, TangentEnsemble};
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default admissibility parameter `ε`; the exponent is `2p = 2(1 + ε)/ε`.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Clone)]
pub struct Payoff {
    name: String,
    phi: ScalarFn,
    dphi: Option<ScalarFn>,
    lipschitz: bool,
    exponent: f64,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("name", &self.name)
            .field("has_derivative", &self.dphi.is_some())
            .field("lipschitz", &self.lipschitz)
            .field("exponent", &self.exponent)
            .finish()
    }
}

pub const BUILTIN_PAYOFFS: &[&str] = &["identity", "square", "constant", "call", "smoothed_call"];

fn number(params: &Params, payoff: &str, name: &str, default: Option<f64>) -> Result<f64> {
    match params.get(name) {
        Some(ParamValue::Number(v)) if v.is_finite() => Ok(*v),
        Some(_) => Err(Error::InvalidParam {
            model: payoff.into(),
            name: name.into(),
            reason: "must be a finite number".into(),
        }),
        None => default.ok_or_else(|| Error::InvalidParam {
            model: payoff.into(),
            name: name.into(),
            reason: "is required".into(),
        }),
    }
}

impl Payoff {
    pub fn new<F>(name: impl Into<String>, phi: F, lipschitz: bool) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            phi: Arc::new(phi),
            dphi: None,
            lipschitz,
            exponent: exponent_for(DEFAULT_EPSILON),
        }
    }

    pub fn with_derivative<F>(mut self, dphi: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.dphi = Some(Arc::new(dphi));
        self
    }

    /// Sets `2p = 2(1 + ε)/ε`.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        self.exponent = exponent_for(epsilon);
        Ok(self)
    }

    /// Built-in payoffs: `identity`, `square`, `constant` (`value`), `call`
    /// (`strike`) and `smoothed_call` (`strike`, `width`; softplus).
    pub fn builtin(id: &str, params: &Params) -> Result<Self> {
        let allowed: &[&str] = match id {
            "identity" | "square" => &[],
            "constant" => &["value"],
            "call" => &["strike"],
            "smoothed_call" => &["strike", "width"],
            other => return Err(Error::InvalidArgument(format!("unknown payoff `{other}`"))),
        };
        if let Some(name) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParam {
                model: id.into(),
                name: name.clone(),
                reason: "is not a parameter of this payoff".into(),
            });
        }
        Ok(match id {
            "identity" => Payoff::new("identity", |y| y, true).with_derivative(|_| 1.0),
            "square" => Payoff::new("square", |y| y * y, false).with_derivative(|y| 2.0 * y),
            "constant" => {
                let c = number(params, id, "value", Some(1.0))?;
                Payoff::new("constant", move |_| c, true).with_derivative(|_| 0.0)
            }
            "call" => {
                let k = number(params, id, "strike", Some(0.0))?;
                Payoff::new("call", move |y| (y - k).max(0.0), true)
                    .with_derivative(move |y| if y > k { 1.0 } else { 0.0 })
            }
            _ => {
                let k = number(params, id, "strike", Some(0.0))?;
                let w = number(params, id, "width", Some(0.1))?;
                if w <= 0.0 {
                    return Err(Error::InvalidParam {
                        model: id.into(),
                        name: "width".into(),
                        reason: "must be positive".into(),
                    });
                }
                Payoff::new("smoothed_call", move |y| softplus((y - k) / w) * w, true)
                    .with_derivative(move |y| logistic((y - k) / w))
            }
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lipschitz
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn has_derivative(&self) -> bool {
        self.dphi.is_some()
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.phi)(y)
    }

    pub fn eval_derivative(&self, y: f64) -> Option<f64> {
        self.dphi.as_ref().map(|d| d(y))
    }

    /// Compares the derivative with central differences on fixed probes
    /// (relative tolerance `1e-4`); returns the worst discrepancy.
    pub fn check_derivative(&self) -> Result<f64> {
        let d = self
            .dphi
            .as_ref()
            .ok_or_else(|| Error::MissingDerivative(self.name.clone()))?;
        let h = 1e-6;
        let mut worst = 0.0f64;
        for y in [-3.37, -1.91, -0.73, -0.011, 0.29, 1.13, 2.57, 4.09] {
            let fd = (self.eval(y + h) - self.eval(y - h)) / (2.0 * h);
            let err = (fd - d(y)).abs() / (1.0 + fd.abs());
            worst = worst.max(err);
        }
        if worst > 1e-4 {
            return Err(Error::InvalidArgument(format!(
                "payoff `{}` derivative disagrees with finite differences (error {worst:e})",
                self.name
            )));
        }
        Ok(worst)
    }
}

fn exponent_for(epsilon: f64) -> f64 {
    2.0 * (1.0 + epsilon) / epsilon
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

type WeightFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Bounded weight `a(s)` on `[0, T]` with `∫₀ᵀ a = 1`.
///
/// Evaluated at cell midpoints `(k + ½)Δ`, so both built-ins integrate to one
/// exactly under the grid quadrature.
#[derive(Clone)]
pub struct WeightSchedule {
    name: String,
    a: WeightFn,
}

impl fmt::Debug for WeightSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSchedule").field("name", &self.name).finish()
    }
}

impl WeightSchedule {
    /// `a ≡ 1/T`.
    pub fn uniform() -> Self {
        Self {
            name: "uniform".into(),
            a: Arc::new(|_, horizon| 1.0 / horizon),
        }
    }

    /// `a(s) = 2s/T²`.
    pub fn linear() -> Self {
        Self {
            name: "linear".into(),
            a: Arc::new(|s, horizon| 2.0 * s / (horizon * horizon)),
        }
    }

    /// `a(s, T)` supplied by the caller.
    pub fn custom<F>(name: impl Into<String>, a: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            a: Arc::new(a),
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "uniform" => Ok(Self::uniform()),
            "linear" => Ok(Self::linear()),
            other => Err(Error::InvalidArgument(format!("unknown weight schedule `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `Σ_k a((k + ½)Δ) Δ`.
    pub fn integral(&self, grid: &TimeGrid) -> f64 {
        let dt = grid.dt();
        (0..grid.steps())
            .map(|k| (self.a)((k as f64 + 0.5) * dt, grid.horizon()) * dt)
            .sum()
    }

    /// Cell values `a((k + ½)Δ)`, `k = 0..M`; fails unless they integrate to 1 within `1e-10`.
    pub fn values(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let dt = grid.dt();
        let values: Vec<f64> = (0..grid.steps())
            .map(|k| (self.a)((k as f64 + 0.5) * dt, grid.horizon()))
            .collect();
        let integral = self.integral(grid);
        if values.iter().any(|v| !v.is_finite()) || (integral - 1.0).abs() > 1e-10 {
            return Err(Error::BadSchedule {
                name: self.name.clone(),
                integral,
            });
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Bel,
    Pathwise,
    CentralFd,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bel, Method::Pathwise, Method::CentralFd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bel => "bel",
            Method::Pathwise => "pathwise",
            Method::CentralFd => "central_fd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// Point at which the mean-field correction evaluates `y` in `∂ₓρ(t, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionPoint {
    /// `y = X_t` (canonical).
    #[default]
    Solution,
    /// `y = x0 + B_t`.
    Brownian,
}

impl CorrectionPoint {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionPoint::Solution => "solution",
            CorrectionPoint::Brownian => "brownian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub method: Method,
    /// Hex SHA-256 prefix of the inputs.
    pub config_digest: String,
}

/// Relative resolution below which two estimates are indistinguishable in floating point.
pub const ROUNDING_FLOOR: f64 = 1e-12;

impl DeltaEstimate {
    /// `sqrt(se₁² + se₂²)`, floored at [`ROUNDING_FLOOR`] times the larger magnitude
    /// so that deterministic estimators are compared at rounding resolution.
    pub fn combined_std_error(&self, other: &DeltaEstimate) -> f64 {
        let floor = ROUNDING_FLOOR * self.value.abs().max(other.value.abs()).max(1.0);
        self.std_error.hypot(other.std_error).max(floor)
    }

    /// `|self − other|` in units of [`combined_std_error`](Self::combined_std_error).
    pub fn z_score(&self, other: &DeltaEstimate) -> f64 {
        (self.value - other.value).abs() / self.combined_std_error(other)
    }
}

/// Mean and standard error with sequential summation.
pub fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn estimate(samples: &[f64], method: Method, config_digest: String) -> Result<DeltaEstimate> {
    let (value, std_error) = mean_and_std_error(samples);
    if !value.is_finite() || !std_error.is_finite() {
        return Err(Error::NonFinite {
            context: format!("{method} estimate"),
            point: format!("{} samples", samples.len()),
        });
    }
    Ok(DeltaEstimate {
        value,
        std_error,
        n: samples.len(),
        method,
        config_digest,
    })
}

/// Bismut–Elworthy–Li delta with the canonical correction point `y = X_t`.
pub fn delta_bel(
    ens: &PathEnsemble,
    tang: &TangentEnsemble,
    pair: &CoefficientPair,
    payoff: &Payoff,
    schedule: &WeightSchedule,
) -> Result<DeltaEstimate> {
    delta_bel_with(ens, tang, pair, payoff, schedule, CorrectionPoint::Solution)
}

/// `mean_i Φ(X^i_T) S^i` with `S^i = Σ_k h^i_k ΔW^i_k` and
/// `h_k = a_k J_{k+1} + ∂₃b(t_k) ∂ₓρ(t_k, y_k) A_k`, `A_k = Σ_{l<k} a_l Δ`.
///
/// `J_{k+1}` is known at `t_k`, so every `h_k` is adapted. `Φ′` is never evaluated.
pub fn delta_bel_with(
    ens: &PathEnsemble,
    tang: &TangentEnsemble,
    pair: &CoefficientPair,
    payoff: &Payoff,
    schedule: &WeightSchedule,
    correction: CorrectionPoint,
) -> Result<DeltaEstimate> {
    tang.check_linked(ens)?;
    pair.require_smooth_scalar()?;
    let grid = *ens.grid();
    let report = validate_payoff(payoff, grid.horizon(), 64)?;
    if !report.finite {
        return Err(Error::Inadmissible(payoff.name.clone()));
    }
    let a = schedule.values(&grid)?;
    let n = ens.particles();
    let dt = grid.dt();
    let x0 = ens.x0()[0];

    let mut weight = vec![0.0; n];
    let mut brownian = vec![x0; n];
    let mut accumulated = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        let next_j = tang.snapshot(k + 1);
        let dw = ens.increment_row(k);
        if accumulated != 0.0 {
            let ys: &[f64] = match correction {
                CorrectionPoint::Solution => ens.snapshot(k),
                CorrectionPoint::Brownian => &brownian,
            };
            let gamma = dx_rho_along(ens, tang, pair, k, ys)?;
            let db_dz = db_dz_along(ens, pair, k)?;
            for i in 0..n {
                weight[i] += (ak * next_j[i] + db_dz[i] * gamma[i] * accumulated) * dw[i];
            }
        } else {
            for i in 0..n {
                weight[i] += ak * next_j[i] * dw[i];
            }
        }
        if correction == CorrectionPoint::Brownian {
            brownian.iter_mut().zip(dw).for_each(|(b, w)| *b += w);
        }
        accumulated += ak * dt;
    }

    let samples: Vec<f64> = ens
        .terminal()
        .iter()
        .zip(&weight)
        .map(|(&x, &s)| payoff.eval(x) * s)
        .collect();
    let digest = digest(&[
        Method::Bel.as_str().as_bytes(),
        ens.fingerprint(),
        pair.name().as_bytes(),
        payoff.name.as_bytes(),
        &payoff.exponent.to_le_bytes(),
        schedule.name.as_bytes(),
        correction.as_str().as_bytes(),
    ]);
    estimate(&samples, Method::Bel, digest)
}

/// `mean_i Φ′(X^i_T) J^i_T`.
pub fn delta_pathwise(ens: &PathEnsemble, tang: &TangentEnsemble, payoff: &Payoff) -> Result<DeltaEstimate> {
    tang.check_linked(ens)?;
    let dphi = payoff
        .dphi
        .as_ref()
        .ok_or_else(|| Error::MissingDerivative(payoff.name.clone()))?;
    let samples: Vec<f64> = ens
        .terminal()
        .iter()
        .zip(tang.terminal())
        .map(|(&x, &j)| dphi(x) * j)
        .collect();
    let digest = digest(&[
        Method::Pathwise.as_str().as_bytes(),
        ens.fingerprint(),
        payoff.name.as_bytes(),
    ]);
    estimate(&samples, Method::Pathwise, digest)
}

/// Central difference `(Φ(X_T^{x+h}) − Φ(X_T^{x−h}))/(2h)` per particle under
/// common random numbers; the standard error comes from the differenced samples.
pub fn delta_fd(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    x: f64,
    h: f64,
    seed: u64,
    payoff: &Payoff,
) -> Result<DeltaEstimate> {
    if pair.dim() != 1 {
        return Err(Error::NotScalar(pair.dim()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bump size must be positive, got {h}")));
    }
    let up = simulate_terminal(pair, grid, n, &[x + h], seed)?;
    let down = simulate_terminal(pair, grid, n, &[x - h], seed)?;
    let samples: Vec<f64> = up
        .iter()
        .zip(&down)
        .map(|(&u, &d)| (payoff.eval(u) - payoff.eval(d)) / (2.0 * h))
        .collect();
    let digest = digest(&[
        Method::CentralFd.as_str().as_bytes(),
        pair.name().as_bytes(),
        &grid.horizon().to_le_bytes(),
        &(grid.steps() as u64).to_le_bytes(),
        &(n as u64).to_le_bytes(),
        &x.to_le_bytes(),
        &h.to_le_bytes(),
        &seed.to_le_bytes(),
        payoff.name.as_bytes(),
    ]);
    let est = estimate(&samples, Method::CentralFd, digest)?;
    if est.std_error > est.value.abs() {
        log::warn!(
            "central difference with h = {h} is dominated by noise (value {}, std error {})",
            est.value,
            est.std_error
        );
    }
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub exponent: f64,
    /// Quadrature value of `∫|Φ|^{2p} ω_T`, possibly infinite.
    pub value: f64,
    pub finite: bool,
    pub quad_points: usize,
}

// log(|Φ(y)|^{2p} ω_T(y)).
fn log_weighted(payoff: &Payoff, horizon: f64, y: f64) -> f64 {
    payoff.exponent * payoff.eval(y).abs().ln() - y * y / (4.0 * horizon)
}

/// `∫ |Φ(y)|^{2p} exp(−y²/4T) dy` by Gauss–Hermite quadrature after `y = 2√T x`.
///
/// The verdict is divergent when the quadrature overflows or when the weighted
/// integrand does not decay beyond the outermost node.
pub fn validate_payoff(payoff: &Payoff, horizon: f64, quad_points: usize) -> Result<AdmissibilityReport> {
    if quad_points < 32 {
        return Err(Error::InvalidArgument(format!(
            "need at least 32 quadrature points, got {quad_points}"
        )));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let rule = gauss_hermite(quad_points);
    let scale = 2.0 * horizon.sqrt();
    let mut sum = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let y = scale * x;
        let v = payoff.eval(y);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("payoff `{}`", payoff.name),
                point: format!("y = {y}"),
            });
        }
        if v != 0.0 {
            sum += w * (payoff.exponent * v.abs().ln()).exp();
        }
    }
    let value = scale * sum;

    let outer = scale * rule.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let grows = [1.0, -1.0].iter().any(|&sign| {
        let near = log_weighted(payoff, horizon, sign * outer);
        [2.0, 4.0].iter().any(|&f| {
            let far = log_weighted(payoff, horizon, sign * f * outer);
            far.is_nan() || far == f64::INFINITY || (far.is_finite() && far >= near)
        })
    });
    Ok(AdmissibilityReport {
        exponent: payoff.exponent,
        value,
        finite: value.is_finite() && !grows,
        quad_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::make_builtin;
    use crate::engine::simulate;
    use crate::tangent::propagate_tangent;

    #[test]
    fn schedules_integrate_to_one() {
        for m in [1, 3, 64, 512] {
            let grid = TimeGrid::new(1.7, m).unwrap();
            assert!((WeightSchedule::uniform().integral(&grid) - 1.0).abs() < 1e-12);
            assert!((WeightSchedule::linear().integral(&grid) - 1.0).abs() < 1e-12);
        }
        let bad = WeightSchedule::custom("double", |_, t| 2.0 / t);
        assert!(matches!(
            bad.values(&TimeGrid::new(1.0, 4).unwrap()),
            Err(Error::BadSchedule { .. })
        ));
    }

    #[test]
    fn builtin_payoffs() {
        for id in BUILTIN_PAYOFFS {
            let p = Payoff::builtin(id, &Params::new()).unwrap();
            p.check_derivative().unwrap();
        }
        assert!(Payoff::builtin("put", &Params::new()).is_err());
        let mut extra = Params::new();
        extra.insert("strike".into(), ParamValue::Number(1.0));
        assert!(Payoff::builtin("identity", &extra).is_err());
        let wrong = Payoff::new("wrong", |y| y * y, false).with_derivative(|y| y);
        assert!(wrong.check_derivative().is_err());
    }

    #[test]
    fn epsilon_sets_exponent() {
        let p = Payoff::builtin("identity", &Params::new()).unwrap();
        assert_eq!(p.exponent(), 6.0);
        assert_eq!(p.with_epsilon(1.0).unwrap().exponent(), 4.0);
    }

    #[test]
    fn admissibility() {
        let id = Payoff::builtin("identity", &Params::new()).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let r = validate_payoff(&id, t, 64).unwrap();
            assert!(r.finite);
            // ∫ y⁶ e^{−y²/4T} dy = 15 (2T)³ √(4πT).
            let exact = 15.0 * (2.0 * t).powi(3) * (4.0 * std::f64::consts::PI * t).sqrt();
            assert!((r.value - exact).abs() < 1e-9 * exact);
        }
        let t = 1.0;
        let blowup = Payoff::new("gauss_growth", move |y: f64| (y * y / (2.0 * t)).exp(), false);
        assert!(!validate_payoff(&blowup, t, 32).unwrap().finite);
        let bounded = Payoff::new("bounded", |y: f64| 0.5 * y.sin(), true);
        let r = validate_payoff(&bounded, 2.0, 48).unwrap();
        assert!(r.finite);
        assert!(r.value <= 0.5f64.powi(6) * (4.0 * std::f64::consts::PI * 2.0).sqrt());
        assert!(validate_payoff(&bounded, 1.0, 31).is_err());
        let nan = Payoff::new("nan", |y: f64| y.ln(), false);
        assert!(matches!(validate_payoff(&nan, 1.0, 32), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_drift_bel_weight_is_terminal_brownian_over_t() {
        let pair = make_builtin("zero_drift", &Params::new()).unwrap();
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let ens = simulate(&pair, &grid, 16, &[0.0], 8).unwrap();
        let tang = propagate_tangent(&ens, &pair).unwrap();
        let id = Payoff::builtin("identity", &Params::new()).unwrap();
        let est = delta_bel(&ens, &tang, &pair, &id, &WeightSchedule::uniform()).unwrap();
        let expected: f64 = (0..16)
            .map(|i| {
                let b = (0..4).map(|k| ens.increment(k, i)[0]).sum::<f64>();
                b * b / 2.0
            })
            .sum::<f64>()
            / 16.0;
        assert!((est.value - expected).abs() < 1e-14);
        assert_eq!(est.method, Method::Bel);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("fd".parse::<Method>().is_err());
    }
}
