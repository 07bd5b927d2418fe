//! Reference solutions that do not depend on particle simulation.
//!
//! The only exception is [`caratheodory_solve`], which compares a simulated
//! mean curve against RK4 and lives in its own submodule.

mod bridge;

use statrs::function::erf::erfc;

use crate::engine::TimeGrid;
use crate::{Error, Result};

pub use bridge::{caratheodory_solve, CaratheodoryOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawFamily {
    Gaussian,
    DeterministicMeanOnly,
}

/// Curves aligned with a [`TimeGrid`]; `variance ≥ 0` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub tangent: Option<Vec<f64>>,
    pub law_family: LawFamily,
}

impl OracleSolution {
    pub fn terminal_mean(&self) -> f64 {
        *self.mean.last().expect("grid has at least two points")
    }

    pub fn terminal_variance(&self) -> f64 {
        *self.variance.last().expect("grid has at least two points")
    }
}

/// `b(y, z) = a y + c z`, `φ = z`: Gaussian with mean `x0 e^{(a+c)t}`,
/// variance `(e^{2at} − 1)/(2a)` and tangent `e^{(a+c)t}`.
pub fn ou_oracle(a: f64, c: f64, x0: f64, grid: &TimeGrid) -> OracleSolution {
    let times = grid.times();
    let variance = times
        .iter()
        .map(|&t| {
            if a == 0.0 {
                t
            } else {
                (2.0 * a * t).exp_m1() / (2.0 * a)
            }
        })
        .collect();
    let tangent: Vec<f64> = times.iter().map(|&t| ((a + c) * t).exp()).collect();
    OracleSolution {
        grid: *grid,
        mean: tangent.iter().map(|g| x0 * g).collect(),
        variance,
        tangent: Some(tangent),
        law_family: LawFamily::Gaussian,
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `A′(t) = Φ_N((u − x0 − A)/√t)`; at `t = 0` the argument's sign decides `0`, `½` or `1`.
pub fn cdf_drift_rate(u: f64, x0: f64, a: f64, t: f64) -> f64 {
    let gap = u - x0 - a;
    if t == 0.0 {
        return if gap > 0.0 {
            1.0
        } else if gap < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    normal_cdf(gap / t.sqrt())
}

/// Default RK4 step budget for [`cdf_drift_oracle`].
pub const CDF_DRIFT_RK4_STEPS: usize = 10_000;

/// `X_t ~ N(x0 + A(t), t)` for `b(y, z) = z`, `φ(y, z) = 1{z ≤ u}`.
pub fn cdf_drift_oracle(u: f64, x0: f64, grid: &TimeGrid) -> Result<OracleSolution> {
    cdf_drift_oracle_with_steps(u, x0, grid, CDF_DRIFT_RK4_STEPS)
}

/// As [`cdf_drift_oracle`] with about `rk4_steps` RK4 steps over `[0, T]`.
///
/// Integrates in `s = √t`, where `dA/ds = 2s Φ_N((u − x0 − A)/s)` is smooth up
/// to `s = 0`. Each grid cell `[√t_k, √t_{k+1}]` gets a share of the steps
/// proportional to its length in `s`.
pub fn cdf_drift_oracle_with_steps(u: f64, x0: f64, grid: &TimeGrid, rk4_steps: usize) -> Result<OracleSolution> {
    if rk4_steps == 0 {
        return Err(Error::InvalidArgument("need at least one RK4 step".into()));
    }
    let rate = |s: f64, a: f64| {
        if s == 0.0 {
            0.0
        } else {
            2.0 * s * normal_cdf((u - x0 - a) / s)
        }
    };
    let s_total = grid.horizon().sqrt();
    let mut a = 0.0;
    let mut mean = Vec::with_capacity(grid.steps() + 1);
    mean.push(x0);
    for k in 0..grid.steps() {
        let (s0, s1) = (grid.time(k).sqrt(), grid.time(k + 1).sqrt());
        let sub = (((s1 - s0) / s_total) * rk4_steps as f64).ceil().max(1.0) as usize;
        a = rk4(&rate, s0, s1, a, sub);
        if !a.is_finite() {
            return Err(Error::NonFinite {
                context: "cdf_drift RK4".into(),
                point: format!("t = {}", grid.time(k + 1)),
            });
        }
        mean.push(x0 + a);
    }
    Ok(OracleSolution {
        grid: *grid,
        mean,
        variance: grid.times(),
        tangent: None,
        law_family: LawFamily::Gaussian,
    })
}

/// Classical RK4 for `y′ = f(t, y)` on `[t0, t1]` with `steps` equal steps.
pub fn rk4(f: &impl Fn(f64, f64) -> f64, t0: f64, t1: f64, y0: f64, steps: usize) -> f64 {
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    for j in 0..steps {
        let t = t0 + j as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

/// RK4 solution of `u′ = f(t, u)` at every grid time, `substeps` per cell.
pub fn rk4_curve(f: &impl Fn(f64, f64) -> f64, x0: f64, grid: &TimeGrid, substeps: usize) -> Vec<f64> {
    let mut curve = Vec::with_capacity(grid.steps() + 1);
    curve.push(x0);
    let mut y = x0;
    for k in 0..grid.steps() {
        y = rk4(f, grid.time(k), grid.time(k + 1), y, substeps.max(1));
        curve.push(y);
    }
    curve
}

/// Sample skewness and excess kurtosis against the Gaussian bands
/// `3√(6/N)` and `3√(24/N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTest {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub passed: bool,
}

pub fn gaussian_moment_test(samples: &[f64]) -> MomentTest {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m = |p: i32| samples.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
    let var = m(2);
    let skewness = m(3) / var.powf(1.5);
    let excess_kurtosis = m(4) / (var * var) - 3.0;
    MomentTest {
        skewness,
        excess_kurtosis,
        passed: skewness.abs() <= 3.0 * (6.0 / n).sqrt() && excess_kurtosis.abs() <= 3.0 * (24.0 / n).sqrt(),
    }
}
