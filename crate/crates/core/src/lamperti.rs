//! Change of variables `Λ` with `Λ′σ = 1` turning `dX = b dt + σ(X) dB` into
//! unit-noise form, for scalar time-homogeneous coefficients.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coefficients::{eval1, CoefficientPair, Field};
use crate::engine::{simulate, simulate_multiplicative, TimeGrid};
use crate::measure::{wasserstein1, EmpiricalMeasure};
use crate::quadrature::integrate_adaptive;
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Diffusion coefficient `σ > 0` on an open interval.
#[derive(Clone)]
pub struct DiffusionSpec {
    sigma: ScalarFn,
    dsigma: ScalarFn,
    d2sigma: Option<ScalarFn>,
    domain: (f64, f64),
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("domain", &self.domain)
            .field("has_second_derivative", &self.d2sigma.is_some())
            .finish()
    }
}

impl DiffusionSpec {
    pub fn new<S, D>(sigma: S, dsigma: D) -> Self
    where
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            sigma: Arc::new(sigma),
            dsigma: Arc::new(dsigma),
            d2sigma: None,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `σ″`, needed for Jacobians of the transformed pair.
    pub fn with_second_derivative<F>(mut self, d2sigma: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.d2sigma = Some(Arc::new(d2sigma));
        self
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty domain ({lo}, {hi})")));
        }
        self.domain = (lo, hi);
        Ok(self)
    }

    /// `σ ≡ 1`.
    pub fn unit() -> Self {
        Self::new(|_| 1.0, |_| 0.0).with_second_derivative(|_| 0.0)
    }

    /// `σ(y) = √(1 + y²)`.
    pub fn sqrt_one_plus_square() -> Self {
        Self::new(|y: f64| y.hypot(1.0), |y: f64| y / y.hypot(1.0))
            .with_second_derivative(|y: f64| 1.0 / y.hypot(1.0).powi(3))
    }

    pub fn sigma(&self, y: f64) -> f64 {
        (self.sigma)(y)
    }

    pub fn dsigma(&self, y: f64) -> f64 {
        (self.dsigma)(y)
    }

    pub fn d2sigma(&self, y: f64) -> Option<f64> {
        self.d2sigma.as_ref().map(|f| f(y))
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, y: f64) -> bool {
        self.domain.0 < y && y < self.domain.1
    }

    /// Random points inside the domain (rejection sampling from `N(0, 3²)`
    /// or uniform on a bounded interval).
    pub fn probes(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.domain;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let y = if lo.is_finite() && hi.is_finite() {
                rng.random_range(lo..hi)
            } else {
                let z: f64 = StandardNormal.sample(&mut rng);
                3.0 * z
            };
            if self.contains(y) {
                out.push(y);
            }
        }
        out
    }

    /// Checks `σ > 0` and `σ′` against central differences (relative `1e-4`) on probes.
    pub fn validate(&self, count: usize, seed: u64) -> Result<()> {
        for y in self.probes(count, seed) {
            let s = self.sigma(y);
            if !(s > 0.0) {
                return Err(Error::NonPositiveSigma(y));
            }
            let h = 1e-6 * (1.0 + y.abs());
            if self.contains(y - h) && self.contains(y + h) {
                let fd = (self.sigma(y + h) - self.sigma(y - h)) / (2.0 * h);
                if (fd - self.dsigma(y)).abs() > 1e-4 * (1.0 + fd.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "dsigma disagrees with finite differences at y = {y}"
                    )));
                }
            }
        }
        Ok(())
    }
}

const TABLE_SPACING: f64 = 1.0 / 16.0;
const TABLE_HALF_WIDTH: f64 = 40.0;

/// `Λ(y) = ∫_{anchor}^{y} dξ/σ(ξ)` and its inverse.
///
/// `Λ` is tabulated at equally spaced nodes around the anchor; evaluations add
/// one short adaptive integral to the nearest node, and the inverse runs
/// safeguarded Newton inside the bracketing table cell.
#[derive(Clone)]
pub struct LampertiMap {
    spec: DiffusionSpec,
    anchor: f64,
    tol: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl fmt::Debug for LampertiMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LampertiMap")
            .field("anchor", &self.anchor)
            .field("tol", &self.tol)
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

pub fn build_map(spec: &DiffusionSpec, anchor: f64, quad_tol: f64) -> Result<LampertiMap> {
    if !spec.contains(anchor) {
        return Err(Error::InvalidArgument(format!("anchor {anchor} is outside the domain")));
    }
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature tolerance must be positive, got {quad_tol}"
        )));
    }
    spec.validate(256, 0)?;
    let (lo, hi) = spec.domain;
    let mut left = vec![anchor];
    while left.len() as f64 * TABLE_SPACING <= TABLE_HALF_WIDTH {
        let next = anchor - left.len() as f64 * TABLE_SPACING;
        if next <= lo {
            break;
        }
        left.push(next);
    }
    let mut right = Vec::new();
    while (right.len() + 1) as f64 * TABLE_SPACING <= TABLE_HALF_WIDTH {
        let next = anchor + (right.len() + 1) as f64 * TABLE_SPACING;
        if next >= hi {
            break;
        }
        right.push(next);
    }
    left.reverse();
    let nodes: Vec<f64> = left.into_iter().chain(right).collect();
    let inv_sigma = |x: f64| 1.0 / spec.sigma(x);
    let origin = nodes.iter().position(|&x| x == anchor).expect("anchor is a node");
    let mut values = vec![0.0; nodes.len()];
    for j in origin + 1..nodes.len() {
        values[j] = values[j - 1] + integrate_adaptive(inv_sigma, nodes[j - 1], nodes[j], quad_tol)?;
    }
    for j in (0..origin).rev() {
        values[j] = values[j + 1] - integrate_adaptive(inv_sigma, nodes[j], nodes[j + 1], quad_tol)?;
    }
    for (x, v) in nodes.iter().zip(&values) {
        if !v.is_finite() || spec.sigma(*x) <= 0.0 {
            return Err(Error::NonPositiveSigma(*x));
        }
    }
    Ok(LampertiMap {
        spec: spec.clone(),
        anchor,
        tol: quad_tol,
        nodes,
        values,
    })
}

impl LampertiMap {
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        integrate_adaptive(|x| 1.0 / self.spec.sigma(x), a, b, self.tol)
    }

    fn nearest_node(&self, y: f64) -> usize {
        let j = self.nodes.partition_point(|&x| x <= y);
        if j == 0 {
            0
        } else if j == self.nodes.len() || y - self.nodes[j - 1] <= self.nodes[j] - y {
            j - 1
        } else {
            j
        }
    }

    pub fn lambda(&self, y: f64) -> Result<f64> {
        if !self.spec.contains(y) {
            return Err(Error::InvalidArgument(format!("y = {y} is outside the domain")));
        }
        let j = self.nearest_node(y);
        Ok(self.values[j] + self.integral(self.nodes[j], y)?)
    }

    /// `Λ′ = 1/σ`.
    pub fn d_lambda(&self, y: f64) -> f64 {
        1.0 / self.spec.sigma(y)
    }

    /// `Λ″ = −σ′/σ²`.
    pub fn d2_lambda(&self, y: f64) -> f64 {
        let s = self.spec.sigma(y);
        -self.spec.dsigma(y) / (s * s)
    }

    pub fn lambda_inv(&self, target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::Bracket(target));
        }
        let first = self.values[0];
        let last = *self.values.last().expect("non-empty table");
        let (mut lo, mut hi, base_x, base_v);
        if target < first || target > last {
            // Expand outward from the table edge until the target is bracketed.
            let (edge, edge_v, dir) = if target < first {
                (self.nodes[0], first, -1.0)
            } else {
                (*self.nodes.last().unwrap(), last, 1.0)
            };
            let mut step = TABLE_SPACING;
            let (mut x, mut v) = (edge, edge_v);
            loop {
                let mut next = x + dir * step;
                if !self.spec.contains(next) {
                    let bound = if dir > 0.0 {
                        self.spec.domain.1
                    } else {
                        self.spec.domain.0
                    };
                    next = 0.5 * (x + bound);
                    if next == x {
                        return Err(Error::Bracket(target));
                    }
                }
                let nv = v + dir * self.integral(x.min(next), x.max(next))?;
                if (dir > 0.0 && nv >= target) || (dir < 0.0 && nv <= target) {
                    (lo, hi) = if dir > 0.0 { (x, next) } else { (next, x) };
                    (base_x, base_v) = (x, v);
                    break;
                }
                (x, v) = (next, nv);
                step *= 2.0;
                if step > 1e300 {
                    return Err(Error::Bracket(target));
                }
            }
        } else {
            let j = self
                .values
                .partition_point(|&v| v <= target)
                .clamp(1, self.values.len() - 1);
            (lo, hi) = (self.nodes[j - 1], self.nodes[j]);
            let near_left = target - self.values[j - 1] <= self.values[j] - target;
            (base_x, base_v) = if near_left {
                (self.nodes[j - 1], self.values[j - 1])
            } else {
                (self.nodes[j], self.values[j])
            };
        }

        // Safeguarded Newton on g(x) = Λ(x) − target inside [lo, hi].
        let mut x = base_x;
        let mut g = base_v - target;
        for _ in 0..100 {
            if g == 0.0 {
                return Ok(x);
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - g * self.spec.sigma(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = next - x;
            let gn = g + self.integral(x.min(next), x.max(next))?.copysign(step);
            x = next;
            g = gn;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
                return Ok(x);
            }
        }
        Err(Error::Bracket(target))
    }
}

fn inverse_or_nan(map: &LampertiMap, y: f64) -> f64 {
    map.lambda_inv(y).unwrap_or(f64::NAN)
}

/// Unit-noise pair `b*(y, z) = b(x, z)/σ(x) − σ′(x)/2`, `φ*(y, z) = φ(Λ⁻¹y, Λ⁻¹z)`
/// with `x = Λ⁻¹(y)`. `t` is passed through unchanged; the pair must not depend on it.
///
/// Jacobians are composed when the pair is smooth and `σ″` is known. Points where
/// `Λ⁻¹` fails evaluate to NaN, which the engine reports as a non-finite state.
pub fn transform_pair(pair: &CoefficientPair, map: &LampertiMap, spec: &DiffusionSpec) -> Result<CoefficientPair> {
    if pair.dim() != 1 {
        return Err(Error::NotScalar(pair.dim()));
    }
    let m = Arc::new(map.clone());
    let s = spec.clone();

    let (b, mm, ss) = (pair.b().clone(), m.clone(), s.clone());
    let b_star: Field = Arc::new(move |t, y, z, out| {
        let x = inverse_or_nan(&mm, y[0]);
        out[0] = eval1(&b, t, x, z[0]) / ss.sigma(x) - 0.5 * ss.dsigma(x);
    });
    let (phi, mm) = (pair.phi().clone(), m.clone());
    let phi_star: Field = Arc::new(move |t, y, z, out| {
        out[0] = eval1(&phi, t, inverse_or_nan(&mm, y[0]), inverse_or_nan(&mm, z[0]));
    });

    let mut flags = pair.flags();
    let mut out = CoefficientPair::new(format!("{}*", pair.name()), 1, b_star, phi_star)?;
    match (pair.require_smooth_scalar(), &spec.d2sigma) {
        (Ok(jac), Some(d2)) => {
            let (b, db_dy, db_dz) = (pair.b().clone(), jac.db_dy.clone(), jac.db_dz.clone());
            let (dphi_dy, dphi_dz) = (jac.dphi_dy.clone(), jac.dphi_dz.clone());
            let d2 = d2.clone();
            let (mm, ss) = (m.clone(), s.clone());
            let db_star_dy: Field = Arc::new(move |t, y, z, out| {
                let x = inverse_or_nan(&mm, y[0]);
                let (sig, dsig) = (ss.sigma(x), ss.dsigma(x));
                let bx = eval1(&b, t, x, z[0]);
                out[0] = sig * (eval1(&db_dy, t, x, z[0]) / sig - bx * dsig / (sig * sig) - 0.5 * d2(x));
            });
            let (mm, ss) = (m.clone(), s.clone());
            let db_star_dz: Field = Arc::new(move |t, y, z, out| {
                let x = inverse_or_nan(&mm, y[0]);
                out[0] = eval1(&db_dz, t, x, z[0]) / ss.sigma(x);
            });
            let (mm, ss) = (m.clone(), s.clone());
            let dphi_star_dy: Field = Arc::new(move |t, y, z, out| {
                let (x, w) = (inverse_or_nan(&mm, y[0]), inverse_or_nan(&mm, z[0]));
                out[0] = eval1(&dphi_dy, t, x, w) * ss.sigma(x);
            });
            let (mm, ss) = (m, s);
            let dphi_star_dz: Field = Arc::new(move |t, y, z, out| {
                let (x, w) = (inverse_or_nan(&mm, y[0]), inverse_or_nan(&mm, z[0]));
                out[0] = eval1(&dphi_dz, t, x, w) * ss.sigma(w);
            });
            out = out.with_jacobians(
                Some(db_star_dy),
                Some(db_star_dz),
                Some(dphi_star_dy),
                Some(dphi_star_dz),
            );
        }
        _ => flags.smooth = false,
    }
    out.with_flags(flags)
}

/// Map diagnostics on random probes.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCheck {
    /// `max |Λ′σ − 1|` with `Λ′` from central differences of `Λ`.
    pub derivative_error: f64,
    /// `max |Λ⁻¹(Λ(y)) − y|`.
    pub inverse_error: f64,
    pub monotone: bool,
    /// `max σ` on the probes: the Lipschitz constant of `Λ⁻¹` there.
    pub inverse_lipschitz: f64,
}

pub fn check_map(map: &LampertiMap, count: usize, seed: u64) -> Result<MapCheck> {
    let mut probes = map.spec.probes(count, seed);
    probes.sort_by(f64::total_cmp);
    let mut derivative_error = 0.0f64;
    let mut inverse_error = 0.0f64;
    let mut inverse_lipschitz = 0.0f64;
    let mut values = Vec::with_capacity(probes.len());
    for &y in &probes {
        let v = map.lambda(y)?;
        values.push(v);
        let h = 1e-3;
        // Richardson-extrapolated central difference, O(h⁴).
        let d1 = (map.lambda(y + h)? - map.lambda(y - h)?) / (2.0 * h);
        let d2 = (map.lambda(y + 2.0 * h)? - map.lambda(y - 2.0 * h)?) / (4.0 * h);
        let derivative = (4.0 * d1 - d2) / 3.0;
        let sigma = map.spec.sigma(y);
        derivative_error = derivative_error.max((derivative * sigma - 1.0).abs());
        inverse_error = inverse_error.max((map.lambda_inv(v)? - y).abs());
        inverse_lipschitz = inverse_lipschitz.max(sigma);
    }
    let monotone = values
        .windows(2)
        .zip(probes.windows(2))
        .all(|(v, p)| p[0] == p[1] || v[0] < v[1]);
    Ok(MapCheck {
        derivative_error,
        inverse_error,
        monotone,
        inverse_lipschitz,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    /// `W1(Λ⁻¹(Y_T), X_T)` between the transformed and direct terminal laws.
    pub w1: f64,
    pub transformed_terminal: Vec<f64>,
    pub direct_terminal: Vec<f64>,
}

/// Simulates the transformed unit-noise equation from `Λ(x0)` and the original
/// `dX = b dt + σ(X) dB` by direct Euler–Maruyama with the same seed, then
/// compares terminal laws after mapping back through `Λ⁻¹`.
pub fn round_trip(
    pair: &CoefficientPair,
    spec: &DiffusionSpec,
    map: &LampertiMap,
    grid: &TimeGrid,
    n: usize,
    x0: f64,
    seed: u64,
) -> Result<RoundTrip> {
    let transformed = transform_pair(pair, map, spec)?;
    let y0 = map.lambda(x0)?;
    let ens = simulate(&transformed, grid, n, &[y0], seed)?;
    let transformed_terminal = ens
        .terminal()
        .iter()
        .map(|&y| map.lambda_inv(y))
        .collect::<Result<Vec<_>>>()?;

    let sigma = {
        let s = spec.clone();
        move |x: f64| s.sigma(x)
    };
    let direct = simulate_multiplicative(pair, &sigma, grid, n, x0, seed)?;
    if let Some((idx, &x)) = direct.states().iter().enumerate().find(|(_, &x)| !spec.contains(x)) {
        return Err(Error::InvalidArgument(format!(
            "direct path of particle {} left the domain at step {} (x = {x})",
            idx % n,
            idx / n
        )));
    }
    let direct_terminal = direct.terminal().to_vec();
    let w1 = wasserstein1(
        &EmpiricalMeasure::from_scalars(transformed_terminal.clone())?,
        &EmpiricalMeasure::from_scalars(direct_terminal.clone())?,
    )?;
    Ok(RoundTrip {
        w1,
        transformed_terminal,
        direct_terminal,
    })
}
