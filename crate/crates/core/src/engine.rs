//! Euler–Maruyama particle systems for mean-field SDEs.
//!
//! Each particle `i` draws its Brownian increments from its own ChaCha8 stream
//! `(seed, i)`, so the noise of a particle never depends on how work is
//! scheduled. Per-step reductions over particles are sequential in particle
//! order; all other work runs on the ambient rayon pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientPair;
use crate::measure::{wasserstein1, EmpiricalMeasure};
use crate::{Error, Result};

/// Uniform grid `0 = t_0 < … < t_M = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// How the law in the drift is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Empirical measure of the ensemble itself.
    Interacting,
    /// Empirical measures of a previously computed law flow.
    FrozenLaw,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::Interacting => "interacting",
            Scheme::FrozenLaw => "frozen_law",
        }
    }
}

/// `N` particle trajectories on a grid together with the increments that drove them.
///
/// Arrays are time-major: `states[(k·N + i)·d + c]`, `increments[(k·N + i)·d + c]`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n: usize,
    dim: usize,
    x0: Vec<f64>,
    states: Vec<f64>,
    increments: Vec<f64>,
    seed: u64,
    scheme: Scheme,
    fingerprint: [u8; 32],
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Digest identifying this ensemble (inputs plus terminal states).
    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Positions of all particles at step `k`, row-major `N × d`.
    pub fn snapshot(&self, k: usize) -> &[f64] {
        let w = self.n * self.dim;
        &self.states[k * w..(k + 1) * w]
    }

    pub fn state(&self, k: usize, i: usize) -> &[f64] {
        let at = (k * self.n + i) * self.dim;
        &self.states[at..at + self.dim]
    }

    /// Increments `B_{t_{k+1}} − B_{t_k}` of all particles, `N × d`.
    pub fn increment_row(&self, k: usize) -> &[f64] {
        let w = self.n * self.dim;
        &self.increments[k * w..(k + 1) * w]
    }

    pub fn increment(&self, k: usize, i: usize) -> &[f64] {
        let at = (k * self.n + i) * self.dim;
        &self.increments[at..at + self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.snapshot(self.grid.steps)
    }

    pub fn measure(&self, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.dim, self.snapshot(k).to_vec()).expect("non-empty snapshot")
    }

    pub fn terminal_measure(&self) -> EmpiricalMeasure {
        self.measure(self.grid.steps)
    }

    /// Drift evaluation implied by the recorded step: `(X_{k+1} − X_k − ΔW_k) / Δ`.
    pub fn implied_drift(&self, k: usize, i: usize) -> Vec<f64> {
        let dt = self.grid.dt();
        (0..self.dim)
            .map(|c| (self.state(k + 1, i)[c] - self.state(k, i)[c] - self.increment(k, i)[c]) / dt)
            .collect()
    }

    /// Sample mean at every grid time (first coordinate).
    pub fn mean_curve(&self) -> Vec<f64> {
        (0..=self.grid.steps)
            .map(|k| self.snapshot(k).iter().step_by(self.dim).sum::<f64>() / self.n as f64)
            .collect()
    }

    pub(crate) fn require_scalar(&self) -> Result<()> {
        if self.dim == 1 {
            Ok(())
        } else {
            Err(Error::NotScalar(self.dim))
        }
    }
}

/// Time-indexed empirical measures `t_k ↦ μ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawFlow {
    grid: TimeGrid,
    snapshots: Vec<EmpiricalMeasure>,
}

impl LawFlow {
    pub fn from_ensemble(ens: &PathEnsemble) -> Self {
        Self {
            grid: ens.grid,
            snapshots: (0..=ens.grid.steps).map(|k| ens.measure(k)).collect(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn snapshots(&self) -> &[EmpiricalMeasure] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &EmpiricalMeasure {
        &self.snapshots[k]
    }

    /// `sup_k W1(self_k, other_k)`.
    pub fn sup_w1(&self, other: &LawFlow) -> Result<f64> {
        if self.snapshots.len() != other.snapshots.len() {
            return Err(Error::InvalidArgument("law flows live on different grids".into()));
        }
        self.snapshots
            .iter()
            .zip(&other.snapshots)
            .try_fold(0.0f64, |acc, (a, b)| Ok(acc.max(wasserstein1(a, b)?)))
    }
}

fn particle_rng(seed: u64, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng
}

fn particle_streams(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| particle_rng(seed, i)).collect()
}

fn draw_increments(rngs: &mut [ChaCha8Rng], sqrt_dt: f64, out: &mut [f64]) {
    let dim = out.len() / rngs.len();
    out.par_chunks_mut(dim).zip(rngs.par_iter_mut()).for_each(|(row, rng)| {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = sqrt_dt * z;
        }
    });
}

/// Brownian increments for `n` particles on `grid`, time-major `M × N × d`.
pub fn generate_increments(grid: &TimeGrid, n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let width = n * dim;
    let mut out = vec![0.0; grid.steps * width];
    let mut rngs = particle_streams(seed, n);
    let sqrt_dt = grid.dt().sqrt();
    for row in out.chunks_exact_mut(width) {
        draw_increments(&mut rngs, sqrt_dt, row);
    }
    out
}

/// Source of Brownian increments for [`integrate`].
pub(crate) enum Noise<'a> {
    Stored(&'a [f64]),
    Streams(u64),
}

/// Law used for the mean-field term at each step.
pub(crate) enum LawSource<'a> {
    Interacting,
    /// Frozen positions, time-major `(M + 1) × N_law × d`.
    Frozen {
        states: &'a [f64],
        particles: usize,
    },
}

pub(crate) type Diffusion<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// Law integrals `ρ^i = (1/N) Σ_j φ(t, X^i, Z^j)` for every particle.
pub(crate) fn law_integrals(pair: &CoefficientPair, t: f64, current: &[f64], law: &[f64], out: &mut [f64]) {
    let d = pair.dim();
    let n_law = law.len() / d;
    let phi = pair.phi();
    let average = |y: &[f64], rho: &mut [f64]| {
        let mut buf = vec![0.0; d];
        rho.iter_mut().for_each(|r| *r = 0.0);
        for z in law.chunks_exact(d) {
            phi(t, y, z, &mut buf);
            rho.iter_mut().zip(&buf).for_each(|(r, b)| *r += b);
        }
        rho.iter_mut().for_each(|r| *r /= n_law as f64);
    };
    if pair.flags().phi_y_independent {
        let mut rho = vec![0.0; d];
        average(&current[..d], &mut rho);
        out.chunks_exact_mut(d).for_each(|chunk| chunk.copy_from_slice(&rho));
    } else {
        out.par_chunks_mut(d)
            .zip(current.par_chunks(d))
            .for_each(|(rho, y)| average(y, rho));
    }
}

pub(crate) struct Integrated {
    /// Full paths when recorded, otherwise only the terminal snapshot.
    pub states: Vec<f64>,
    pub increments: Option<Vec<f64>>,
}

/// Explicit Euler–Maruyama for `n` particles started at `x0`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate(
    pair: &CoefficientPair,
    diffusion: Option<Diffusion<'_>>,
    grid: &TimeGrid,
    n: usize,
    x0: &[f64],
    noise: Noise<'_>,
    law: LawSource<'_>,
    record: bool,
) -> Result<Integrated> {
    let d = pair.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x0.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 particles for a mean-field simulation, got {n}"
        )));
    }
    if diffusion.is_some() && d != 1 {
        return Err(Error::NotScalar(d));
    }
    let width = n * d;
    let steps = grid.steps();
    let dt = grid.dt();
    if let Noise::Stored(inc) = &noise {
        if inc.len() != steps * width {
            return Err(Error::InvalidArgument("stored increments do not match the grid".into()));
        }
    }
    if let LawSource::Frozen { states, particles } = &law {
        if states.len() != (steps + 1) * particles * d {
            return Err(Error::InvalidArgument("frozen law flow does not match the grid".into()));
        }
    }

    let mut current: Vec<f64> = x0.iter().copied().cycle().take(width).collect();
    let mut states = if record {
        let mut s = Vec::with_capacity((steps + 1) * width);
        s.extend_from_slice(&current);
        s
    } else {
        Vec::new()
    };
    let (mut rngs, mut scratch) = match noise {
        Noise::Streams(seed) => (particle_streams(seed, n), vec![0.0; width]),
        Noise::Stored(_) => (Vec::new(), Vec::new()),
    };
    let mut rho = vec![0.0; width];
    let mut next = vec![0.0; width];

    for k in 0..steps {
        let t = grid.time(k);
        let dw: &[f64] = match noise {
            Noise::Stored(inc) => &inc[k * width..(k + 1) * width],
            Noise::Streams(_) => {
                draw_increments(&mut rngs, dt.sqrt(), &mut scratch);
                &scratch
            }
        };
        match &law {
            LawSource::Interacting => law_integrals(pair, t, &current, &current, &mut rho),
            LawSource::Frozen { states, particles } => {
                let w = particles * d;
                law_integrals(pair, t, &current, &states[k * w..(k + 1) * w], &mut rho)
            }
        }
        let b = pair.b();
        next.par_chunks_mut(d)
            .zip(current.par_chunks(d))
            .zip(rho.par_chunks(d).zip(dw.par_chunks(d)))
            .for_each(|((out, y), (z, w))| {
                b(t, y, z, out);
                match diffusion {
                    Some(sigma) => out[0] = y[0] + out[0] * dt + sigma(y[0]) * w[0],
                    None => {
                        for c in 0..d {
                            out[c] = y[c] + out[c] * dt + w[c];
                        }
                    }
                }
            });
        if let Some(pos) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                step: k + 1,
                particle: pos / d,
            });
        }
        std::mem::swap(&mut current, &mut next);
        if record {
            states.extend_from_slice(&current);
        }
    }

    let increments = match noise {
        Noise::Stored(inc) => Some(inc.to_vec()),
        Noise::Streams(_) => None,
    };
    Ok(Integrated {
        states: if record { states } else { current },
        increments,
    })
}

fn fingerprint(seed: u64, grid: &TimeGrid, n: usize, x0: &[f64], scheme: Scheme, terminal: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(grid.horizon.to_bits().to_le_bytes());
    h.update((grid.steps as u64).to_le_bytes());
    h.update((n as u64).to_le_bytes());
    for v in x0 {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(scheme.tag().as_bytes());
    for v in terminal {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

fn assemble(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    x0: &[f64],
    seed: u64,
    scheme: Scheme,
    run: Integrated,
) -> PathEnsemble {
    let width = n * pair.dim();
    let terminal = &run.states[grid.steps * width..];
    let fp = fingerprint(seed, grid, n, x0, scheme, terminal);
    PathEnsemble {
        grid: *grid,
        n,
        dim: pair.dim(),
        x0: x0.to_vec(),
        states: run.states,
        increments: run.increments.unwrap_or_default(),
        seed,
        scheme,
        fingerprint: fp,
    }
}

/// Interacting particle system: `X^i_{k+1} = X^i_k + b(t_k, X^i_k, ρ^i_k) Δ + ΔW^i_k`
/// with `ρ^i_k = (1/N) Σ_j φ(t_k, X^i_k, X^j_k)`.
///
/// `φ` is averaged once per step when the pair declares `phi_y_independent`,
/// otherwise per particle (`O(N²)`).
pub fn simulate(pair: &CoefficientPair, grid: &TimeGrid, n: usize, x0: &[f64], seed: u64) -> Result<PathEnsemble> {
    let increments = generate_increments(grid, n, pair.dim(), seed);
    simulate_with_increments(pair, grid, n, x0, seed, &increments)
}

/// As [`simulate`] with caller-supplied increments (time-major `M × N × d`).
pub fn simulate_with_increments(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    x0: &[f64],
    seed: u64,
    increments: &[f64],
) -> Result<PathEnsemble> {
    let run = integrate(
        pair,
        None,
        grid,
        n,
        x0,
        Noise::Stored(increments),
        LawSource::Interacting,
        true,
    )?;
    Ok(assemble(pair, grid, n, x0, seed, Scheme::Interacting, run))
}

/// Interacting simulation keeping only terminal positions (`N × d`).
pub fn simulate_terminal(pair: &CoefficientPair, grid: &TimeGrid, n: usize, x0: &[f64], seed: u64) -> Result<Vec<f64>> {
    Ok(integrate(
        pair,
        None,
        grid,
        n,
        x0,
        Noise::Streams(seed),
        LawSource::Interacting,
        false,
    )?
    .states)
}

/// Simulation with the drift evaluated against a frozen law flow.
pub fn simulate_frozen(
    pair: &CoefficientPair,
    law: &LawFlow,
    n: usize,
    x0: &[f64],
    seed: u64,
    increments: &[f64],
) -> Result<PathEnsemble> {
    let grid = law.grid;
    let particles = law.snapshots[0].len();
    let frozen: Vec<f64> = law.snapshots.iter().flat_map(|m| m.points().iter().copied()).collect();
    let run = integrate(
        pair,
        None,
        &grid,
        n,
        x0,
        Noise::Stored(increments),
        LawSource::Frozen {
            states: &frozen,
            particles,
        },
        true,
    )?;
    Ok(assemble(pair, &grid, n, x0, seed, Scheme::FrozenLaw, run))
}

/// Scalar simulation with a state-dependent diffusion `σ(X)` multiplying the noise.
pub(crate) fn simulate_multiplicative(
    pair: &CoefficientPair,
    sigma: Diffusion<'_>,
    grid: &TimeGrid,
    n: usize,
    x0: f64,
    seed: u64,
) -> Result<PathEnsemble> {
    let increments = generate_increments(grid, n, 1, seed);
    let run = integrate(
        pair,
        Some(sigma),
        grid,
        n,
        &[x0],
        Noise::Stored(&increments),
        LawSource::Interacting,
        true,
    )?;
    Ok(assemble(pair, grid, n, &[x0], seed, Scheme::Interacting, run))
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub ensemble: PathEnsemble,
    pub law_flow: LawFlow,
    pub iterations: usize,
    /// `sup_k W1(previous_k, new_k)` for each iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Fixed-point iteration on law flows.
///
/// Starts from the law flow of driftless paths, then repeatedly simulates with
/// the drift evaluated against the previous flow (same increments every time)
/// until the sup-in-time W1 change is at most `tol` or `max_iter` is reached.
/// Non-convergence is reported through [`PicardOutcome::converged`].
pub fn picard_iterate(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    x0: &[f64],
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    if pair.dim() != 1 {
        return Err(Error::NotScalar(pair.dim()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if x0.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: x0.len(),
        });
    }
    let increments = generate_increments(grid, n, 1, seed);

    // Driftless start: X_k = x0 + Σ_{l<k} ΔW_l.
    let mut start = Vec::with_capacity((grid.steps + 1) * n);
    start.extend(std::iter::repeat_n(x0[0], n));
    for k in 0..grid.steps {
        for i in 0..n {
            let prev = start[k * n + i];
            start.push(prev + increments[k * n + i]);
        }
    }
    let mut flow = LawFlow {
        grid: *grid,
        snapshots: start
            .chunks_exact(n)
            .map(|s| EmpiricalMeasure::from_scalars(s.to_vec()).expect("non-empty"))
            .collect(),
    };

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut ensemble = None;
    while iterations < max_iter {
        let ens = simulate_frozen(pair, &flow, n, x0, seed, &increments)?;
        let next = LawFlow::from_ensemble(&ens);
        let change = flow.sup_w1(&next)?;
        history.push(change);
        iterations += 1;
        flow = next;
        ensemble = Some(ens);
        if change <= tol {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        ensemble: ensemble.expect("at least one iteration"),
        law_flow: flow,
        iterations,
        history,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoelderEntry {
    pub t_index: usize,
    pub s_index: usize,
    pub x_index: usize,
    pub y_index: usize,
    /// Estimate of `E|X_t^x − X_s^y|²`.
    pub second_moment: f64,
    /// `|t − s| + |x − y|²`.
    pub base: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoelderReport {
    pub entries: Vec<HoelderEntry>,
    /// Smallest `C` with `E|X_t^x − X_s^y|² ≤ C (|t − s| + |x − y|²)` over all entries.
    pub constant: f64,
}

/// Coupled second-moment diagnostics for time/initial-condition continuity.
///
/// All initial conditions share the seed, hence the Brownian paths. The second
/// moment uses the Brownian part as a control variate: with
/// `R = (x − y) + (B_t − B_s)`, whose second moment `|x − y|² + |t − s|` is known,
/// the estimate is `mean(|X_t^x − X_s^y|² − R²) + |x − y|² + |t − s|`.
/// Time points are nine evenly spaced grid indices.
pub fn hoelder_probe(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    xs: &[f64],
    seed: u64,
) -> Result<HoelderReport> {
    if pair.dim() != 1 {
        return Err(Error::NotScalar(pair.dim()));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two initial states".into()));
    }
    let increments = generate_increments(grid, n, 1, seed);
    let ensembles = xs
        .iter()
        .map(|&x| simulate_with_increments(pair, grid, n, &[x], seed, &increments))
        .collect::<Result<Vec<_>>>()?;

    let steps = grid.steps;
    let mut indices: Vec<usize> = (0..=8).map(|j| (j * steps + 4) / 8).collect();
    indices.dedup();

    // Brownian paths B_k = Σ_{l<k} ΔW_l at the probe indices.
    let mut brownian = vec![vec![0.0; n]; steps + 1];
    for k in 0..steps {
        for i in 0..n {
            brownian[k + 1][i] = brownian[k][i] + increments[k * n + i];
        }
    }

    let mut entries = Vec::new();
    for (a, &kt) in indices.iter().enumerate() {
        for &ks in &indices[..=a] {
            let gap = grid.time(kt) - grid.time(ks);
            for (xi, ex) in ensembles.iter().enumerate() {
                for (yi, ey) in ensembles.iter().enumerate() {
                    let dx = xs[xi] - xs[yi];
                    let base = gap + dx * dx;
                    if base == 0.0 {
                        continue;
                    }
                    let (pt, ps) = (ex.snapshot(kt), ey.snapshot(ks));
                    let correction: f64 = (0..n)
                        .map(|i| {
                            let diff = pt[i] - ps[i];
                            let reference = dx + (brownian[kt][i] - brownian[ks][i]);
                            diff * diff - reference * reference
                        })
                        .sum::<f64>()
                        / n as f64;
                    let second_moment = correction + base;
                    entries.push(HoelderEntry {
                        t_index: kt,
                        s_index: ks,
                        x_index: xi,
                        y_index: yi,
                        second_moment,
                        base,
                        ratio: second_moment / base,
                    });
                }
            }
        }
    }
    let constant = entries.iter().fold(0.0f64, |m, e| m.max(e.ratio));
    Ok(HoelderReport { entries, constant })
}
