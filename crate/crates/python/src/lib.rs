//! Python bindings: a thin layer over `mfsde_core`.
//!
//! Arrays cross the boundary as Python lists of floats. Parameter dicts map
//! strings to floats, lists of floats, or strings.

use mfsde_core::engine::{LawFlow, PathEnsemble as CoreEnsemble};
use mfsde_core::lamperti::{build_map, check_map, round_trip as core_round_trip, DiffusionSpec};
use mfsde_core::oracles;
use mfsde_core::{
    bel, CoefficientPair as CorePair, DeltaEstimate as CoreDelta, MalliavinFactor as CoreFactor, ParamValue, Params,
    Payoff as CorePayoff, TangentEnsemble, TimeGrid as CoreGrid, WeightSchedule,
};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: mfsde_core::Error) -> PyErr {
    use mfsde_core::Error::*;
    match err {
        NonFinite { .. } | NonFiniteState { .. } | Bracket(_) => PyArithmeticError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn params(dict: Option<&Bound<'_, PyDict>>) -> PyResult<Params> {
    let mut out = Params::new();
    let Some(dict) = dict else { return Ok(out) };
    for (k, v) in dict.iter() {
        let key: String = k.extract()?;
        let value = if let Ok(x) = v.extract::<f64>() {
            ParamValue::Number(x)
        } else if let Ok(s) = v.extract::<String>() {
            ParamValue::Text(s)
        } else if let Ok(list) = v.extract::<Vec<f64>>() {
            ParamValue::List(list)
        } else {
            return Err(PyValueError::new_err(format!(
                "parameter `{key}` must be a float, list of floats or string"
            )));
        };
        out.insert(key, value);
    }
    Ok(out)
}

/// Uniform grid `t_k = k·T/M`, `k = 0..=M`.
#[pyclass(frozen, skip_from_py_object, module = "mfsde")]
#[derive(Clone, Copy)]
struct TimeGrid(CoreGrid);

#[pymethods]
impl TimeGrid {
    #[new]
    fn new(horizon: f64, steps: usize) -> PyResult<Self> {
        CoreGrid::new(horizon, steps).map(Self).map_err(to_py)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    fn times(&self) -> Vec<f64> {
        self.0.times()
    }

    fn __repr__(&self) -> String {
        format!("TimeGrid(horizon={}, steps={})", self.0.horizon(), self.0.steps())
    }
}

/// Drift `b(t, y, z)` and interaction functional `φ(t, y, z)`.
#[pyclass(frozen, skip_from_py_object, module = "mfsde")]
#[derive(Clone)]
struct CoefficientPair(CorePair);

#[pymethods]
impl CoefficientPair {
    /// One of the built-in models, e.g. `CoefficientPair.builtin("mean_field_ou", {"a": -1.0, "c": 0.5})`.
    #[staticmethod]
    #[pyo3(signature = (model_id, params=None))]
    fn builtin(model_id: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        mfsde_core::make_builtin(model_id, &self::params(params)?)
            .map(Self)
            .map_err(to_py)
    }

    /// Gaussian mollification with bandwidth `h`.
    #[pyo3(signature = (bandwidth, quadrature_order=8))]
    fn mollify(&self, bandwidth: f64, quadrature_order: usize) -> PyResult<Self> {
        let cfg = mfsde_core::MollifierConfig::new(bandwidth, quadrature_order).map_err(to_py)?;
        mfsde_core::mollify(&self.0, &cfg).map(Self).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn b(&self, t: f64, y: f64, z: f64) -> f64 {
        self.0.b1(t, y, z)
    }

    fn phi(&self, t: f64, y: f64, z: f64) -> f64 {
        self.0.phi1(t, y, z)
    }

    fn __repr__(&self) -> String {
        format!("CoefficientPair({:?})", self.0.name())
    }
}

/// Terminal payoff `Φ`.
#[pyclass(frozen, skip_from_py_object, module = "mfsde")]
#[derive(Clone)]
struct Payoff(CorePayoff);

#[pymethods]
impl Payoff {
    #[staticmethod]
    #[pyo3(signature = (payoff_id, params=None))]
    fn builtin(payoff_id: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        CorePayoff::builtin(payoff_id, &self::params(params)?)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn __call__(&self, y: f64) -> f64 {
        self.0.eval(y)
    }
}

/// Simulated particle paths, time-major.
#[pyclass(frozen, module = "mfsde")]
struct PathEnsemble(CoreEnsemble);

#[pymethods]
impl PathEnsemble {
    #[getter]
    fn particles(&self) -> usize {
        self.0.particles()
    }

    #[getter]
    fn grid(&self) -> TimeGrid {
        TimeGrid(*self.0.grid())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    /// Hex SHA-256 of the ensemble contents.
    #[getter]
    fn fingerprint(&self) -> String {
        self.0.fingerprint().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Particle positions at step `k`.
    fn snapshot(&self, k: usize) -> PyResult<Vec<f64>> {
        if k > self.0.grid().steps() {
            return Err(PyValueError::new_err(format!("step {k} is beyond the grid")));
        }
        Ok(self.0.snapshot(k).to_vec())
    }

    fn terminal(&self) -> Vec<f64> {
        self.0.terminal().to_vec()
    }

    fn mean_curve(&self) -> Vec<f64> {
        self.0.mean_curve()
    }
}

/// First-variation particles `J^i_k`.
#[pyclass(frozen, module = "mfsde")]
struct Tangent(TangentEnsemble);

#[pymethods]
impl Tangent {
    fn snapshot(&self, k: usize) -> PyResult<Vec<f64>> {
        if k > self.0.grid().steps() {
            return Err(PyValueError::new_err(format!("step {k} is beyond the grid")));
        }
        Ok(self.0.snapshot(k).to_vec())
    }

    fn terminal(&self) -> Vec<f64> {
        self.0.terminal().to_vec()
    }
}

/// `D_{t_s} X^i_{t_t}` from prefix sums of the drift Jacobian.
#[pyclass(frozen, module = "mfsde")]
struct MalliavinFactor(CoreFactor);

#[pymethods]
impl MalliavinFactor {
    fn d(&self, s: usize, t: usize, i: usize) -> f64 {
        self.0.d(s, t, i)
    }

    fn log_d(&self, s: usize, t: usize, i: usize) -> f64 {
        self.0.log_d(s, t, i)
    }
}

#[pyclass(frozen, module = "mfsde")]
struct DeltaEstimate(CoreDelta);

#[pymethods]
impl DeltaEstimate {
    #[getter]
    fn value(&self) -> f64 {
        self.0.value
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.0.std_error
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.as_str()
    }

    #[getter]
    fn config_digest(&self) -> String {
        self.0.config_digest.clone()
    }

    /// `|a − b|` over the combined standard error.
    fn z_score(&self, other: &DeltaEstimate) -> f64 {
        self.0.z_score(&other.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "DeltaEstimate(method={:?}, value={}, std_error={})",
            self.0.method.as_str(),
            self.0.value,
            self.0.std_error
        )
    }
}

fn schedule(id: &str) -> PyResult<WeightSchedule> {
    WeightSchedule::from_id(id).map_err(to_py)
}

#[pyfunction]
fn simulate(pair: &CoefficientPair, grid: &TimeGrid, n: usize, x0: f64, seed: u64) -> PyResult<PathEnsemble> {
    mfsde_core::simulate(&pair.0, &grid.0, n, &[x0], seed)
        .map(PathEnsemble)
        .map_err(to_py)
}

#[pyfunction]
fn propagate_tangent(ens: &PathEnsemble, pair: &CoefficientPair) -> PyResult<Tangent> {
    mfsde_core::propagate_tangent(&ens.0, &pair.0)
        .map(Tangent)
        .map_err(to_py)
}

#[pyfunction]
fn malliavin_factor(ens: &PathEnsemble, pair: &CoefficientPair) -> PyResult<MalliavinFactor> {
    mfsde_core::malliavin_factor(&ens.0, &pair.0)
        .map(MalliavinFactor)
        .map_err(to_py)
}

/// Returns `(residual, worst_particle)` at terminal time for split step `s`.
#[pyfunction]
fn check_derivative_relation(
    ens: &PathEnsemble,
    tang: &Tangent,
    mf: &MalliavinFactor,
    pair: &CoefficientPair,
    s: usize,
) -> PyResult<(f64, usize)> {
    let r = mfsde_core::check_derivative_relation(&ens.0, &tang.0, &mf.0, &pair.0, s).map_err(to_py)?;
    Ok((r.residual, r.worst_particle))
}

#[pyfunction]
#[pyo3(signature = (ens, tang, pair, payoff, schedule="uniform"))]
fn delta_bel(
    ens: &PathEnsemble,
    tang: &Tangent,
    pair: &CoefficientPair,
    payoff: &Payoff,
    schedule: &str,
) -> PyResult<DeltaEstimate> {
    let s = self::schedule(schedule)?;
    bel::delta_bel(&ens.0, &tang.0, &pair.0, &payoff.0, &s)
        .map(DeltaEstimate)
        .map_err(to_py)
}

#[pyfunction]
fn delta_pathwise(ens: &PathEnsemble, tang: &Tangent, payoff: &Payoff) -> PyResult<DeltaEstimate> {
    bel::delta_pathwise(&ens.0, &tang.0, &payoff.0)
        .map(DeltaEstimate)
        .map_err(to_py)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn delta_fd(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    x0: f64,
    bump: f64,
    seed: u64,
    payoff: &Payoff,
) -> PyResult<DeltaEstimate> {
    bel::delta_fd(&pair.0, &grid.0, n, x0, bump, seed, &payoff.0)
        .map(DeltaEstimate)
        .map_err(to_py)
}

/// Exact 1-D Wasserstein-1 between equal-size samples.
#[pyfunction]
fn wasserstein1(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let mu = mfsde_core::EmpiricalMeasure::from_scalars(a).map_err(to_py)?;
    let nu = mfsde_core::EmpiricalMeasure::from_scalars(b).map_err(to_py)?;
    mfsde_core::wasserstein1(&mu, &nu).map_err(to_py)
}

/// Returns `(terminal_ensemble, history, converged)`.
#[pyfunction]
#[pyo3(signature = (pair, grid, n, x0, seed, max_iter=10, tol=1e-3))]
fn picard_iterate(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    x0: f64,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> PyResult<(PathEnsemble, Vec<f64>, bool)> {
    let out = mfsde_core::picard_iterate(&pair.0, &grid.0, n, &[x0], seed, max_iter, tol).map_err(to_py)?;
    Ok((PathEnsemble(out.ensemble), out.history, out.converged))
}

/// Returns `(constant, entries)` with entries `(t, s, x, y, second_moment, base, ratio)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn hoelder_probe(
    pair: &CoefficientPair,
    grid: &TimeGrid,
    n: usize,
    points: Vec<f64>,
    seed: u64,
) -> PyResult<(f64, Vec<(usize, usize, usize, usize, f64, f64, f64)>)> {
    let r = mfsde_core::hoelder_probe(&pair.0, &grid.0, n, &points, seed).map_err(to_py)?;
    let entries = r
        .entries
        .iter()
        .map(|e| {
            (
                e.t_index,
                e.s_index,
                e.x_index,
                e.y_index,
                e.second_moment,
                e.base,
                e.ratio,
            )
        })
        .collect();
    Ok((r.constant, entries))
}

/// Sup-in-time W1 between the law flows of two ensembles on the same grid.
#[pyfunction]
fn sup_w1(a: &PathEnsemble, b: &PathEnsemble) -> PyResult<f64> {
    LawFlow::from_ensemble(&a.0)
        .sup_w1(&LawFlow::from_ensemble(&b.0))
        .map_err(to_py)
}

/// Mean and variance curves of the closed-form OU solution.
#[pyfunction]
fn ou_oracle(a: f64, c: f64, x0: f64, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>) {
    let sol = oracles::ou_oracle(a, c, x0, &grid.0);
    (sol.mean, sol.variance)
}

/// Mean and variance curves of the Gaussian reduction of the CDF drift.
#[pyfunction]
fn cdf_drift_oracle(u: f64, x0: f64, grid: &TimeGrid) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sol = oracles::cdf_drift_oracle(u, x0, &grid.0).map_err(to_py)?;
    Ok((sol.mean, sol.variance))
}

fn diffusion(sigma: &str) -> PyResult<DiffusionSpec> {
    match sigma {
        "unit" => Ok(DiffusionSpec::unit()),
        "sqrt_one_plus_square" => Ok(DiffusionSpec::sqrt_one_plus_square()),
        other => Err(PyValueError::new_err(format!(
            "unknown sigma `{other}`; expected unit or sqrt_one_plus_square"
        ))),
    }
}

/// Returns `(derivative_error, inverse_error, monotone)` on random probes.
#[pyfunction]
#[pyo3(signature = (sigma, probes=1000, seed=0, anchor=0.0))]
fn lamperti_check(sigma: &str, probes: usize, seed: u64, anchor: f64) -> PyResult<(f64, f64, bool)> {
    let spec = diffusion(sigma)?;
    let map = build_map(&spec, anchor, 1e-12).map_err(to_py)?;
    let c = check_map(&map, probes, seed).map_err(to_py)?;
    Ok((c.derivative_error, c.inverse_error, c.monotone))
}

/// Terminal W1 between the transformed-and-mapped-back run and direct Euler.
#[pyfunction]
#[pyo3(signature = (pair, sigma, grid, n, x0, seed, anchor=0.0))]
fn lamperti_round_trip(
    pair: &CoefficientPair,
    sigma: &str,
    grid: &TimeGrid,
    n: usize,
    x0: f64,
    seed: u64,
    anchor: f64,
) -> PyResult<f64> {
    let spec = diffusion(sigma)?;
    let map = build_map(&spec, anchor, 1e-12).map_err(to_py)?;
    core_round_trip(&pair.0, &spec, &map, &grid.0, n, x0, seed)
        .map(|r| r.w1)
        .map_err(to_py)
}

#[pymodule]
fn mfsde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TimeGrid>()?;
    m.add_class::<CoefficientPair>()?;
    m.add_class::<Payoff>()?;
    m.add_class::<PathEnsemble>()?;
    m.add_class::<Tangent>()?;
    m.add_class::<MalliavinFactor>()?;
    m.add_class::<DeltaEstimate>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_tangent, m)?)?;
    m.add_function(wrap_pyfunction!(malliavin_factor, m)?)?;
    m.add_function(wrap_pyfunction!(check_derivative_relation, m)?)?;
    m.add_function(wrap_pyfunction!(delta_bel, m)?)?;
    m.add_function(wrap_pyfunction!(delta_pathwise, m)?)?;
    m.add_function(wrap_pyfunction!(delta_fd, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add_function(wrap_pyfunction!(picard_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(hoelder_probe, m)?)?;
    m.add_function(wrap_pyfunction!(sup_w1, m)?)?;
    m.add_function(wrap_pyfunction!(ou_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(cdf_drift_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(lamperti_check, m)?)?;
    m.add_function(wrap_pyfunction!(lamperti_round_trip, m)?)?;
    Ok(())
}
