//! One pipeline per subcommand. Each returns a [`Table`] and, in check mode,
//! an optional description of an oracle mismatch.

use mfsde_core::engine::simulate_terminal;
use mfsde_core::lamperti::{build_map, check_map, round_trip, DiffusionSpec};
use mfsde_core::measure::wasserstein1_to_gaussian;
use mfsde_core::oracles::{caratheodory_solve, cdf_drift_oracle, ou_oracle, OracleSolution};
use mfsde_core::{
    delta_bel, delta_fd, delta_pathwise, hoelder_probe, make_builtin, mollify, picard_iterate, propagate_tangent,
    simulate, CoefficientPair, DeltaEstimate, EmpiricalMeasure, Error, Method, MollifierConfig, ParamValue, Params,
    Payoff, TimeGrid, WeightSchedule,
};

use crate::config::{Axis, ExperimentConfig, LampertiSection, Metric, SigmaId};
use crate::output::{Cell, Table};

pub const DEFAULT_FD_BUMP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Simulate,
    Delta,
    Picard,
    Ode,
    Hoelder,
    LampertiCheck,
    Converge,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::Simulate,
        Subcommand::Delta,
        Subcommand::Picard,
        Subcommand::Ode,
        Subcommand::Hoelder,
        Subcommand::LampertiCheck,
        Subcommand::Converge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Delta => "delta",
            Subcommand::Picard => "picard",
            Subcommand::Ode => "ode",
            Subcommand::Hoelder => "hoelder",
            Subcommand::LampertiCheck => "lamperti-check",
            Subcommand::Converge => "converge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Io(_) => "io",
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Io(m) | RunError::Config(m) | RunError::Numerical(m) => m,
        }
    }
}

// Errors that mean "this configuration asks for something the model cannot do"
// are configuration errors; the rest arise while computing.
impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::UnknownModel(_)
            | Error::InvalidParam { .. }
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::NotScalar(_)
            | Error::NotSmooth { .. }
            | Error::Inadmissible(_)
            | Error::MissingDerivative(_)
            | Error::BadSchedule { .. } => RunError::Config(msg),
            Error::NonFiniteState { .. }
            | Error::NonFinite { .. }
            | Error::EnsembleMismatch(_)
            | Error::UnequalSize(..)
            | Error::NonPositiveSigma(_)
            | Error::Bracket(_) => RunError::Numerical(msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    /// Set in check mode when a result is outside its oracle tolerance.
    pub mismatch: Option<String>,
}

impl Report {
    fn new(table: Table, mismatch: Option<String>) -> Self {
        Self { table, mismatch }
    }
}

pub fn execute(cmd: Subcommand, cfg: &ExperimentConfig, check: bool) -> Result<Report, RunError> {
    let report = match cmd {
        Subcommand::Simulate => run_simulate(cfg)?,
        Subcommand::Delta => run_delta(cfg)?,
        Subcommand::Picard => run_picard(cfg)?,
        Subcommand::Ode => run_ode(cfg)?,
        Subcommand::Hoelder => run_hoelder(cfg)?,
        Subcommand::LampertiCheck => run_lamperti(cfg)?,
        Subcommand::Converge => run_converge(cfg)?,
    };
    Ok(if check { report } else { Report::new(report.table, None) })
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, RunError> {
    Ok(TimeGrid::new(cfg.grid.horizon, cfg.grid.steps)?)
}

/// The configured built-in, mollified when a `[mollify]` section is present.
pub fn build_pair(cfg: &ExperimentConfig) -> Result<CoefficientPair, RunError> {
    let pair = make_builtin(&cfg.model.id, &cfg.model.params)?;
    match &cfg.mollify {
        None => Ok(pair),
        Some(m) => Ok(mollify(&pair, &MollifierConfig::new(m.bandwidth, m.quadrature_order)?)?),
    }
}

fn number(params: &Params, key: &str) -> f64 {
    match params.get(key) {
        Some(ParamValue::Number(v)) => *v,
        _ => 0.0,
    }
}

/// Reference law when one is known: Gaussian for `mean_field_ou` and `cdf_drift`.
/// Mollified models have none.
pub fn oracle(cfg: &ExperimentConfig, grid: &TimeGrid) -> Result<Option<OracleSolution>, RunError> {
    if cfg.mollify.is_some() {
        return Ok(None);
    }
    let p = &cfg.model.params;
    Ok(match cfg.model.id.as_str() {
        "mean_field_ou" => Some(ou_oracle(number(p, "a"), number(p, "c"), cfg.x0, grid)),
        "cdf_drift" => Some(cdf_drift_oracle(number(p, "u"), cfg.x0, grid)?),
        _ => None,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    mfsde_core::bel::mean_and_std_error(xs)
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let grid = grid(cfg)?;
    let pair = build_pair(cfg)?;
    let ens = simulate(&pair, &grid, cfg.particles, &[cfg.x0], cfg.seed)?;
    let oracle = oracle(cfg, &grid)?;
    let mut table = match oracle {
        Some(_) => Table::new(&["time", "mean", "variance", "w1_to_oracle"]),
        None => Table::new(&["time", "mean", "variance"]),
    };
    for k in 0..=grid.steps() {
        let m = ens.measure(k);
        let mut row: Vec<Cell> = vec![grid.time(k).into(), m.mean()[0].into(), m.variance()?.into()];
        if let Some(o) = &oracle {
            row.push(wasserstein1_to_gaussian(&m, o.mean[k], o.variance[k].max(0.0).sqrt())?.into());
        }
        table.push(row);
    }
    let mismatch = oracle.and_then(|o| {
        let (mean, se) = mean_and_se(ens.terminal());
        let tol = 3.0 * se + 2.0 * grid.dt();
        let gap = (mean - o.terminal_mean()).abs();
        (gap > tol).then(|| {
            format!(
                "terminal mean {mean} differs from oracle {} by {gap} > {tol}",
                o.terminal_mean()
            )
        })
    });
    Ok(Report::new(table, mismatch))
}

fn payoff(cfg: &ExperimentConfig) -> Result<Payoff, RunError> {
    let section = cfg
        .payoff
        .as_ref()
        .ok_or_else(|| RunError::Config("`delta` needs a [payoff] section".into()))?;
    let payoff = Payoff::builtin(&section.id, &section.params)?;
    Ok(match section.epsilon {
        Some(eps) => payoff.with_epsilon(eps)?,
        None => payoff,
    })
}

fn run_delta(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    if cfg.estimators.is_empty() {
        return Err(RunError::Config("`delta` needs a non-empty `estimators` list".into()));
    }
    let methods: Vec<Method> = cfg
        .estimators
        .iter()
        .map(|e| {
            e.parse::<Method>()
                .map_err(|_| RunError::Config(format!("unknown estimator `{e}`")))
        })
        .collect::<Result<_, _>>()?;
    let grid = grid(cfg)?;
    let pair = build_pair(cfg)?;
    let payoff = payoff(cfg)?;
    let schedule = WeightSchedule::from_id(&cfg.weight_schedule)?;

    let needs_tangent = methods.iter().any(|m| matches!(m, Method::Bel | Method::Pathwise));
    let linked = if needs_tangent {
        let ens = simulate(&pair, &grid, cfg.particles, &[cfg.x0], cfg.seed)?;
        let tang = propagate_tangent(&ens, &pair)?;
        Some((ens, tang))
    } else {
        None
    };

    let mut estimates: Vec<DeltaEstimate> = Vec::with_capacity(methods.len());
    for m in &methods {
        let est = match (m, &linked) {
            (Method::Bel, Some((ens, tang))) => delta_bel(ens, tang, &pair, &payoff, &schedule)?,
            (Method::Pathwise, Some((ens, tang))) => delta_pathwise(ens, tang, &payoff)?,
            (Method::CentralFd, _) => delta_fd(
                &pair,
                &grid,
                cfg.particles,
                cfg.x0,
                cfg.fd_bump.unwrap_or(DEFAULT_FD_BUMP),
                cfg.seed,
                &payoff,
            )?,
            _ => unreachable!("tangent is built whenever bel or pathwise is requested"),
        };
        estimates.push(est);
    }

    let mut table = Table::new(&["method", "value", "std_error", "n_samples"]);
    for e in &estimates {
        table.push(vec![
            e.method.as_str().into(),
            e.value.into(),
            e.std_error.into(),
            e.n.into(),
        ]);
    }
    let mut mismatch = None;
    'outer: for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            let bound = 3.0 * a.combined_std_error(b);
            if a.z_score(b) > 3.0 {
                mismatch = Some(format!(
                    "{} = {} and {} = {} differ by more than {bound}",
                    a.method.as_str(),
                    a.value,
                    b.method.as_str(),
                    b.value
                ));
                break 'outer;
            }
        }
    }
    Ok(Report::new(table, mismatch))
}

fn run_picard(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let grid = grid(cfg)?;
    let pair = build_pair(cfg)?;
    let p = cfg.picard.unwrap_or_default();
    let out = picard_iterate(&pair, &grid, cfg.particles, &[cfg.x0], cfg.seed, p.max_iter, p.tol)?;
    let mut table = Table::new(&["iteration", "sup_w1"]);
    for (i, w) in out.history.iter().enumerate() {
        table.push(vec![(i + 1).into(), (*w).into()]);
    }
    let head = &out.history[..out.history.len().min(3)];
    let mismatch = head
        .windows(2)
        .any(|w| w[1] >= w[0])
        .then(|| format!("sup-W1 history is not strictly decreasing over its first iterations: {head:?}"));
    Ok(Report::new(table, mismatch))
}

// b must ignore the state, and it may depend on the law only through E[X].
fn mean_only(pair: &CoefficientPair, horizon: f64) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    let mut z_dependent = false;
    let mut phi_identity = true;
    for t in [0.0, 0.5 * horizon, horizon] {
        for z in [-1.5, 0.0, 0.7, 2.0] {
            let base = pair.b1(t, 0.0, z);
            if [-2.0, -0.5, 1.0, 3.0].iter().any(|&y| !close(pair.b1(t, y, z), base)) {
                return false;
            }
            z_dependent |= !close(base, pair.b1(t, 0.0, z + 0.37));
            phi_identity &= [-2.0, 0.0, 1.0].iter().all(|&y| close(pair.phi1(t, y, z), z));
        }
    }
    !z_dependent || phi_identity
}

fn run_ode(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let grid = grid(cfg)?;
    let pair = build_pair(cfg)?;
    if !mean_only(&pair, grid.horizon()) {
        return Err(RunError::Config(format!(
            "`ode` needs a drift b(t, z) with φ = z; model `{}` depends on the state",
            cfg.model.id
        )));
    }
    let drift = pair.clone();
    let out = caratheodory_solve(move |t, m| drift.b1(t, 0.0, m), cfg.x0, &grid, cfg.particles, cfg.seed)?;
    let mut table = Table::new(&["time", "mc_mean", "rk4", "gap"]);
    for k in 0..=grid.steps() {
        let (mc, rk) = (out.mc_curve[k], out.rk4_curve[k]);
        table.push(vec![grid.time(k).into(), mc.into(), rk.into(), (mc - rk).abs().into()]);
    }
    let tol = 3.0 * (grid.horizon() / cfg.particles as f64).sqrt() + 2.0 * grid.dt();
    let mismatch = (out.max_abs_gap > tol).then(|| format!("max gap {} exceeds {tol}", out.max_abs_gap));
    Ok(Report::new(table, mismatch))
}

fn run_hoelder(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let grid = grid(cfg)?;
    let pair = build_pair(cfg)?;
    let points = match &cfg.hoelder {
        Some(h) => h.points.clone(),
        None => vec![cfg.x0 - 1.0, cfg.x0, cfg.x0 + 1.0],
    };
    let report = hoelder_probe(&pair, &grid, cfg.particles, &points, cfg.seed)?;
    let mut table = Table::new(&["pair_id", "lhs", "rhs_bound", "ratio"]);
    for e in &report.entries {
        let id = format!("t{}_s{}_x{}_y{}", e.t_index, e.s_index, e.x_index, e.y_index);
        table.push(vec![
            id.into(),
            e.second_moment.into(),
            (report.constant * e.base).into(),
            e.ratio.into(),
        ]);
    }
    let mismatch = (!report.constant.is_finite()).then(|| "fitted Hölder constant is not finite".to_string());
    Ok(Report::new(table, mismatch))
}

fn spec_for(section: &LampertiSection) -> DiffusionSpec {
    match section.sigma {
        SigmaId::Unit => DiffusionSpec::unit(),
        SigmaId::SqrtOnePlusSquare => DiffusionSpec::sqrt_one_plus_square(),
    }
}

/// Quadrature tolerance for tabulating the transform.
const LAMPERTI_QUAD_TOL: f64 = 1e-12;
/// Map accuracy required in check mode.
const LAMPERTI_MAP_TOL: f64 = 1e-8;

fn run_lamperti(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let section = cfg.lamperti.unwrap_or_default();
    let spec = spec_for(&section);
    let map = build_map(&spec, section.anchor, LAMPERTI_QUAD_TOL)?;
    let check = check_map(&map, section.probes, cfg.seed)?;
    let pair = build_pair(cfg)?;
    let coarse_grid = grid(cfg)?;
    let fine_grid = TimeGrid::new(cfg.grid.horizon, 2 * cfg.grid.steps)?;
    let coarse = round_trip(&pair, &spec, &map, &coarse_grid, cfg.particles, cfg.x0, cfg.seed)?.w1;
    let fine = round_trip(&pair, &spec, &map, &fine_grid, cfg.particles, cfg.x0, cfg.seed)?.w1;

    let mut table = Table::new(&["metric", "value"]);
    let rows: [(&str, f64); 6] = [
        ("derivative_error", check.derivative_error),
        ("inverse_error", check.inverse_error),
        ("monotone", if check.monotone { 1.0 } else { 0.0 }),
        ("inverse_lipschitz", check.inverse_lipschitz),
        ("w1_coarse", coarse),
        ("w1_fine", fine),
    ];
    for (name, v) in rows {
        table.push(vec![name.into(), v.into()]);
    }
    let mismatch = if check.derivative_error > LAMPERTI_MAP_TOL {
        Some(format!(
            "max |Λ′σ − 1| = {} exceeds {LAMPERTI_MAP_TOL}",
            check.derivative_error
        ))
    } else if check.inverse_error > LAMPERTI_MAP_TOL {
        Some(format!(
            "inverse error {} exceeds {LAMPERTI_MAP_TOL}",
            check.inverse_error
        ))
    } else if !check.monotone {
        Some("transform is not monotone on the probes".into())
    } else if fine >= coarse && coarse > LAMPERTI_MAP_TOL {
        Some(format!(
            "round-trip W1 did not improve with more steps: {coarse} -> {fine}"
        ))
    } else {
        None
    };
    Ok(Report::new(table, mismatch))
}

fn run_converge(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let section = cfg
        .converge
        .as_ref()
        .ok_or_else(|| RunError::Config("`converge` needs a [converge] section".into()))?;
    let pair = build_pair(cfg)?;
    let mut table = Table::new(&[section.axis.as_str(), "metric", "value", "std_error"]);
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(section.values.len());
    for &v in &section.values {
        let (steps, n) = match section.axis {
            Axis::Steps => (v, cfg.particles),
            Axis::Particles => (cfg.grid.steps, v),
        };
        let grid = TimeGrid::new(cfg.grid.horizon, steps)?;
        let oracle = oracle(cfg, &grid)?.ok_or_else(|| {
            RunError::Config(format!(
                "`converge` needs a model with an oracle, got `{}`",
                cfg.model.id
            ))
        })?;
        let terminal = simulate_terminal(&pair, &grid, n, &[cfg.x0], cfg.seed)?;
        let (value, se) = match section.metric {
            Metric::AbsBias => {
                let (mean, se) = mean_and_se(&terminal);
                ((mean - oracle.terminal_mean()).abs(), se)
            }
            Metric::W1ToOracle => {
                let m = EmpiricalMeasure::from_scalars(terminal)?;
                let w = wasserstein1_to_gaussian(&m, oracle.terminal_mean(), oracle.terminal_variance().sqrt())?;
                (w, f64::NAN)
            }
        };
        table.push(vec![v.into(), section.metric.as_str().into(), value.into(), se.into()]);
        points.push((value, se));
    }
    let mismatch = points.windows(2).find_map(|w| {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        let slack = if sa.is_finite() && sb.is_finite() {
            2.0 * sa.hypot(sb)
        } else {
            0.0
        };
        (b > a + slack).then(|| {
            format!(
                "{} increased from {a} to {b} beyond error bars",
                section.metric.as_str()
            )
        })
    });
    Ok(Report::new(table, mismatch))
}
