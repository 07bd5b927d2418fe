//! Interacting-particle simulation and sensitivity analysis for mean-field
//! (McKean–Vlasov) SDEs of the form
//!
//! ```text
//! dX_t = b(t, X_t, ∫ φ(t, X_t, z) P_{X_t}(dz)) dt + dB_t,   X_0 = x,
//! ```
//!
//! where the law enters the drift only through the integral functional of `φ`.
//!
//! The crate is organised bottom-up:
//!
//! * [`coefficients`] – drift/functional pairs, built-in models, Gaussian mollification
//!   and randomized regularity probes.
//! * [`measure`] – empirical measures: CDF, φ-integration, moments, exact 1-D
//!   Wasserstein-1.
//! * [`engine`] – Euler–Maruyama particle systems (interacting and frozen-law),
//!   Picard iteration on law flows and Hölder diagnostics.
//! * [`tangent`] – first-variation particles, the law-derivative term and the
//!   smooth-case Malliavin derivative.
//! * [`bel`] – Bismut–Elworthy–Li, pathwise and finite-difference delta estimators.
//! * [`oracles`] – engine-independent reference solutions (closed forms and RK4).
//! * [`lamperti`] – the unit-diffusion change of variables for state-dependent σ.
//!
//! Reductions over particles are evaluated in a fixed order, so results do not
//! depend on the size of the rayon pool the calls run in.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bel;
pub mod coefficients;
pub mod engine;
mod error;
pub mod lamperti;
pub mod measure;
pub mod oracles;
pub mod quadrature;
pub mod tangent;

pub use error::{Error, Result};

pub use bel::{delta_bel, delta_fd, delta_pathwise, validate_payoff, DeltaEstimate, Method, Payoff, WeightSchedule};
pub use coefficients::{make_builtin, mollify, probe_regularity, CoefficientPair, MollifierConfig, ParamValue, Params};
pub use engine::{hoelder_probe, picard_iterate, simulate, LawFlow, PathEnsemble, TimeGrid};
pub use measure::{wasserstein1, EmpiricalMeasure};
pub use tangent::{
    check_derivative_relation, dx_rho, malliavin_factor, propagate_tangent, MalliavinFactor, TangentEnsemble,
};
