//! Drift/functional coefficient pairs `(b, φ)`.
//!
//! A [`CoefficientPair`] holds the drift `b(t, y, z)` and the law functional
//! `φ(t, y, z)` of a mean-field SDE, optional Jacobians in the `y` and `z`
//! arguments, a linear-growth constant and declared regularity flags. Pairs are
//! immutable and cheap to clone (all functions are reference counted).

mod builtins;
mod mollify;
mod probe;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use builtins::{make_builtin, BUILTIN_MODELS};
pub use mollify::{mollify, Kernel, MollifierConfig};
pub use probe::{probe_regularity, ConditionCheck, RegularityReport, Witness};

/// Vector field `(t, y, z, out)`. For a Jacobian, `out` is a row-major `d × d` matrix.
pub type Field = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A model parameter value as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

pub type Params = BTreeMap<String, ParamValue>;

/// Declared regularity. Downstream modules trust these; see [`probe_regularity`]
/// for a randomized (advisory) check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegularityFlags {
    pub lipschitz_z_b: bool,
    pub lipschitz_z_phi: bool,
    pub lipschitz_y_phi: bool,
    pub phi_y_independent: bool,
    pub smooth: bool,
}

#[derive(Clone)]
pub struct CoefficientPair {
    name: String,
    dim: usize,
    b: Field,
    phi: Field,
    db_dy: Option<Field>,
    db_dz: Option<Field>,
    dphi_dy: Option<Field>,
    dphi_dz: Option<Field>,
    growth_constant: Option<f64>,
    flags: RegularityFlags,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for CoefficientPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientPair")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("growth_constant", &self.growth_constant)
            .field("flags", &self.flags)
            .finish_non_exhaustive()
    }
}

fn scalar_field<F>(f: F) -> Field
where
    F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(move |t, y, z, out| out[0] = f(t, y[0], z[0]))
}

impl CoefficientPair {
    /// A pair on `ℝ^dim` with no Jacobians, no growth constant and all flags cleared.
    pub fn new(name: impl Into<String>, dim: usize, b: Field, phi: Field) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            b,
            phi,
            db_dy: None,
            db_dz: None,
            dphi_dy: None,
            dphi_dz: None,
            growth_constant: None,
            flags: RegularityFlags::default(),
            breakpoints: Vec::new(),
        })
    }

    /// One-dimensional pair from plain scalar closures.
    pub fn scalar<B, P>(name: impl Into<String>, b: B, phi: P) -> Self
    where
        B: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(name, 1, scalar_field(b), scalar_field(phi)).expect("dimension 1 is valid")
    }

    /// Attaches Jacobians; a pair with all four present is marked smooth.
    pub fn with_jacobians(
        mut self,
        db_dy: Option<Field>,
        db_dz: Option<Field>,
        dphi_dy: Option<Field>,
        dphi_dz: Option<Field>,
    ) -> Self {
        self.db_dy = db_dy;
        self.db_dz = db_dz;
        self.dphi_dy = dphi_dy;
        self.dphi_dz = dphi_dz;
        self.flags.smooth = self.has_all_jacobians();
        self
    }

    /// Scalar version of [`with_jacobians`](Self::with_jacobians) with all four derivatives.
    pub fn with_scalar_jacobians<A, B, C, D>(self, db_dy: A, db_dz: B, dphi_dy: C, dphi_dz: D) -> Self
    where
        A: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        assert_eq!(self.dim, 1, "scalar Jacobians need a one-dimensional pair");
        self.with_jacobians(
            Some(scalar_field(db_dy)),
            Some(scalar_field(db_dz)),
            Some(scalar_field(dphi_dy)),
            Some(scalar_field(dphi_dz)),
        )
    }

    pub fn with_growth_constant(mut self, c: f64) -> Self {
        self.growth_constant = Some(c.max(0.0));
        self
    }

    pub fn without_growth_constant(mut self) -> Self {
        self.growth_constant = None;
        self
    }

    /// Replaces the declared flags. Declaring `smooth` requires all four Jacobians.
    pub fn with_flags(mut self, flags: RegularityFlags) -> Result<Self> {
        if flags.smooth && !self.has_all_jacobians() {
            return Err(Error::NotSmooth {
                pair: self.name.clone(),
                missing: self.first_missing_jacobian().unwrap_or("jacobian"),
            });
        }
        self.flags = flags;
        Ok(self)
    }

    /// Declares points where `b` or `φ` may fail to be smooth in either state argument.
    /// Mollification aligns its quadrature panels with them.
    pub fn with_breakpoints(mut self, mut points: Vec<f64>) -> Self {
        points.retain(|p| p.is_finite());
        points.sort_by(f64::total_cmp);
        points.dedup();
        self.breakpoints = points;
        self
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth_constant(&self) -> Option<f64> {
        self.growth_constant
    }

    pub fn flags(&self) -> RegularityFlags {
        self.flags
    }

    pub fn is_smooth(&self) -> bool {
        self.flags.smooth
    }

    pub fn b(&self) -> &Field {
        &self.b
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn db_dy(&self) -> Option<&Field> {
        self.db_dy.as_ref()
    }

    pub fn db_dz(&self) -> Option<&Field> {
        self.db_dz.as_ref()
    }

    pub fn dphi_dy(&self) -> Option<&Field> {
        self.dphi_dy.as_ref()
    }

    pub fn dphi_dz(&self) -> Option<&Field> {
        self.dphi_dz.as_ref()
    }

    fn has_all_jacobians(&self) -> bool {
        self.first_missing_jacobian().is_none()
    }

    fn first_missing_jacobian(&self) -> Option<&'static str> {
        [
            (self.db_dy.is_none(), "db_dy"),
            (self.db_dz.is_none(), "db_dz"),
            (self.dphi_dy.is_none(), "dphi_dy"),
            (self.dphi_dz.is_none(), "dphi_dz"),
        ]
        .into_iter()
        .find_map(|(missing, name)| missing.then_some(name))
    }

    /// Fails unless the pair is smooth and one-dimensional.
    pub(crate) fn require_smooth_scalar(&self) -> Result<ScalarJacobians<'_>> {
        if self.dim != 1 {
            return Err(Error::NotScalar(self.dim));
        }
        if !self.flags.smooth {
            return Err(Error::NotSmooth {
                pair: self.name.clone(),
                missing: self.first_missing_jacobian().unwrap_or("smooth flag"),
            });
        }
        match (&self.db_dy, &self.db_dz, &self.dphi_dy, &self.dphi_dz) {
            (Some(a), Some(b), Some(c), Some(d)) => Ok(ScalarJacobians {
                db_dy: a,
                db_dz: b,
                dphi_dy: c,
                dphi_dz: d,
            }),
            _ => unreachable!("smooth flag implies all Jacobians"),
        }
    }

    /// `b(t, y, z)` for a one-dimensional pair.
    #[inline]
    pub fn b1(&self, t: f64, y: f64, z: f64) -> f64 {
        eval1(&self.b, t, y, z)
    }

    /// `φ(t, y, z)` for a one-dimensional pair.
    #[inline]
    pub fn phi1(&self, t: f64, y: f64, z: f64) -> f64 {
        eval1(&self.phi, t, y, z)
    }

    pub fn eval_b(&self, t: f64, y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.b)(t, y, z, &mut out);
        out
    }

    pub fn eval_phi(&self, t: f64, y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.phi)(t, y, z, &mut out);
        out
    }
}

#[inline]
pub(crate) fn eval1(field: &Field, t: f64, y: f64, z: f64) -> f64 {
    let mut out = [0.0];
    field(t, &[y], &[z], &mut out);
    out[0]
}

/// Borrowed Jacobians of a smooth one-dimensional pair.
pub(crate) struct ScalarJacobians<'a> {
    pub db_dy: &'a Field,
    pub db_dz: &'a Field,
    pub dphi_dy: &'a Field,
    pub dphi_dz: &'a Field,
}
