use super::{CoefficientPair, ParamValue, Params, RegularityFlags};
use crate::{Error, Result};

/// Identifiers accepted by [`make_builtin`].
pub const BUILTIN_MODELS: [&str; 6] = [
    "zero_drift",
    "expectation_drift",
    "mean_field_ou",
    "cdf_drift",
    "smoothed_cdf_drift",
    "custom_table",
];

struct ParamReader<'a> {
    model: &'a str,
    params: &'a Params,
}

impl ParamReader<'_> {
    fn err(&self, name: &str, reason: impl Into<String>) -> Error {
        Error::InvalidParam {
            model: self.model.to_string(),
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    fn number(&self, name: &str) -> Result<f64> {
        match self.params.get(name) {
            Some(ParamValue::Number(v)) if v.is_finite() => Ok(*v),
            Some(ParamValue::Number(_)) => Err(self.err(name, "must be finite")),
            Some(_) => Err(self.err(name, "must be a number")),
            None => Err(self.err(name, "is required")),
        }
    }

    fn number_or(&self, name: &str, default: f64) -> Result<f64> {
        if self.params.contains_key(name) {
            self.number(name)
        } else {
            Ok(default)
        }
    }

    fn list(&self, name: &str) -> Result<Vec<f64>> {
        match self.params.get(name) {
            Some(ParamValue::List(v)) if v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            Some(ParamValue::List(_)) => Err(self.err(name, "must contain finite numbers")),
            Some(_) => Err(self.err(name, "must be a list of numbers")),
            None => Err(self.err(name, "is required")),
        }
    }

    fn text_or<'b>(&'b self, name: &str, default: &'b str) -> Result<&'b str> {
        match self.params.get(name) {
            Some(ParamValue::Text(s)) => Ok(s.as_str()),
            Some(_) => Err(self.err(name, "must be a string")),
            None => Ok(default),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(self.err(k, "is not recognised")),
            None => Ok(()),
        }
    }
}

fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn logistic_density(s: f64) -> f64 {
    let p = logistic(s);
    p * (1.0 - p)
}

/// Builds one of the registered models.
///
/// | id | b(t, y, z) | φ(t, y, z) | parameters |
/// |----|------------|------------|------------|
/// | `zero_drift` | 0 | 0 | – |
/// | `expectation_drift` | `rate·z` or `rate·cos z` | z | `rate`, `shape` = `linear`/`cosine` |
/// | `mean_field_ou` | a·y + c·z | z | `a`, `c` |
/// | `cdf_drift` | z | 1{z ≤ u} | `u` |
/// | `smoothed_cdf_drift` | z | κ((u − z)/w), κ logistic | `u`, `width` > 0 |
/// | `custom_table` | interp(y) + coupling·z | z | `knots`, `values`, `coupling` |
///
/// `custom_table` interpolates linearly between strictly increasing knots and is
/// constant outside them.
pub fn make_builtin(model_id: &str, params: &Params) -> Result<CoefficientPair> {
    let r = ParamReader {
        model: model_id,
        params,
    };
    let lipschitz = RegularityFlags {
        lipschitz_z_b: true,
        lipschitz_z_phi: true,
        lipschitz_y_phi: true,
        phi_y_independent: true,
        smooth: true,
    };
    match model_id {
        "zero_drift" => {
            r.reject_unknown(&[])?;
            CoefficientPair::scalar(model_id, |_, _, _| 0.0, |_, _, _| 0.0)
                .with_scalar_jacobians(|_, _, _| 0.0, |_, _, _| 0.0, |_, _, _| 0.0, |_, _, _| 0.0)
                .with_growth_constant(0.0)
                .with_flags(lipschitz)
        }
        "expectation_drift" => {
            r.reject_unknown(&["rate", "shape"])?;
            let rate = r.number_or("rate", -1.0)?;
            let pair = match r.text_or("shape", "linear")? {
                "linear" => CoefficientPair::scalar(model_id, move |_, _, z| rate * z, |_, _, z| z)
                    .with_scalar_jacobians(|_, _, _| 0.0, move |_, _, _| rate, |_, _, _| 0.0, |_, _, _| 1.0),
                "cosine" => CoefficientPair::scalar(model_id, move |_, _, z| rate * z.cos(), |_, _, z| z)
                    .with_scalar_jacobians(
                        |_, _, _| 0.0,
                        move |_, _, z| -rate * z.sin(),
                        |_, _, _| 0.0,
                        |_, _, _| 1.0,
                    ),
                other => return Err(r.err("shape", format!("must be `linear` or `cosine`, got `{other}`"))),
            };
            pair.with_growth_constant(rate.abs().max(1.0)).with_flags(lipschitz)
        }
        "mean_field_ou" => {
            r.reject_unknown(&["a", "c"])?;
            let a = r.number("a")?;
            let c = r.number("c")?;
            CoefficientPair::scalar(model_id, move |_, y, z| a * y + c * z, |_, _, z| z)
                .with_scalar_jacobians(move |_, _, _| a, move |_, _, _| c, |_, _, _| 0.0, |_, _, _| 1.0)
                .with_growth_constant(a.abs().max(c.abs()).max(1.0))
                .with_flags(lipschitz)
        }
        "cdf_drift" => {
            r.reject_unknown(&["u"])?;
            let u = r.number("u")?;
            // The indicator has no z-derivative; the pair is deliberately not smooth.
            let pair = CoefficientPair::scalar(model_id, |_, _, z| z, move |_, _, z| if z <= u { 1.0 } else { 0.0 })
                .with_jacobians(
                    Some(std::sync::Arc::new(|_, _, _, out: &mut [f64]| out[0] = 0.0)),
                    Some(std::sync::Arc::new(|_, _, _, out: &mut [f64]| out[0] = 1.0)),
                    Some(std::sync::Arc::new(|_, _, _, out: &mut [f64]| out[0] = 0.0)),
                    None,
                )
                .with_growth_constant(1.0)
                .with_breakpoints(vec![u]);
            pair.with_flags(RegularityFlags {
                lipschitz_z_phi: false,
                smooth: false,
                ..lipschitz
            })
        }
        "smoothed_cdf_drift" => {
            r.reject_unknown(&["u", "width"])?;
            let u = r.number("u")?;
            let w = r.number("width")?;
            if w <= 0.0 {
                return Err(r.err("width", "must be positive"));
            }
            CoefficientPair::scalar(model_id, |_, _, z| z, move |_, _, z| logistic((u - z) / w))
                .with_scalar_jacobians(
                    |_, _, _| 0.0,
                    |_, _, _| 1.0,
                    |_, _, _| 0.0,
                    move |_, _, z| -logistic_density((z - u) / w) / w,
                )
                .with_growth_constant(1.0)
                .with_flags(lipschitz)
        }
        "custom_table" => {
            r.reject_unknown(&["knots", "values", "coupling"])?;
            let knots = r.list("knots")?;
            let values = r.list("values")?;
            let coupling = r.number_or("coupling", 0.0)?;
            if knots.is_empty() {
                return Err(r.err("knots", "must not be empty"));
            }
            if knots.len() != values.len() {
                return Err(r.err("values", "must have the same length as `knots`"));
            }
            if knots.windows(2).any(|w| w[1] <= w[0]) {
                return Err(r.err("knots", "must be strictly increasing"));
            }
            let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let breaks = knots.clone();
            let table = Table { knots, values };
            let pair = CoefficientPair::scalar(model_id, move |_, y, z| table.eval(y) + coupling * z, |_, _, z| z)
                .with_growth_constant(vmax.max(coupling.abs()).max(1.0))
                .with_breakpoints(breaks);
            pair.with_flags(RegularityFlags {
                smooth: false,
                ..lipschitz
            })
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

struct Table {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    fn eval(&self, y: f64) -> f64 {
        let n = self.knots.len();
        if y <= self.knots[0] {
            return self.values[0];
        }
        if y >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let k = self.knots.partition_point(|&x| x <= y);
        let (x0, x1) = (self.knots[k - 1], self.knots[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (y - x0) / (x1 - x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(entries: &[(&str, ParamValue)]) -> Params {
        entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn zero_drift_is_identically_zero() {
        let pair = make_builtin("zero_drift", &Params::new()).unwrap();
        assert_eq!(pair.b1(0.3, 1.5, -2.0), 0.0);
        assert_eq!(pair.phi1(0.3, 1.5, -2.0), 0.0);
        assert_eq!(pair.growth_constant(), Some(0.0));
        assert!(pair.is_smooth());
    }

    #[test]
    fn mean_field_ou_formula() {
        let p = params(&[("a", ParamValue::Number(-1.0)), ("c", ParamValue::Number(0.5))]);
        let pair = make_builtin("mean_field_ou", &p).unwrap();
        assert_eq!(pair.b1(0.0, 1.0, 2.0), 0.0);
        assert_eq!(pair.phi1(0.0, 7.0, 2.0), 2.0);
    }

    #[test]
    fn cdf_drift_indicator() {
        let pair = make_builtin("cdf_drift", &params(&[("u", ParamValue::Number(0.0))])).unwrap();
        assert_eq!(pair.phi1(0.0, 5.0, -1.0), 1.0);
        assert_eq!(pair.phi1(0.0, 5.0, 1.0), 0.0);
        assert_eq!(pair.phi1(0.0, 5.0, 0.0), 1.0);
        assert!(!pair.is_smooth());
        assert!(!pair.flags().lipschitz_z_phi);
    }

    #[test]
    fn smoothed_cdf_is_smooth_and_centred() {
        let p = params(&[("u", ParamValue::Number(0.0)), ("width", ParamValue::Number(0.1))]);
        let pair = make_builtin("smoothed_cdf_drift", &p).unwrap();
        assert!(pair.is_smooth());
        assert!((pair.phi1(0.0, 0.0, 0.0) - 0.5).abs() < 1e-15);
        assert!(pair.phi1(0.0, 0.0, -1.0) > 0.99);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad_width = params(&[("u", ParamValue::Number(0.0)), ("width", ParamValue::Number(0.0))]);
        assert!(matches!(
            make_builtin("smoothed_cdf_drift", &bad_width),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_builtin("mean_field_ou", &Params::new()),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_builtin("nope", &Params::new()),
            Err(Error::UnknownModel(_))
        ));
        let extra = params(&[("u", ParamValue::Number(0.0)), ("v", ParamValue::Number(0.0))]);
        assert!(make_builtin("cdf_drift", &extra).is_err());
        let unsorted = params(&[
            ("knots", ParamValue::List(vec![1.0, 0.0])),
            ("values", ParamValue::List(vec![0.0, 1.0])),
        ]);
        assert!(make_builtin("custom_table", &unsorted).is_err());
    }

    #[test]
    fn custom_table_interpolates() {
        let p = params(&[
            ("knots", ParamValue::List(vec![-1.0, 0.0, 1.0])),
            ("values", ParamValue::List(vec![1.0, 0.0, 1.0])),
            ("coupling", ParamValue::Number(0.5)),
        ]);
        let pair = make_builtin("custom_table", &p).unwrap();
        assert_eq!(pair.b1(0.0, -0.5, 0.0), 0.5);
        assert_eq!(pair.b1(0.0, 3.0, 2.0), 2.0);
        assert_eq!(pair.b1(0.0, 0.0, 0.0), 0.0);
    }
}
