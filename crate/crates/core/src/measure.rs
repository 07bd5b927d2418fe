//! Empirical measures of particle snapshots.
//!
//! Variances and covariances use the population convention (divide by `N`),
//! matching the view of a snapshot as the uniform measure on its atoms.

use std::sync::OnceLock;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::coefficients::CoefficientPair;
use crate::{Error, Result};

/// Uniform probability measure on `N` points of `ℝ^d`.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    // Ascending permutation of the atoms (d = 1), built on first use.
    sorted_view: OnceLock<Vec<usize>>,
}

impl PartialEq for EmpiricalMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points
    }
}

impl EmpiricalMeasure {
    /// `points` is row-major `N × dim`.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "need a non-empty N × {dim} point array, got {} values",
                points.len()
            )));
        }
        Ok(Self {
            dim,
            points,
            sorted_view: OnceLock::new(),
        })
    }

    pub fn from_scalars(points: Vec<f64>) -> Result<Self> {
        Self::new(1, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn require_scalar(&self) -> Result<()> {
        if self.dim == 1 {
            Ok(())
        } else {
            Err(Error::NotScalar(self.dim))
        }
    }

    /// Index permutation sorting the atoms ascending (d = 1 only).
    pub fn sorted_view(&self) -> Result<&[usize]> {
        self.require_scalar()?;
        Ok(self.sorted_view.get_or_init(|| {
            let mut idx: Vec<usize> = (0..self.points.len()).collect();
            idx.sort_by(|&a, &b| self.points[a].total_cmp(&self.points[b]));
            idx
        }))
    }

    /// Atoms in ascending order (d = 1 only).
    pub fn sorted(&self) -> Result<Vec<f64>> {
        Ok(self.sorted_view()?.iter().map(|&i| self.points[i]).collect())
    }

    /// `F(u) = #{i : x_i ≤ u} / N`, right-continuous.
    pub fn cdf(&self, u: f64) -> Result<f64> {
        let view = self.sorted_view()?;
        let count = view.partition_point(|&i| self.points[i] <= u);
        Ok(count as f64 / view.len() as f64)
    }

    /// `(1/N) Σ_j φ(t, y, x_j)`.
    pub fn integrate_phi(&self, pair: &CoefficientPair, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        if pair.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: pair.dim(),
            });
        }
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: y.len(),
            });
        }
        let mut acc = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.dim];
        for j in 0..self.len() {
            (pair.phi())(t, y, self.point(j), &mut buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "phi".into(),
                    point: format!("(t={t}, y={y:?}, z={:?})", self.point(j)),
                });
            }
            acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        let n = self.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut acc = vec![0.0; self.dim];
        for p in self.points.chunks_exact(self.dim) {
            acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
        }
        acc.into_iter().map(|a| a / n).collect()
    }

    /// Population covariance, row-major `d × d`.
    pub fn covariance(&self) -> Vec<f64> {
        let mean = self.mean();
        let d = self.dim;
        let mut cov = vec![0.0; d * d];
        for p in self.points.chunks_exact(d) {
            for r in 0..d {
                for c in 0..d {
                    cov[r * d + c] += (p[r] - mean[r]) * (p[c] - mean[c]);
                }
            }
        }
        let n = self.len() as f64;
        cov.into_iter().map(|v| v / n).collect()
    }

    /// Moment of the given order: 1 gives the mean, 2 the covariance.
    pub fn moments(&self, order: u8) -> Result<Vec<f64>> {
        match order {
            1 => Ok(self.mean()),
            2 => Ok(self.covariance()),
            _ => Err(Error::InvalidArgument(format!(
                "moment order must be 1 or 2, got {order}"
            ))),
        }
    }

    /// Population variance of a one-dimensional measure.
    pub fn variance(&self) -> Result<f64> {
        self.require_scalar()?;
        Ok(self.covariance()[0])
    }
}

/// Exact Wasserstein-1 (Kantorovich) distance between equal-size one-dimensional
/// empirical measures: the mean absolute difference of the order statistics.
pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    mu.require_scalar()?;
    nu.require_scalar()?;
    if mu.len() != nu.len() {
        return Err(Error::UnequalSize(mu.len(), nu.len()));
    }
    let (a, b) = (mu.sorted_view()?, nu.sorted_view()?);
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(&i, &j)| (mu.points[i] - nu.points[j]).abs())
        .sum();
    Ok(total / mu.len() as f64)
}

/// Exact Wasserstein-1 distance between a one-dimensional empirical measure and
/// `N(mean, sd²)`, integrating `|x_(k) − Q(p)|` over each quantile cell in closed form.
pub fn wasserstein1_to_gaussian(mu: &EmpiricalMeasure, mean: f64, sd: f64) -> Result<f64> {
    let sorted = mu.sorted()?;
    if !(sd > 0.0) {
        return Ok(sorted.iter().map(|x| (x - mean).abs()).sum::<f64>() / sorted.len() as f64);
    }
    let std_normal = Normal::standard();
    let density = |z: f64| {
        if z.is_finite() {
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        } else {
            0.0
        }
    };
    let quantile = |p: f64| {
        if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else {
            std_normal.inverse_cdf(p)
        }
    };
    // ∫_{p0}^{p1} Q(p) dp for the standard normal is φ(z0) − φ(z1).
    let quantile_integral = |p0: f64, p1: f64| density(quantile(p0)) - density(quantile(p1));

    let n = sorted.len() as f64;
    let mut total = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        let (p0, p1) = (k as f64 / n, (k + 1) as f64 / n);
        let xs = (x - mean) / sd;
        let split = std_normal.cdf(xs).clamp(p0, p1);
        // Below the split Q(p) ≤ xs, above it Q(p) ≥ xs.
        let lower = xs * (split - p0) - quantile_integral(p0, split);
        let upper = quantile_integral(split, p1) - xs * (p1 - split);
        total += lower + upper;
    }
    Ok(sd * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_builtin, ParamValue, Params};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn m(points: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(points.to_vec()).unwrap()
    }

    #[test]
    fn cdf_counts() {
        let mu = m(&[3.0, 1.0, 2.0]);
        assert_eq!(mu.cdf(2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(mu.cdf(0.5).unwrap(), 0.0);
        assert_eq!(mu.cdf(3.0).unwrap(), 1.0);
        // right-continuity at an atom
        assert_eq!(mu.cdf(1.0).unwrap(), mu.cdf(1.0 + 1e-12).unwrap());
        assert!(mu.cdf(1.0 - 1e-12).unwrap() < mu.cdf(1.0).unwrap());
    }

    #[test]
    fn cdf_requires_scalar() {
        let mu = EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(mu.cdf(0.0), Err(Error::NotScalar(2))));
    }

    #[test]
    fn phi_integration() {
        let id = CoefficientPair::scalar("id", |_, _, _| 0.0, |_, _, z| z);
        assert_eq!(m(&[0.0, 2.0]).integrate_phi(&id, 0.0, &[5.0]).unwrap(), vec![1.0]);
        let sum = CoefficientPair::scalar("sum", |_, _, _| 0.0, |_, y, z| y + z);
        assert_eq!(m(&[0.0, 2.0]).integrate_phi(&sum, 0.0, &[1.0]).unwrap(), vec![2.0]);
        let mut p = Params::new();
        p.insert("u".into(), ParamValue::Number(0.0));
        let cdf = make_builtin("cdf_drift", &p).unwrap();
        let mu = m(&[-1.0, 1.0, 3.0]);
        assert_eq!(mu.integrate_phi(&cdf, 0.0, &[0.0]).unwrap()[0], 1.0 / 3.0);
        assert_eq!(mu.integrate_phi(&cdf, 0.0, &[0.0]).unwrap()[0], mu.cdf(0.0).unwrap());
    }

    #[test]
    fn moments_population_convention() {
        assert_eq!(m(&[-1.0, 1.0]).mean(), vec![0.0]);
        assert_eq!(m(&[0.0, 2.0]).variance().unwrap(), 1.0);
        assert!(m(&[0.0]).moments(3).is_err());
    }

    #[test]
    fn normal_sample_mean_within_clt_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mean = m(&xs).mean()[0];
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein1(&m(&[0.0, 1.0]), &m(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(wasserstein1(&m(&[0.0]), &m(&[1.0])).unwrap(), 1.0);
        // Brute force over both couplings of {0, 1} and {0, 3}.
        let brute = f64::min((0.0f64 + 2.0) / 2.0, (3.0f64 + 1.0) / 2.0);
        assert_eq!(wasserstein1(&m(&[0.0, 1.0]), &m(&[0.0, 3.0])).unwrap(), brute);
        assert!(matches!(
            wasserstein1(&m(&[0.0]), &m(&[0.0, 1.0])),
            Err(Error::UnequalSize(1, 2))
        ));
    }

    #[test]
    fn w1_to_gaussian_matches_quadrature() {
        let mu = m(&[-1.3, -0.2, 0.1, 0.4, 2.0]);
        let (mean, sd) = (0.3, 0.8);
        let exact = wasserstein1_to_gaussian(&mu, mean, sd).unwrap();
        // Oracle: ∫ |F_N(x) − G(x)| dx by a fine midpoint rule.
        let g = Normal::new(mean, sd).unwrap();
        let (a, b, n) = (-10.0, 10.0, 400_000);
        let dx = (b - a) / n as f64;
        let numeric: f64 = (0..n)
            .map(|k| {
                let x = a + (k as f64 + 0.5) * dx;
                (mu.cdf(x).unwrap() - g.cdf(x)).abs() * dx
            })
            .sum();
        assert!((exact - numeric).abs() < 1e-6, "{exact} {numeric}");
    }

    fn brute_force_w1(a: &[f64], b: &[f64]) -> f64 {
        fn permute(k: usize, perm: &mut Vec<usize>, a: &[f64], b: &[f64], best: &mut f64) {
            if k == perm.len() {
                let cost: f64 = perm.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum();
                *best = best.min(cost / a.len() as f64);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, a, b, best);
                perm.swap(k, i);
            }
        }
        let mut best = f64::INFINITY;
        permute(0, &mut (0..a.len()).collect(), a, b, &mut best);
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn w1_is_a_metric(
            (a, b, c) in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let (ma, mb, mc) = (m(&a), m(&b), m(&c));
            let ab = wasserstein1(&ma, &mb).unwrap();
            let ba = wasserstein1(&mb, &ma).unwrap();
            let bc = wasserstein1(&mb, &mc).unwrap();
            let ac = wasserstein1(&ma, &mc).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(wasserstein1(&ma, &ma).unwrap(), 0.0);
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            prop_assert_eq!(ab == 0.0, sa == sb);
        }

        #[test]
        fn w1_matches_brute_force_coupling(
            (a, b) in (1usize..7).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            ))
        ) {
            let w = wasserstein1(&m(&a), &m(&b)).unwrap();
            prop_assert!((w - brute_force_w1(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn kantorovich_duality_bound(
            (a, b) in (1usize..20).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )),
            slope in -1.0f64..1.0,
            shift in -3.0f64..3.0,
            freq in 0.1f64..1.0,
        ) {
            // 1-Lipschitz probes: a clipped ramp and a scaled sine.
            let probes: [Box<dyn Fn(f64) -> f64>; 2] = [
                Box::new(move |x: f64| (slope * (x - shift)).clamp(-1.0, 1.0)),
                Box::new(move |x: f64| (freq * x + shift).sin() / freq),
            ];
            let w = wasserstein1(&m(&a), &m(&b)).unwrap();
            for h in &probes {
                let ia: f64 = a.iter().map(|&x| h(x)).sum::<f64>() / a.len() as f64;
                let ib: f64 = b.iter().map(|&x| h(x)).sum::<f64>() / b.len() as f64;
                prop_assert!((ia - ib).abs() <= w + 1e-12);
            }
        }

        #[test]
        fn cdf_monotone(points in prop::collection::vec(-5.0f64..5.0, 1..30), u in -6.0f64..6.0, du in 0.0f64..2.0) {
            let mu = m(&points);
            prop_assert!(mu.cdf(u).unwrap() <= mu.cdf(u + du).unwrap());
        }

        #[test]
        fn identity_phi_equals_mean(points in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let id = CoefficientPair::scalar("id", |_, _, _| 0.0, |_, _, z| z);
            let mu = m(&points);
            prop_assert_eq!(mu.integrate_phi(&id, 0.0, &[0.0]).unwrap(), mu.mean());
        }
    }
}
