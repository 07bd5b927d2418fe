//! Gaussian quadrature rules built by Golub–Welsch, plus adaptive Gauss–Kronrod.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// A quadrature rule `∫ f dw ≈ Σ weights[i] · f(nodes[i])`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Nodes and weights from the three-term recurrence `p_{k+1} = (x - α_k) p_k - β_k p_{k-1}`.
/// `beta[0]` is ignored; `mu0` is the total mass of the weight.
fn golub_welsch(alpha: &[f64], beta: &[f64], mu0: f64) -> Rule {
    let n = alpha.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k + 1].sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    let alpha = vec![0.0; n];
    let beta: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            k * k / (4.0 * k * k - 1.0)
        })
        .collect();
    let mut rule = golub_welsch(&alpha, &beta, 2.0);
    symmetrize(&mut rule);
    rule
}

/// Gauss–Hermite rule for the weight `e^{-x²}` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    let alpha = vec![0.0; n];
    let beta: Vec<f64> = (0..n).map(|k| k as f64 / 2.0).collect();
    let mut rule = golub_welsch(&alpha, &beta, std::f64::consts::PI.sqrt());
    symmetrize(&mut rule);
    rule
}

// Eigen-solvers return symmetric rules only up to rounding; enforce it exactly.
fn symmetrize(rule: &mut Rule) {
    let n = rule.len();
    for k in 0..n / 2 {
        let x = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
        let w = 0.5 * (rule.weights[n - 1 - k] + rule.weights[k]);
        rule.nodes[k] = -x;
        rule.nodes[n - 1 - k] = x;
        rule.weights[k] = w;
        rule.weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
}

/// Half-range Gauss–Hermite rule: nodes `s ≥ 0` and weights summing to one for
/// the density `2·(2π)^{-1/2}·e^{-s²/2}` of `|ξ|`, `ξ ~ N(0, 1)`.
///
/// Folding `E[f(ξ)] = E[(f(|ξ|) + f(-|ξ|)) / 2]` with this rule integrates
/// functions that are smooth on either side of the origin to spectral accuracy,
/// which plain Gauss–Hermite cannot do for a kink or jump at the centre.
///
/// Recurrence coefficients come from the discretized Stieltjes procedure on a
/// composite Gauss–Legendre grid over `[0, 14]`; the truncated mass is below 1e-40.
pub fn half_range_gaussian(n: usize) -> Rule {
    const PANELS: usize = 280;
    const UPPER: f64 = 14.0;
    let panel_rule = gauss_legendre(24);
    let width = UPPER / PANELS as f64;
    let density_scale = (2.0 / std::f64::consts::PI).sqrt();

    let mut xs = Vec::with_capacity(PANELS * panel_rule.len());
    let mut ws = Vec::with_capacity(PANELS * panel_rule.len());
    for p in 0..PANELS {
        let left = p as f64 * width;
        for (&x, &w) in panel_rule.nodes.iter().zip(&panel_rule.weights) {
            let s = left + 0.5 * width * (x + 1.0);
            xs.push(s);
            ws.push(0.5 * width * w * density_scale * (-0.5 * s * s).exp());
        }
    }

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut prev = vec![0.0; xs.len()];
    let mut cur = vec![1.0; xs.len()];
    let mut norm_prev = 1.0;
    for k in 0..n {
        let norm: f64 = cur.iter().zip(&ws).map(|(p, w)| w * p * p).sum();
        let moment: f64 = cur.iter().zip(&ws).zip(&xs).map(|((p, w), x)| w * x * p * p).sum();
        alpha[k] = moment / norm;
        beta[k] = if k == 0 { norm } else { norm / norm_prev };
        let next: Vec<f64> = (0..xs.len())
            .map(|i| (xs[i] - alpha[k]) * cur[i] - if k == 0 { 0.0 } else { beta[k] * prev[i] })
            .collect();
        // Rescale to keep the recursion in range; α and β are scale invariant.
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        prev = cur.iter().map(|v| v / scale).collect();
        cur = next.iter().map(|v| v / scale).collect();
        norm_prev = norm / (scale * scale);
    }
    golub_welsch(&alpha, &beta, 1.0)
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS7_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = half * KRONROD_NODES[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += KRONROD_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive 7/15-point Gauss–Kronrod integration of `f` over `[a, b]` (either order).
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let (value, err) = gk15(f, a, b);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "adaptive quadrature".into(),
                point: format!("[{a}, {b}]"),
            });
        }
        if err <= tol || depth == 0 || (b - a).abs() < 1e-12 * (1.0 + a.abs()) {
            return Ok(value);
        }
        let mid = 0.5 * (a + b);
        Ok(recurse(f, a, mid, 0.5 * tol, depth - 1)? + recurse(f, mid, b, 0.5 * tol, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    recurse(&f, a, b, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(10);
        let v = rule.integrate(|x| x.powi(18));
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(20);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        assert!((rule.integrate(|_| 1.0) - pi_sqrt).abs() < 1e-13);
        // ∫ x^4 e^{-x²} = 3√π/4
        assert!((rule.integrate(|x| x.powi(4)) - 0.75 * pi_sqrt).abs() < 1e-12);
    }

    #[test]
    fn half_range_moments_match_folded_normal() {
        let rule = half_range_gaussian(12);
        assert!(rule.nodes.iter().all(|&s| s > 0.0));
        assert!((rule.integrate(|_| 1.0) - 1.0).abs() < 1e-13);
        // E|ξ| = √(2/π), E ξ² = 1, E|ξ|³ = 2√(2/π)
        let c = (2.0 / std::f64::consts::PI).sqrt();
        assert!((rule.integrate(|s| s) - c).abs() < 1e-13);
        assert!((rule.integrate(|s| s * s) - 1.0).abs() < 1e-13);
        assert!((rule.integrate(|s| s.powi(3)) - 2.0 * c).abs() < 1e-12);
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let v = integrate_adaptive(|x| 1.0 / (1.0 + x * x).sqrt(), 0.0, 3.0, 1e-13).unwrap();
        assert!((v - 3.0f64.asinh()).abs() < 1e-12);
        let back = integrate_adaptive(|x| x.exp(), 1.0, 0.0, 1e-13).unwrap();
        assert!((back + (1f64.exp() - 1.0)).abs() < 1e-12);
    }
}
