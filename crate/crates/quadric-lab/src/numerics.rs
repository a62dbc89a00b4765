//! Shared numerical plumbing: Gauss–Legendre rules, adaptive quadrature,
//! least-squares fits, pairwise summation and the Riemann zeta function.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Builds the rule by Newton iteration on the Legendre polynomial `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// Integrates `f` over `[a, b]` with a single application of the rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }

    /// Composite rule over `panels` equal sub-intervals of `[a, b]`.
    pub fn composite<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut parts = Vec::with_capacity(panels);
        for k in 0..panels {
            let lo = a + h * k as f64;
            parts.push(self.integrate(&mut f, lo, lo + h));
        }
        pairwise_sum(&parts)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Gauss–Legendre quadrature with dyadic refinement.
///
/// Each interval is accepted when a 16-point estimate and the sum of two
/// 16-point half-interval estimates agree to `rel_tol` relative to the
/// running magnitude (or `abs_tol` absolutely).
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let rule = GaussRule::new(16);
    let whole = rule.integrate(&mut f, a, b);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut parts = Vec::new();
    let scale = whole.abs().max(abs_tol);
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(&mut f, lo, mid);
        let right = rule.integrate(&mut f, mid, hi);
        let refined = left + right;
        let width_share = (hi - lo) / (b - a);
        let tol = (rel_tol * scale).max(abs_tol) * width_share.max(1e-12);
        if (refined - est).abs() <= tol {
            parts.push((lo, refined));
        } else if depth >= max_depth {
            return Err(LabError::QuadratureDiverged(format!(
                "interval [{lo}, {hi}] unresolved after {max_depth} bisections"
            )));
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let values: Vec<f64> = parts.into_iter().map(|p| p.1).collect();
    Ok(pairwise_sum(&values))
}

/// Deterministic pairwise (tree) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub condition_number: f64,
    /// Standard errors of the coefficients (zero when there are no degrees of freedom).
    pub std_errors: Vec<f64>,
}

/// Solves `min ‖X c − y‖` for the design matrix given by `rows`.
///
/// Columns are rescaled to unit norm before the SVD so the reported
/// condition number reflects genuine collinearity rather than units.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64], max_condition: f64) -> Result<LeastSquares> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n < p || p == 0 {
        return Err(LabError::IllConditioned(f64::INFINITY));
    }
    let mut x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let mut scales = vec![1.0; p];
    for (j, scale) in scales.iter_mut().enumerate() {
        let norm = x.column(j).norm();
        if norm > 0.0 {
            *scale = norm;
            x.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= max_condition) {
        return Err(LabError::IllConditioned(cond));
    }
    let yv = DVector::from_column_slice(y);
    let sol = svd
        .solve(&yv, 0.0)
        .map_err(|e| LabError::QuadratureDiverged(e.to_string()))?;
    let fitted = &x * &sol;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let dof = n.saturating_sub(p);
    let std_errors = if dof == 0 {
        vec![0.0; p]
    } else {
        let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64;
        let xtx = x.transpose() * &x;
        match xtx.try_inverse() {
            Some(inv) => (0..p).map(|j| (s2 * inv[(j, j)]).max(0.0).sqrt() / scales[j]).collect(),
            None => vec![f64::INFINITY; p],
        }
    };
    let coefficients = (0..p).map(|j| sol[j] / scales[j]).collect();
    Ok(LeastSquares { coefficients, residuals, condition_number: cond, std_errors })
}

/// Straight-line fit `y ≈ intercept + slope·x` with the slope's standard error.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least-squares line through the points.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&t| vec![1.0, t]).collect();
    let ls = least_squares(&rows, y, 1e12)?;
    Ok(LineFit { intercept: ls.coefficients[0], slope: ls.coefficients[1], slope_stderr: ls.std_errors[1] })
}

/// A (parameter, value) series with a fitted log–log power law.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SeriesFit {
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    /// Fitted slope of log|value| against log(parameter).
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Residuals of the log–log fit.
    pub residuals: Vec<f64>,
    /// True when some value is zero (or non-finite) so no power law can be fitted.
    pub degenerate: bool,
}

impl SeriesFit {
    /// Fits log|value| ≈ intercept + slope·log(param).
    pub fn power_law(params: &[f64], values: &[f64]) -> SeriesFit {
        let usable = values.iter().all(|v| v.is_finite() && v.abs() > 1e-300) && params.len() >= 2;
        if !usable {
            return SeriesFit {
                params: params.to_vec(),
                values: values.to_vec(),
                slope: 0.0,
                intercept: 0.0,
                slope_stderr: f64::INFINITY,
                residuals: vec![],
                degenerate: true,
            };
        }
        let lx: Vec<f64> = params.iter().map(|p| p.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
        match fit_line(&lx, &ly) {
            Ok(line) => {
                let residuals = lx.iter().zip(&ly).map(|(x, y)| y - line.intercept - line.slope * x).collect();
                SeriesFit {
                    params: params.to_vec(),
                    values: values.to_vec(),
                    slope: line.slope,
                    intercept: line.intercept,
                    slope_stderr: line.slope_stderr,
                    residuals,
                    degenerate: false,
                }
            }
            Err(_) => SeriesFit {
                params: params.to_vec(),
                values: values.to_vec(),
                slope: 0.0,
                intercept: 0.0,
                slope_stderr: f64::INFINITY,
                residuals: vec![],
                degenerate: true,
            },
        }
    }

    /// Decay exponent −slope.
    pub fn decay_exponent(&self) -> f64 {
        -self.slope
    }

    /// One-sided 95% lower confidence bound on the decay exponent.
    pub fn decay_lower_bound(&self) -> f64 {
        let dof = self.params.len().saturating_sub(2);
        self.decay_exponent() - student_t_975(dof) * self.slope_stderr
    }
}

/// Two-sided 97.5% Student-t quantile, used for 95% confidence bounds.
pub fn student_t_975(dof: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY)
}

/// Riemann zeta function for real `s > 1` by Euler–Maclaurin summation.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "riemann_zeta requires s > 1");
    hurwitz_zeta(s, 1.0)
}

/// Hurwitz zeta ζ(s, a) = Σ_{n≥0} (n + a)^{−s} for real s > 1 and a > 0, by
/// Euler–Maclaurin summation after twelve explicit terms.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0, "hurwitz_zeta requires s > 1 and a > 0");
    // Bernoulli numbers B_2, B_4, …, B_16.
    const B: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let explicit = 12;
    let n = explicit as f64 + a;
    let mut sum = 0.0;
    for k in 0..explicit {
        sum += (k as f64 + a).powf(-s);
    }
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // Rising product s(s+1)…(s+2k−2) / (2k)!
    let mut rising = s;
    let mut fact = 2.0;
    let mut npow = n.powf(-s - 1.0);
    for (k, b) in B.iter().enumerate() {
        let kk = (k + 1) as f64;
        sum += b / fact * rising * npow;
        rising *= (s + 2.0 * kk - 1.0) * (s + 2.0 * kk);
        fact *= (2.0 * kk + 1.0) * (2.0 * kk + 2.0);
        npow /= n * n;
    }
    sum
}

/// Kronecker symbol (d/n) for n ≥ 1.
pub fn kronecker_symbol(d: i64, n: u64) -> i64 {
    let mut n = n;
    let mut result = 1;
    while n.is_multiple_of(2) {
        n /= 2;
        result *= match d.rem_euclid(8) {
            1 | 7 => 1,
            3 | 5 => -1,
            _ => 0,
        };
    }
    if n == 1 {
        return result;
    }
    // Jacobi symbol (d mod n / n) for odd n.
    let mut a = d.rem_euclid(n as i64) as u64;
    let mut m = n;
    while a != 0 {
        while a.is_multiple_of(2) {
            a /= 2;
            if m % 8 == 3 || m % 8 == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut m);
        if a % 4 == 3 && m % 4 == 3 {
            result = -result;
        }
        a %= m;
    }
    if m == 1 {
        result
    } else {
        0
    }
}

/// Dirichlet L-function L(s, χ) = Σ χ(n) n^{−s} for real s > 1 and a
/// character of the given modulus, via q^{−s} Σ_a χ(a) ζ(s, a/q).
pub fn dirichlet_l<F: Fn(u64) -> f64>(s: f64, modulus: u64, chi: F) -> f64 {
    let q = modulus as f64;
    let terms: Vec<f64> = (1..=modulus)
        .map(|a| {
            let c = chi(a);
            if c == 0.0 {
                0.0
            } else {
                c * hurwitz_zeta(s, a as f64 / q)
            }
        })
        .collect();
    q.powf(-s) * pairwise_sum(&terms)
}

/// Derivative of the Riemann zeta function by a five-point central difference.
pub fn riemann_zeta_derivative(s: f64) -> f64 {
    let h = 1e-3;
    (-riemann_zeta(s + 2.0 * h) + 8.0 * riemann_zeta(s + h) - 8.0 * riemann_zeta(s - h)
        + riemann_zeta(s - 2.0 * h))
        / (12.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dirichlet_l_matches_known_constants() {
        // Catalan's constant β(2) and L(1·3, χ₋₄) = π³/32.
        let beta = |s| dirichlet_l(s, 4, |n| kronecker_symbol(-4, n) as f64);
        assert!((beta(2.0) - 0.915_965_594_177_219).abs() < 1e-13);
        assert!((beta(3.0) - PI.powi(3) / 32.0).abs() < 1e-13);
        // L(2, χ₈) = π²/(8√2).
        let l8 = dirichlet_l(2.0, 8, |n| kronecker_symbol(8, n) as f64);
        assert!((l8 - PI * PI / (8.0 * 2f64.sqrt())).abs() < 1e-13);
        assert!((hurwitz_zeta(2.0, 0.5) - PI * PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kronecker_symbol_examples() {
        assert_eq!(kronecker_symbol(-4, 3), -1);
        assert_eq!(kronecker_symbol(-4, 5), 1);
        assert_eq!(kronecker_symbol(-4, 2), 0);
        assert_eq!(kronecker_symbol(8, 3), -1);
        assert_eq!(kronecker_symbol(8, 7), 1);
        assert_eq!(kronecker_symbol(5, 2), -1);
        assert_eq!(kronecker_symbol(5, 5), 0);
        assert_eq!(kronecker_symbol(-3, 4), 1);
    }

    #[test]
    fn gauss_rule_is_exact_on_polynomials() {
        let rule = GaussRule::new(5);
        // Degree 9 is the exactness limit of five nodes.
        let v = rule.integrate(|x| x.powi(8) + x.powi(9), -1.0, 1.0);
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_rules_have_sorted_interior_nodes() {
        for n in [16, 32, 64] {
            let r = GaussRule::new(n);
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
            assert!(r.nodes[0] > -1.0 && r.nodes[n - 1] < 1.0);
            let v = r.integrate(f64::cos, 0.0, PI / 2.0);
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        let v = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 1e-14, 40).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zeta_matches_closed_forms() {
        assert!((riemann_zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((riemann_zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((riemann_zeta(1.01) - 100.577943338497).abs() < 1e-9);
        assert!((riemann_zeta_derivative(2.0) + 0.937_548_254_315_843_7).abs() < 1e-9);
    }

    #[test]
    fn least_squares_recovers_exact_model() {
        let xs: Vec<f64> = (1..10).map(f64::from).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x * x.ln(), x]).collect();
        let y: Vec<f64> = xs.iter().map(|&x| 3.0 * x * x.ln() + 5.0 * x).collect();
        let ls = least_squares(&rows, &y, 1e10).unwrap();
        assert!((ls.coefficients[0] - 3.0).abs() < 1e-10);
        assert!((ls.coefficients[1] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(matches!(least_squares(&rows, &[1.0, 2.0, 3.0], 1e10), Err(LabError::IllConditioned(_))));
    }

    #[test]
    fn pairwise_sum_matches_naive_sum() {
        let v: Vec<f64> = (0..1000).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-12);
    }
}
