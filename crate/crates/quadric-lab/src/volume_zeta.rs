//! Volumes of norm balls B_T on G/H ≅ X(ℝ), height zeta functions Z(τ) and
//! Z_log(τ) with their pole diagnostics, and the T_g^{−δ} tail integral.
//!
//! X is the one-sheeted hyperboloid x² + y² − z² = m (m > 0), parametrised by
//! x = √m·(cosh u·cos θ, cosh u·sin θ, sinh u). The invariant (Leray) measure
//! in these coordinates is ½·cosh u dθ du; every quantity below carries this one
//! fixed normalization, and all checks are normalization-free.

use std::f64::consts::PI;

use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::group_kit::RealMat2;
use crate::numerics::{adaptive, least_squares, pairwise_sum, GaussRule, SeriesFit};
use crate::quadric_counting::{rat_matrix, TernaryQuadricProblem};

/// Relative tolerance of the one-dimensional radial quadratures.
pub const RADIAL_TOL: f64 = 1e-11;

/// Default relative tolerance on the extrapolated zeta tail.
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;

/// Smallest admissible distance of τ from the pole.
pub const POLE_MARGIN: f64 = 1e-3;

/// Hyperbolic coordinates on X(ℝ) for x² + y² − z² = m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadricChart {
    /// The value m > 0.
    pub m: f64,
}

impl QuadricChart {
    /// The chart of a problem; only x² + y² − z² = m with m > 0 is supported.
    pub fn for_problem(problem: &TernaryQuadricProblem) -> Result<Self> {
        if problem.gram != rat_matrix([[1, 0, 0], [0, 1, 0], [0, 0, -1]]) || !problem.m.is_positive() {
            return Err(LabError::Unsupported(
                "volume computations are implemented for x² + y² − z² = m with m > 0".into(),
            ));
        }
        Ok(QuadricChart { m: problem.m.to_f64().unwrap_or(f64::NAN) })
    }

    /// The point with coordinates (θ, u).
    pub fn point(&self, theta: f64, u: f64) -> [f64; 3] {
        let r = self.m.sqrt();
        [r * u.cosh() * theta.cos(), r * u.cosh() * theta.sin(), r * u.sinh()]
    }

    /// Inverse chart: (θ, u) of a point on X(ℝ).
    pub fn coords(&self, x: &[f64; 3]) -> (f64, f64) {
        let r = self.m.sqrt();
        (x[1].atan2(x[0]), (x[2] / r).asinh())
    }

    /// Density of the invariant measure in (θ, u).
    pub fn density(&self, u: f64) -> f64 {
        0.5 * u.cosh()
    }

    /// Euclidean norm of the point at height u.
    pub fn norm_at(&self, u: f64) -> f64 {
        (self.m * (2.0 * u).cosh()).sqrt()
    }

    /// Smallest point norm √m.
    pub fn min_norm(&self) -> f64 {
        self.m.sqrt()
    }

    /// The u-radius of B_T: cosh 2u = T²/m.
    pub fn u_radius(&self, t: f64) -> f64 {
        0.5 * (t * t / self.m).max(1.0).acosh()
    }

    /// T_g of the section at height u, i.e. cosh u (closed form of [`t_of_point`]).
    pub fn t_g(&self, u: f64) -> f64 {
        u.cosh()
    }
}

/// The discriminant-form coordinates (a, b, c) of x/√m: the binary form
/// a·U² + b·UV + c·V² with b² − 4ac = 1.
fn binary_form(chart: &QuadricChart, x: &[f64; 3]) -> [f64; 3] {
    let r = chart.m.sqrt();
    let (x0, y0, z0) = (x[0] / r, x[1] / r, x[2] / r);
    [(z0 - y0) / 2.0, x0, (z0 + y0) / 2.0]
}

/// A section g(x) ∈ SL₂(ℝ) with g·x₀ = x for the base point x₀ = √m·(1, 0, 0)
/// (the form UV), obtained by factoring the binary form of x into two linear
/// forms L₁·L₂ and taking their coefficients as the columns' rows. The free
/// parameter λ ≠ 0 moves g along the stabilizer H = {h_t}.
pub fn section(chart: &QuadricChart, x: &[f64; 3], lambda: f64) -> RealMat2 {
    let [a, b, c] = binary_form(chart, x);
    // (p, q) and (r, s) are the coefficients of L₁ = pU + qV and L₂ = rU + sV; g = [[p, r], [q, s]].
    let (p, q, r, s) = if a.abs() >= c.abs() && a != 0.0 {
        let xp = (-b + 1.0) / (2.0 * a);
        let xm = (-b - 1.0) / (2.0 * a);
        (lambda, -lambda * xp, a / lambda, -a / lambda * xm)
    } else if c != 0.0 {
        let yp = (-b + 1.0) / (2.0 * c);
        let ym = (-b - 1.0) / (2.0 * c);
        (-lambda * ym, lambda, -c / lambda * yp, c / lambda)
    } else if b > 0.0 {
        (lambda, 0.0, 0.0, 1.0 / lambda)
    } else {
        (0.0, lambda, -1.0 / lambda, 0.0)
    };
    [[p, r], [q, s]]
}

/// T_g = ‖g·e₁‖·‖g·e₂‖ for the section through x.
pub fn t_of_point(chart: &QuadricChart, x: &[f64; 3], lambda: f64) -> f64 {
    let g = section(chart, x, lambda);
    g[0][0].hypot(g[1][0]) * g[0][1].hypot(g[1][1])
}

/// The real spin action of g ∈ SL₂(ℝ) on x² + y² − z² = m, transported from
/// the binary-form action through (a, b, c) = ((z−y)/2, x, (z+y)/2).
pub fn act_on_hyperboloid(g: &RealMat2, x: &[f64; 3]) -> [f64; 3] {
    let [[a, b], [c, d]] = *g;
    let f = [(x[2] - x[1]) / 2.0, x[0], (x[2] + x[1]) / 2.0];
    let out = [
        f[0] * a * a + f[1] * a * b + f[2] * b * b,
        2.0 * f[0] * a * c + f[1] * (a * d + b * c) + 2.0 * f[2] * b * d,
        f[0] * c * c + f[1] * c * d + f[2] * d * d,
    ];
    [out[1], out[2] - out[0], out[0] + out[2]]
}

/// Integral of a rotation-invariant weight w(u) against the invariant measure over |u| ≤ u_max.
fn radial_integral<F: Fn(f64) -> f64>(chart: &QuadricChart, u_max: f64, w: F) -> Result<f64> {
    if u_max <= 0.0 {
        return Ok(0.0);
    }
    // Even integrand: twice the integral over [0, u_max], times 2π from θ.
    let half = adaptive(|u| chart.density(u) * w(u), 0.0, u_max, RADIAL_TOL, 0.0, 40)?;
    Ok(4.0 * PI * half)
}

/// m_{G/H}(B_T): the invariant volume of {x ∈ X(ℝ) : ‖x‖ ≤ T}.
pub fn ball_measure(problem: &TernaryQuadricProblem, t: f64) -> Result<f64> {
    let chart = QuadricChart::for_problem(problem)?;
    radial_integral(&chart, chart.u_radius(t), |_| 1.0)
}

/// ∫_{B_T} log T_g dm_{G/H}.
pub fn log_weighted_ball(problem: &TernaryQuadricProblem, t: f64) -> Result<f64> {
    let chart = QuadricChart::for_problem(problem)?;
    radial_integral(&chart, chart.u_radius(t), |u| chart.t_g(u).ln())
}

/// ∫_{B_T} T_g^{−δ} dm_{G/H}, for 0 ≤ δ < ½.
pub fn tail_integral(problem: &TernaryQuadricProblem, delta: f64, t: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&delta) {
        return Err(LabError::InvalidParameter(format!("δ must lie in [0, 0.5), got {delta}")));
    }
    let chart = QuadricChart::for_problem(problem)?;
    radial_integral(&chart, chart.u_radius(t), |u| chart.t_g(u).powf(-delta))
}

/// Fitted growth exponent of tail_integral(δ, T) over a T-grid.
pub fn tail_exponent(problem: &TernaryQuadricProblem, delta: f64, ts: &[f64]) -> Result<SeriesFit> {
    let values = ts.iter().map(|&t| tail_integral(problem, delta, t)).collect::<Result<Vec<_>>>()?;
    Ok(SeriesFit::power_law(ts, &values))
}

/// A sample of Z(τ) or Z_log(τ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaSample {
    pub tau: f64,
    pub value: f64,
    pub cutoff: f64,
    /// Extrapolated contribution of ‖x‖ > cutoff (included in `value`).
    pub tail: f64,
    /// Estimated error of the extrapolated tail.
    pub truncation_error: f64,
}

/// Growth model of the (weighted) ball volume near the cutoff:
/// M(T) ≈ c₀·T, or M(T) ≈ c₁·T·log T + c₀·T when weighted.
fn fit_growth(problem: &TernaryQuadricProblem, cutoff: f64, weighted: bool) -> Result<(Vec<f64>, f64)> {
    let ts: Vec<f64> = (0..=8).map(|j| cutoff * 10f64.powf(-(j as f64) / 4.0)).collect();
    let values = ts
        .iter()
        .map(|&t| if weighted { log_weighted_ball(problem, t) } else { ball_measure(problem, t) })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = ts.iter().map(|&t| if weighted { vec![t * t.ln(), t] } else { vec![t] }).collect();
    let ls = least_squares(&rows, &values, 1e10)?;
    let misfit = ls.residuals.iter().zip(&values).map(|(r, v)| (r / v).abs()).fold(0.0, f64::max);
    Ok((ls.coefficients, misfit))
}

/// Z(τ) = ∫ ‖x‖^{−τ} dm (or Z_log with the extra weight log T_g): the
/// quadrature over ‖x‖ ≤ cutoff plus a tail extrapolated from the fitted
/// growth of the ball volume beyond the cutoff.
pub fn height_zeta(problem: &TernaryQuadricProblem, tau: f64, cutoff: f64, weighted: bool) -> Result<ZetaSample> {
    height_zeta_with_tol(problem, tau, cutoff, weighted, DEFAULT_TAIL_TOL)
}

/// [`height_zeta`] with an explicit relative tolerance on the tail error.
pub fn height_zeta_with_tol(
    problem: &TernaryQuadricProblem,
    tau: f64,
    cutoff: f64,
    weighted: bool,
    tail_tol: f64,
) -> Result<ZetaSample> {
    if !(tau > 1.0 + POLE_MARGIN) {
        return Err(LabError::InvalidParameter(format!("τ must exceed 1 + {POLE_MARGIN}, got {tau}")));
    }
    let chart = QuadricChart::for_problem(problem)?;
    if !(cutoff >= 100.0 * chart.min_norm()) {
        return Err(LabError::InvalidParameter("cutoff must be at least 100 times the minimal norm".into()));
    }
    let body = radial_integral(&chart, chart.u_radius(cutoff), |u| {
        let w = if weighted { chart.t_g(u).ln() } else { 1.0 };
        chart.norm_at(u).powf(-tau) * w
    })?;
    let (coef, misfit) = fit_growth(problem, cutoff, weighted)?;
    let e = tau - 1.0;
    let cpow = cutoff.powf(-e);
    // ∫_C^∞ T^{−τ} dM(T) for the fitted M.
    let tail = if weighted {
        let (c1, c0) = (coef[0], coef[1]);
        let log_part = cpow * (cutoff.ln() / e + 1.0 / (e * e));
        c1 * log_part + (c1 + c0) * cpow / e
    } else {
        coef[0] * cpow / e
    };
    let value = body + tail;
    let truncation_error = tail.abs() * misfit;
    if truncation_error > tail_tol * value.abs() {
        return Err(LabError::TailTooLarge { tail: truncation_error / value.abs(), tol: tail_tol });
    }
    Ok(ZetaSample { tau, value, cutoff, tail, truncation_error })
}

/// Exact Z(τ) for x² + y² − z² = m in this normalization: m^{−τ/2}·(π/√2)·B(½, (τ−1)/2).
pub fn zeta_closed_form(m: f64, tau: f64) -> f64 {
    use statrs::function::beta::beta;
    m.powf(-tau / 2.0) * PI / 2f64.sqrt() * beta(0.5, (tau - 1.0) / 2.0)
}

/// Pole diagnostics over a τ-grid approaching 1.
#[derive(Debug, Clone, Serialize)]
pub struct PoleDiagnostics {
    pub taus: Vec<f64>,
    pub z: Vec<f64>,
    pub z_log: Vec<f64>,
    /// Fitted order of the pole of Z (≈ 1).
    pub z_order: f64,
    /// Fitted order of the pole of Z_log (≈ 2).
    pub z_log_order: f64,
    /// Relative spread (max − min)/mean of (τ−1)·Z.
    pub z_residue_variation: f64,
    /// Relative spread of (τ−1)²·Z_log.
    pub z_log_residue_variation: f64,
    /// True when (τ−1)·Z_log increases as τ ↓ 1.
    pub z_log_simple_scaling_grows: bool,
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    (max - min) / (v.iter().sum::<f64>() / v.len() as f64)
}

/// Evaluates Z and Z_log over the τ-grid and fits the pole orders.
pub fn pole_diagnostics(problem: &TernaryQuadricProblem, taus: &[f64], cutoff: f64) -> Result<PoleDiagnostics> {
    let z = taus
        .par_iter()
        .map(|&t| height_zeta(problem, t, cutoff, false).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    let z_log = taus
        .par_iter()
        .map(|&t| height_zeta(problem, t, cutoff, true).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = taus.iter().map(|t| t - 1.0).collect();
    let res1: Vec<f64> = eps.iter().zip(&z).map(|(e, v)| e * v).collect();
    let res2: Vec<f64> = eps.iter().zip(&z_log).map(|(e, v)| e * e * v).collect();
    let simple: Vec<(f64, f64)> = eps.iter().zip(&z_log).map(|(e, v)| (*e, e * v)).collect();
    let mut sorted = simple.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grows = sorted.windows(2).all(|w| w[0].1 > w[1].1);
    Ok(PoleDiagnostics {
        taus: taus.to_vec(),
        z_order: -SeriesFit::power_law(&eps, &z).slope,
        z_log_order: -SeriesFit::power_law(&eps, &z_log).slope,
        z_residue_variation: spread(&res1),
        z_log_residue_variation: spread(&res2),
        z_log_simple_scaling_grows: grows,
        z,
        z_log,
    })
}

/// ∫ f dm over |u| ≤ u_max by tensor Gauss–Legendre with panel doubling until
/// successive estimates agree to `rel_tol`.
pub fn integrate_on_quadric<F: Fn(&[f64; 3]) -> f64 + Sync>(
    chart: &QuadricChart,
    f: F,
    u_max: f64,
    rel_tol: f64,
) -> Result<f64> {
    let rule = GaussRule::new(12);
    let estimate = |panels: usize| -> f64 {
        let du = 2.0 * u_max / panels as f64;
        let dth = 2.0 * PI / panels as f64;
        let cells: Vec<f64> = (0..panels * panels)
            .into_par_iter()
            .map(|cell| {
                let (iu, it) = (cell / panels, cell % panels);
                let (u0, t0) = (-u_max + iu as f64 * du, it as f64 * dth);
                rule.integrate(
                    |u| chart.density(u) * rule.integrate(|th| f(&chart.point(th, u)), t0, t0 + dth),
                    u0,
                    u0 + du,
                )
            })
            .collect();
        pairwise_sum(&cells)
    };
    let mut panels = 4;
    let mut prev = estimate(panels);
    for _ in 0..6 {
        panels *= 2;
        let next = estimate(panels);
        if (next - prev).abs() <= rel_tol * next.abs().max(1e-300) {
            return Ok(next);
        }
        prev = next;
    }
    Err(LabError::QuadratureDiverged(format!("no convergence with {panels}² panels")))
}
