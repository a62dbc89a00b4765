//! The diagonal-orbit identity at k = ℚ on Y = SL₂(ℝ)/SL₂(ℤ): fundamental-domain reduction,
//! K₀-invariant bumps, diagonal orbit integrals, the compactified-coordinate
//! function f_φ with its horocycle boundary values, the distributions 𝒟±,
//! and the residual check of the main identity.
//!
//! Conventions: K₀g ↦ g⁻¹·i identifies K₀\G with the upper half plane, so a
//! K₀-invariant φ on G/Γ is a Γ-invariant function Φ on ℍ with φ(g) = Φ(g⁻¹·i).
//! Under this identification the diagonal orbit a·h_t traces the Euclidean ray
//! {λ·w : λ > 0} with w = a⁻¹·i (λ = t⁻²), the closed U-orbit through h_{1/x}
//! is the horocycle Im z = x², and every Γ-image of a hyperbolic disc is a
//! Euclidean disc. Integrals along rays and horocycles are therefore computed
//! chord by chord over the images of the bump's support.

use std::cell::RefCell;
use std::collections::HashSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::group_kit::{a_matrix, RealMat2};
use crate::numerics::{adaptive, pairwise_sum, GaussRule, SeriesFit};

/// Default arc half-width ε₀ of the measure m_{ε₀}.
pub const DEFAULT_EPS0: f64 = 0.1;

/// Extra hyperbolic radius around the support within which bump images are
/// collected at every marching sample; it is also the marching step.
const MARCH_MARGIN: f64 = 0.5;

/// Dyadic windows above the split point used to fit the near-zero power law.
const NEAR_ZERO_WINDOWS: usize = 4;

/// Samples of ℱ − ∫φ per window.
const NEAR_ZERO_SAMPLES: usize = 9;

/// Cap on marching samples for one ray or horocycle.
const MARCH_BUDGET: usize = 50_000_000;

/// Integer 2×2 matrix.
pub type IntMat2 = [[i64; 2]; 2];

/// One step of the reduction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReductionStep {
    /// Translation z ↦ z + n.
    T(i64),
    /// Inversion z ↦ −1/z.
    S,
}

/// A point of the standard fundamental domain with the word that reached it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModularPoint {
    /// The reduced point (|Re z| ≤ ½, |z| ≥ 1).
    pub z: Complex64,
    /// Steps applied, in order, to the input point.
    pub word: Vec<ReductionStep>,
    /// γ ∈ SL₂(ℤ) with γ·(input) = z.
    pub matrix: IntMat2,
}

impl ModularPoint {
    /// Replays the inverse word on the reduced point, recovering the input.
    pub fn unreduce(&self) -> Complex64 {
        let mut z = self.z;
        for step in self.word.iter().rev() {
            z = match step {
                ReductionStep::T(n) => z - *n as f64,
                ReductionStep::S => -z.inv(),
            };
        }
        z
    }
}

/// Möbius action of an integer matrix.
pub fn mobius(m: &IntMat2, z: Complex64) -> Complex64 {
    let [[a, b], [c, d]] = *m;
    (z * a as f64 + b as f64) / (z * c as f64 + d as f64)
}

/// Möbius action of a real matrix.
pub fn mobius_real(m: &RealMat2, z: Complex64) -> Complex64 {
    (z * m[0][0] + m[0][1]) / (z * m[1][0] + m[1][1])
}

fn mat_mul(a: &IntMat2, b: &IntMat2) -> IntMat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn mat_inv(m: &IntMat2) -> IntMat2 {
    [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]
}

/// Reduces z into the standard fundamental domain by alternating T-shifts
/// and S-inversions.
pub fn reduce(z: Complex64) -> Result<ModularPoint> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(LabError::InvalidParameter(format!("reduce needs Im z > 0, got {z}")));
    }
    let mut z = z;
    let mut word = Vec::new();
    let mut matrix: IntMat2 = [[1, 0], [0, 1]];
    for _ in 0..10_000 {
        let n = z.re.round();
        if n != 0.0 {
            z -= n;
            let n = n as i64;
            word.push(ReductionStep::T(-n));
            matrix = mat_mul(&[[1, -n], [0, 1]], &matrix);
        }
        if z.norm_sqr() < 1.0 - 1e-15 {
            z = -z.inv();
            word.push(ReductionStep::S);
            matrix = mat_mul(&[[0, -1], [1, 0]], &matrix);
        } else {
            return Ok(ModularPoint { z, word, matrix });
        }
    }
    Err(LabError::MaxIterations(10_000))
}

/// Hyperbolic distance in ℍ.
pub fn hyperbolic_distance(z: Complex64, w: Complex64) -> f64 {
    2.0 * ((z - w).norm() / (2.0 * (z.im * w.im).sqrt())).asinh()
}

/// The C² quartic profile (1 − u)³(1 + 3u) on [0, 1], zero beyond.
pub fn profile(u: f64) -> f64 {
    if u < 1.0 {
        let v = 1.0 - u;
        v * v * v * (1.0 + 3.0 * u)
    } else {
        0.0
    }
}

/// A K₀-invariant bump: Φ(z) = profile(d(z, Γ·z₀)/ρ).
#[derive(Debug, Clone, Serialize)]
pub struct TestBump {
    pub center: Complex64,
    pub radius: f64,
    /// Lipschitz constant of Φ for the hyperbolic metric: 16/(9ρ).
    pub lipschitz: f64,
    /// Images of z₀ within ρ + margin of the fundamental domain.
    #[serde(skip)]
    neighbors: Vec<Complex64>,
    /// Largest height of the support on the fundamental domain.
    pub y_top: f64,
    /// Tabulated horocycle chord profile, present when the support discs around
    /// distinct orbit points are disjoint (horocycle averages are then lattice sums).
    #[serde(skip)]
    chord_profile: Option<ChordProfile>,
}

impl TestBump {
    /// A bump of hyperbolic radius 0 < ρ ≤ 1 around z₀ in the fundamental domain.
    pub fn new(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(LabError::InvalidParameter(format!("bump radius must lie in (0, 1], got {radius}")));
        }
        if !(center.im > 0.0 && center.re.abs() <= 0.5 + 1e-12 && center.norm() >= 1.0 - 1e-12) {
            return Err(LabError::InvalidParameter("bump center must lie in the fundamental domain".into()));
        }
        let reach = radius + MARCH_MARGIN;
        let neighbors = images_near_domain(center, reach);
        let y_top = neighbors.iter().map(|v| v.im * radius.exp()).fold(0.0, f64::max);
        // Distinct orbit points closer than 2ρ would make the support discs overlap.
        let separation = neighbors
            .iter()
            .map(|v| hyperbolic_distance(center, *v))
            .filter(|d| *d > 1e-9)
            .fold(f64::INFINITY, f64::min);
        let chord_profile =
            (separation > 2.0 * radius && 2.0 * radius <= reach).then(|| ChordProfile::new(radius));
        Ok(TestBump { center, radius, lipschitz: 16.0 / (9.0 * radius), neighbors, y_top, chord_profile })
    }

    /// True when the support discs around distinct orbit points Γ·z₀ are
    /// disjoint, so Φ is a sum of translates of one radial profile.
    pub fn has_disjoint_images(&self) -> bool {
        self.chord_profile.is_some()
    }

    /// Number of stored images of z₀ near the fundamental domain.
    pub fn neighbor_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Φ at a point of ℍ (Γ-invariant).
    pub fn phi_at(&self, z: Complex64) -> f64 {
        match reduce(z) {
            Ok(p) => self.phi_reduced(p.z),
            Err(_) => 0.0,
        }
    }

    fn nearest(&self, zf: Complex64) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, v) in self.neighbors.iter().enumerate() {
            let d = hyperbolic_distance(zf, *v);
            if d < best.0 {
                best = (d, i);
            }
        }
        best
    }

    fn phi_reduced(&self, zf: Complex64) -> f64 {
        profile(self.nearest(zf).0 / self.radius)
    }

    /// ∂Φ/∂y at z (y = Im z), from the nearest image of z₀.
    pub fn phi_dy(&self, z: Complex64) -> f64 {
        let Ok(p) = reduce(z) else { return 0.0 };
        let (d, i) = self.nearest(p.z);
        let u = d / self.radius;
        if u >= 1.0 {
            return 0.0;
        }
        let v = mobius(&mat_inv(&p.matrix), self.neighbors[i]);
        // cosh d = 1 + N/(2yY) with N = |z − v|²; profile′(u) = −12u(1 − u)².
        let (y, yy) = (z.im, v.im);
        let n = (z - v).norm_sqr();
        let dc_dy = (y - yy) / (y * yy) - n / (2.0 * y * y * yy);
        let ratio = if d < 1e-8 { 1.0 } else { d / d.sinh() };
        -12.0 * (1.0 - u) * (1.0 - u) * ratio / (self.radius * self.radius) * dc_dy
    }

    /// Candidate disc centers (images of z₀) within ρ + margin of z, in z's own coordinates.
    fn local_images(&self, z: Complex64) -> Vec<Complex64> {
        match reduce(z) {
            Ok(p) => {
                let back = mat_inv(&p.matrix);
                self.neighbors.iter().map(|v| mobius(&back, *v)).collect()
            }
            Err(_) => vec![],
        }
    }
}

/// Images γ·z₀ whose hyperbolic `reach`-neighbourhood meets the box
/// {|x| ≤ ½, y ≥ √3/2} containing the fundamental domain.
fn images_near_domain(z0: Complex64, reach: f64) -> Vec<Complex64> {
    let gens: [IntMat2; 3] = [[[0, -1], [1, 0]], [[1, 1], [0, 1]], [[1, -1], [0, 1]]];
    let key = |v: Complex64| ((v.re * 1e9).round() as i64, (v.im * 1e9).round() as i64);
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let mut frontier: Vec<IntMat2> = vec![[[1, 0], [0, 1]]];
    let mut out = Vec::new();
    let mut visited_mats: HashSet<IntMat2> = HashSet::new();
    for _depth in 0..=8 {
        let mut next = Vec::new();
        for m in frontier {
            if !visited_mats.insert(m) {
                continue;
            }
            let v = mobius(&m, z0);
            let near = v.re.abs() - v.im * reach.sinh() <= 0.5 && v.im * reach.exp() >= 3f64.sqrt() / 2.0;
            if near && seen.insert(key(v)) {
                out.push(v);
            }
            for g in &gens {
                next.push(mat_mul(g, &m));
            }
        }
        frontier = next;
    }
    out
}

/// ∫φ dm_Y for the Haar probability measure: hyperbolic-area quadrature over
/// the fundamental domain (dx dy/y²) divided by its area π/3.
pub fn haar_average(bump: &TestBump) -> Result<f64> {
    fundamental_domain_average(|z| bump.phi_reduced(z), bump.y_top, 1e-11)
}

/// (3/π)·∫ f dx dy/y² over the fundamental domain clipped to y ≤ y_top.
pub fn fundamental_domain_average<F: Fn(Complex64) -> f64>(f: F, y_top: f64, rel_tol: f64) -> Result<f64> {
    let failure: RefCell<Option<LabError>> = RefCell::new(None);
    let inner = |x: f64| {
        let y0 = (1.0 - x * x).sqrt();
        if y_top <= y0 {
            return 0.0;
        }
        match adaptive(|y| f(Complex64::new(x, y)) / (y * y), y0, y_top, rel_tol, 1e-14, 30) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let total = adaptive(inner, -0.5, 0.5, rel_tol, 1e-14, 30)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(3.0 / std::f64::consts::PI * total)
}

/// Intervals [lo, hi] merged where they overlap.
fn merge(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Euclidean disc of the hyperbolic ball B(v, ρ): center (Re v, Im v·cosh ρ), radius Im v·sinh ρ.
fn euclidean_disc(v: Complex64, rho: f64) -> (f64, f64, f64) {
    (v.re, v.im * rho.cosh(), v.im * rho.sinh())
}

/// Support chords of Φ on the ray {e^ℓ·e^{iα}}, in ℓ, within [lo, hi].
fn ray_chords(bump: &TestBump, alpha: f64, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    let dir = Complex64::from_polar(1.0, alpha);
    let step = MARCH_MARGIN * alpha.sin();
    let samples = ((hi - lo) / step).ceil() as usize + 1;
    if samples > MARCH_BUDGET {
        return Err(LabError::TruncationUnsafe(format!("{samples} marching samples exceed the budget")));
    }
    let chords: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .flat_map_iter(|k| {
            let l = (lo + k as f64 * step).min(hi);
            let mut local = Vec::new();
            for v in bump.local_images(dir * l.exp()) {
                let (cx, cy, r) = euclidean_disc(v, bump.radius);
                // |ρ e^{iα} − c|² = r² ⇔ ρ² − 2Bρ + |v|² = 0 (since cy² − r² = Im v²).
                let b = cx * alpha.cos() + cy * alpha.sin();
                let disc = b * b - v.norm_sqr();
                if b > 0.0 && disc > 0.0 {
                    let s = disc.sqrt();
                    let (r1, r2) = (v.norm_sqr() / (b + s), b + s);
                    let (a1, a2) = (r1.ln().max(lo), r2.ln().min(hi));
                    let _ = r;
                    if a1 < a2 {
                        local.push((a1, a2));
                    }
                }
            }
            local
        })
        .collect();
    Ok(merge(chords))
}

/// Support chords of Φ on the horocycle Im z = y, as sub-intervals of [0, 1].
fn horocycle_chords(bump: &TestBump, y: f64) -> Vec<(f64, f64)> {
    if y >= bump.y_top.max(1.0) {
        return vec![];
    }
    let step = MARCH_MARGIN * y;
    let samples = (1.0 / step).ceil() as usize + 1;
    let raw: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .flat_map_iter(|k| {
            let x = (k as f64 * step).min(1.0);
            let mut local = Vec::new();
            for v in bump.local_images(Complex64::new(x, y)) {
                let (cx, cy, r) = euclidean_disc(v, bump.radius);
                let h = r * r - (y - cy) * (y - cy);
                if h <= 0.0 {
                    continue;
                }
                let half = h.sqrt();
                if 2.0 * half >= 1.0 {
                    local.push((0.0, 1.0));
                    continue;
                }
                let (lo, hi) = (cx - half, cx + half);
                let shift = lo.floor();
                let (lo, hi) = (lo - shift, hi - shift);
                if hi <= 1.0 {
                    local.push((lo, hi));
                } else {
                    local.push((lo, 1.0));
                    local.push((0.0, hi - 1.0));
                }
            }
            local
        })
        .collect();
    merge(raw)
}

/// Integrates f over each chord. `amplitude` bounds |f| and `noise` is the relative
/// roundoff level of f; together they set the absolute tolerance, so nearly tangent
/// chords and points close to the real axis do not chase roundoff.
fn integrate_chords<F: Fn(f64) -> f64 + Sync>(chords: &[(f64, f64)], amplitude: f64, noise: f64, f: F) -> Result<f64> {
    let floor = amplitude * noise.max(1e-13);
    let parts = chords
        .par_iter()
        .map(|&(lo, hi)| adaptive(&f, lo, hi, 1e-10, floor * (hi - lo), 30))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&parts))
}

/// Relative roundoff of Φ at height y: reduction amplifies input rounding by ~1/y
/// and Φ turns it into a value error through its Lipschitz constant.
fn phi_noise(bump: &TestBump, y: f64) -> f64 {
    1e-15 * (1.0 + bump.lipschitz / y)
}

/// Relative roundoff of Φ along the ray e^ℓ·e^{iα}, ℓ ≥ lo: a point carries an
/// absolute error ~ε·|z| (plus ε·|ℓ| from the exponent), i.e. a hyperbolic
/// displacement ~ε·(1 + |ℓ|)/sin α once |z| ≥ 1, and ~ε/Im z below.
fn ray_noise(bump: &TestBump, alpha: f64, lo: f64) -> f64 {
    phi_noise(bump, alpha.sin() * lo.exp().min(1.0)) * (1.0 + lo.abs())
}

/// Height above which a point and its whole Γ-orbit miss the support.
fn escape_height(bump: &TestBump) -> f64 {
    bump.y_top.max(1.0) * (1.0 + 1e-12)
}

/// ∫₀^∞ φ(g·h_t·Γ) dt/t = ½∫ Φ(λ·w) dλ/λ with w = g⁻¹·i, truncated where the
/// ray enters the cusp regions at ∞ and at 0 beyond the support.
pub fn orbit_integral(bump: &TestBump, g: &RealMat2) -> Result<f64> {
    let w = mobius_real(&inv_real(g), Complex64::new(0.0, 1.0));
    let alpha = w.arg();
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(LabError::TruncationUnsafe("orbit direction is not in the upper half plane".into()));
    }
    let top = escape_height(bump);
    // Im(λw) > top near ∞, and Im(−1/(λw)) = sin α/ρ > top near the cusp 0.
    let hi = (top / alpha.sin()).ln();
    let lo = (alpha.sin() / top).ln();
    let chords = ray_chords(bump, alpha, lo, hi)?;
    let dir = Complex64::from_polar(1.0, alpha);
    let noise = ray_noise(bump, alpha, lo);
    Ok(0.5 * integrate_chords(&chords, 1.0, noise, |l| bump.phi_at(dir * l.exp()))?)
}

fn inv_real(g: &RealMat2) -> RealMat2 {
    let d = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [[g[1][1] / d, -g[0][1] / d], [-g[1][0] / d, g[0][0] / d]]
}

/// T_g = ‖g·e₁‖·‖g·e₂‖ for a real 2×2 matrix.
pub fn t_of(g: &RealMat2) -> f64 {
    g[0][0].hypot(g[1][0]) * g[0][1].hypot(g[1][1])
}

/// A point (x₁, x₂, a) of 𝒩₀ with a ∈ A ∪ {∞} (a = None means ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompactifiedCoord {
    pub x1: f64,
    pub x2: f64,
    pub a: Option<RealMat2>,
}

impl CompactifiedCoord {
    /// Interior point with a = a_s chosen so that x₁⁻¹x₂⁻¹ = ‖a·e₁‖·‖a·e₂‖.
    pub fn interior(x1: f64, x2: f64) -> Result<Self> {
        if !(x1 > 0.0 && x2 > 0.0 && x1 * x2 <= 1.0) {
            return Err(LabError::InvalidParameter("interior coordinates need x₁, x₂ > 0 and x₁x₂ ≤ 1".into()));
        }
        // T_{a_s} = (s² + s⁻²)/2.
        let t = 1.0 / (x1 * x2);
        let s = (t + (t * t - 1.0).max(0.0).sqrt()).sqrt();
        let a = a_matrix(Complex64::new(s, 0.0));
        Ok(CompactifiedCoord { x1, x2, a: Some([[a[0][0].re, a[0][1].re], [a[1][0].re, a[1][1].re]]) })
    }

    /// The coordinates (x₁(t, a), x₂(t, a), a).
    pub fn from_t(t: f64, a: RealMat2) -> Self {
        let n1 = a[0][0].hypot(a[1][0]);
        let n2 = a[0][1].hypot(a[1][1]);
        CompactifiedCoord { x1: 1.0 / (t * n1), x2: t / n2, a: Some(a) }
    }
}

/// f_φ(x₁, x₂, a) = (1/2ε₀)∫_{|ξ|<ε₀} φ(a·h_t·h_{e^ξ}·Γ) dξ with t recovered
/// from x₁ = t⁻¹/‖a·e₁‖; at a = ∞ the boundary values are returned.
pub fn f_eval(bump: &TestBump, coord: &CompactifiedCoord, eps0: f64) -> Result<f64> {
    let Some(a) = coord.a else {
        return match (coord.x1 > 0.0, coord.x2 > 0.0) {
            (true, false) => boundary_f(bump, coord.x1, BoundarySign::Plus, eps0),
            (false, true) => boundary_f(bump, coord.x2, BoundarySign::Minus, eps0),
            (false, false) => haar_average(bump),
            (true, true) => Err(LabError::InvalidParameter("a = ∞ needs x₁ = 0 or x₂ = 0".into())),
        };
    };
    if !(eps0 > 0.0) {
        return Err(LabError::InvalidParameter("ε₀ must be positive".into()));
    }
    let product = coord.x1 * coord.x2 * t_of(&a);
    if (product - 1.0).abs() > 1e-9 {
        return Err(LabError::CoordInconsistent(product - 1.0));
    }
    let n1 = a[0][0].hypot(a[1][0]);
    let t = 1.0 / (coord.x1 * n1);
    let w = mobius_real(&inv_real(&a), Complex64::new(0.0, 1.0));
    let alpha = w.arg();
    // Points λw with λ = e^{−2ξ}/t²; in ℓ = ln|λw| the window has width 4ε₀.
    let center = w.norm().ln() - 2.0 * t.ln();
    let (lo, hi) = (center - 2.0 * eps0, center + 2.0 * eps0);
    let chords = ray_chords(bump, alpha, lo, hi)?;
    let dir = Complex64::from_polar(1.0, alpha);
    let noise = ray_noise(bump, alpha, lo);
    Ok(integrate_chords(&chords, 1.0, noise, |l| bump.phi_at(dir * l.exp()))? / (4.0 * eps0))
}

/// Which closed horocycle family a boundary value uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundarySign {
    /// U-orbits, x = x₁.
    Plus,
    /// U⁻-orbits, x = x₂.
    Minus,
}

/// Intervals of the tabulated chord profile.
const CHORD_TABLE_SIZE: usize = 4096;

/// G(τ) = ∫_ℝ profile(d(u + i·e^τ, i)/ρ) du, the integral of one support disc
/// along a horocycle: a disc around a point of height Y meets the horocycle at
/// height y in a chord of weight √(yY)·G(ln(y/Y)). Tabulated with G′ on [0, ρ]
/// (G is even) and interpolated by cubic Hermite polynomials.
#[derive(Debug, Clone)]
struct ChordProfile {
    rho: f64,
    step: f64,
    g: Vec<f64>,
    dg: Vec<f64>,
    /// Cumulative integrals from −ρ of e^{τ/2}G, e^{τ/2}(½G + G′) and
    /// e^{τ/2}(½G + G′)·τ at the nodes −ρ + k·step, k = 0..=2N.
    cumulative: Vec<[f64; 3]>,
}

impl ChordProfile {
    fn new(rho: f64) -> Self {
        let rule = GaussRule::new(48);
        let step = rho / CHORD_TABLE_SIZE as f64;
        let mut g = vec![0.0; CHORD_TABLE_SIZE + 1];
        let mut dg = vec![0.0; CHORD_TABLE_SIZE + 1];
        for k in 0..CHORD_TABLE_SIZE {
            let tau = k as f64 * step;
            // cosh d = cosh τ + u²/2, so the chord ends at u² = 2(cosh ρ − cosh τ).
            let u_max = (2.0 * (rho.cosh() - tau.cosh())).sqrt();
            g[k] = 2.0 * rule.integrate(|u| profile((tau.cosh() + 0.5 * u * u).acosh() / rho), 0.0, u_max);
            dg[k] = 2.0
                * rule.integrate(
                    |u| {
                        let d = (tau.cosh() + 0.5 * u * u).acosh();
                        let w = d / rho;
                        let ratio = if d < 1e-12 { 1.0 } else { tau.sinh() / d.sinh() };
                        -12.0 * w * (1.0 - w) * (1.0 - w) / rho * ratio
                    },
                    0.0,
                    u_max,
                );
        }
        let mut table = ChordProfile { rho, step, g, dg, cumulative: vec![] };
        let mut acc = [0.0; 3];
        table.cumulative.push(acc);
        for k in 0..2 * CHORD_TABLE_SIZE {
            let a = -rho + k as f64 * step;
            let cell = table.cell_integrals(a, a + step);
            for j in 0..3 {
                acc[j] += cell[j];
            }
            table.cumulative.push(acc);
        }
        table
    }

    fn integrands(&self, tau: f64) -> [f64; 3] {
        let (g, dg) = self.eval(tau);
        let e = (0.5 * tau).exp();
        let d = e * (0.5 * g + dg);
        [e * g, d, d * tau]
    }

    /// The three integrands over [a, b] inside one table cell (8-point Gauss).
    fn cell_integrals(&self, a: f64, b: f64) -> [f64; 3] {
        const X: [f64; 4] = [0.1834346424956498, 0.525_532_409_916_329, 0.7966664774136267, 0.9602898564975363];
        const W: [f64; 4] = [0.362_683_783_378_362, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut out = [0.0; 3];
        for (x, w) in X.iter().zip(W) {
            for t in [mid - half * x, mid + half * x] {
                let v = self.integrands(t);
                for j in 0..3 {
                    out[j] += w * half * v[j];
                }
            }
        }
        out
    }

    fn cumulative_at(&self, tau: f64) -> [f64; 3] {
        let tau = tau.clamp(-self.rho, self.rho);
        let k = (((tau + self.rho) / self.step) as usize).min(2 * CHORD_TABLE_SIZE - 1);
        let node = -self.rho + k as f64 * self.step;
        let part = self.cell_integrals(node, tau);
        let base = self.cumulative[k];
        [base[0] + part[0], base[1] + part[1], base[2] + part[2]]
    }

    /// Integrals of the three integrands over [a, b] ⊂ [−ρ, ρ].
    fn window(&self, a: f64, b: f64) -> [f64; 3] {
        let (hi, lo) = (self.cumulative_at(b), self.cumulative_at(a));
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
    }

    /// (G(τ), G′(τ)).
    fn eval(&self, tau: f64) -> (f64, f64) {
        let a = tau.abs();
        if a >= self.rho {
            return (0.0, 0.0);
        }
        let k = ((a / self.step) as usize).min(CHORD_TABLE_SIZE - 1);
        let h = self.step;
        let t = (a - k as f64 * h) / h;
        let (p0, p1, m0, m1) = (self.g[k], self.g[k + 1], self.dg[k] * h, self.dg[k + 1] * h);
        let (t2, t3) = (t * t, t * t * t);
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let slope = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (value, if tau < 0.0 { -slope } else { slope })
    }
}

/// Order of the stabilizer of z in PSL₂(ℤ) for z in the closed fundamental domain.
pub(crate) fn stabilizer_order(z: Complex64) -> f64 {
    let omega_im = 3f64.sqrt() / 2.0;
    if (z - Complex64::new(0.0, 1.0)).norm() < 1e-9 {
        2.0
    } else if (z.re.abs() - 0.5).abs() < 1e-9 && (z.im - omega_im).abs() < 1e-9 {
        3.0
    } else {
        1.0
    }
}

/// Calls `f(Y)` for the heights Y = Im z₀/|c·z₀ + d|² of the orbit points γ·z₀,
/// one per coset of Γ∞\Γ (coprime (c, d) up to sign), with q = |c·z₀ + d|² in (q_lo, q_hi).
fn for_each_orbit_height<F: FnMut(f64)>(center: Complex64, q_lo: f64, q_hi: f64, mut f: F) {
    let (x0, y0) = (center.re, center.im);
    if 1.0 > q_lo && 1.0 < q_hi {
        f(y0);
    }
    let c_max = (q_hi.sqrt() / y0).floor() as i64;
    for c in 1..=c_max {
        let cf = c as f64;
        let base = cf * cf * y0 * y0;
        let hi = (q_hi - base).sqrt();
        let lo = (q_lo - base).max(0.0).sqrt();
        let shift = cf * x0;
        // (c·x₀ + d)² ∈ (lo², hi²): d in two windows around −c·x₀, merged when lo = 0.
        let windows = if lo == 0.0 {
            [(-shift - hi, -shift + hi), (1.0, 0.0)]
        } else {
            [(-shift - hi, -shift - lo), (-shift + lo, -shift + hi)]
        };
        for (a, b) in windows {
            for d in a.ceil() as i64..=b.floor() as i64 {
                if num_integer::gcd(c, d) != 1 {
                    continue;
                }
                let q = (cf * x0 + d as f64).powi(2) + base;
                if q > q_lo && q < q_hi {
                    f(y0 / q);
                }
            }
        }
    }
}

/// Unfolded horocycle average and its y-derivative: the chord weights
/// √(yY)·G(ln(y/Y)) of the support discs around the orbit points of height Y.
fn lattice_horocycle(bump: &TestBump, table: &ChordProfile, y: f64) -> (f64, f64) {
    let rho = bump.radius;
    let y0 = bump.center.im;
    // Heights Y within (y·e^{−ρ}, y·e^{ρ}).
    let (q_lo, q_hi) = (y0 * (-rho).exp() / y, y0 * rho.exp() / y);
    let mut value = 0.0;
    let mut slope = 0.0;
    for_each_orbit_height(bump.center, q_lo, q_hi, |big_y| {
        let (g, dg) = table.eval((y / big_y).ln());
        value += (y * big_y).sqrt() * g;
        slope += (big_y / y).sqrt() * (0.5 * g + dg);
    });
    let stab = stabilizer_order(bump.center);
    (value / stab, slope / stab)
}

/// The log-height integrals of the unfolded horocycle average over [y_lo, y_hi]:
/// (∫H dℓ, ∫H′(y)·y·ℓ dℓ) with ℓ = log y. In ℓ each disc contributes
/// Y·e^{τ/2}G(τ) with τ = ℓ − ln Y, so both integrals are lattice sums of
/// tabulated profile integrals.
fn lattice_log_integrals(bump: &TestBump, table: &ChordProfile, y_lo: f64, y_hi: f64) -> (f64, f64) {
    let rho = bump.radius;
    let y0 = bump.center.im;
    let (l_lo, l_hi) = (y_lo.ln(), y_hi.ln());
    let (q_lo, q_hi) = (y0 * (-rho).exp() / y_hi, y0 * rho.exp() / y_lo);
    let mut plain = 0.0;
    let mut weighted = 0.0;
    for_each_orbit_height(bump.center, q_lo, q_hi, |big_y| {
        let ly = big_y.ln();
        let (a, b) = ((l_lo - ly).max(-rho), (l_hi - ly).min(rho));
        if a < b {
            let [c0, c1, c2] = table.window(a, b);
            plain += big_y * c0;
            weighted += big_y * (c1 * ly + c2);
        }
    });
    let stab = stabilizer_order(bump.center);
    (plain / stab, weighted / stab)
}

/// ∫₀¹ Φ(r + iy) dr: the average over the closed horocycle at height y.
pub fn horocycle_average(bump: &TestBump, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(LabError::InvalidParameter(format!("horocycle height must be positive, got {y}")));
    }
    if let Some(table) = &bump.chord_profile {
        return Ok(lattice_horocycle(bump, table, y).0);
    }
    horocycle_average_marching(bump, y)
}

/// [`horocycle_average`] by marching along the horocycle and integrating Φ over
/// the support chords; valid for every bump.
pub fn horocycle_average_marching(bump: &TestBump, y: f64) -> Result<f64> {
    let chords = horocycle_chords(bump, y);
    integrate_chords(&chords, 1.0, phi_noise(bump, y), |x| bump.phi_at(Complex64::new(x, y)))
}

/// d/dy of [`horocycle_average`].
pub fn horocycle_average_dy(bump: &TestBump, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(LabError::InvalidParameter(format!("horocycle height must be positive, got {y}")));
    }
    if let Some(table) = &bump.chord_profile {
        return Ok(lattice_horocycle(bump, table, y).1);
    }
    horocycle_average_dy_marching(bump, y)
}

/// [`horocycle_average_dy`] by marching, integrating ∂Φ/∂y over the support chords.
pub fn horocycle_average_dy_marching(bump: &TestBump, y: f64) -> Result<f64> {
    let chords = horocycle_chords(bump, y);
    integrate_chords(&chords, 12.0 / (bump.radius * bump.radius * y), phi_noise(bump, y), |x| bump.phi_dy(Complex64::new(x, y)))
}

/// ∫₀¹ Φ(u⁻_{−r}·(i/y)) dr: the closed U⁻-horocycle based at the cusp 0. It is
/// carried to the horocycle Im z = y by S, so it reuses the same chords.
pub fn lower_horocycle_average(bump: &TestBump, y: f64) -> Result<f64> {
    horocycle_average(bump, y)
}

/// Boundary value of f_φ: the closed-horocycle average at height x²,
/// composed with the ε₀ arc average (ε₀ = 0 gives the bare average ℱ(φ)(x)).
pub fn boundary_f(bump: &TestBump, x: f64, sign: BoundarySign, eps0: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(LabError::InvalidParameter(format!("boundary value needs x > 0, got {x}")));
    }
    let family = |y: f64| match sign {
        BoundarySign::Plus => horocycle_average(bump, y),
        BoundarySign::Minus => lower_horocycle_average(bump, y),
    };
    if eps0 == 0.0 {
        return family(x * x);
    }
    let rule = GaussRule::new(24);
    let failure: RefCell<Option<LabError>> = RefCell::new(None);
    let v = rule.composite(
        |xi| match family(x * x * (-2.0 * xi).exp()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        -eps0,
        eps0,
        2,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(v / (2.0 * eps0))
}

/// Options for [`d_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DOptions {
    /// Arc half-width used inside the boundary values (0 = bare ℱ).
    pub eps0: f64,
    /// Split point ε: below it (ℱ − ∫φ) is replaced by a fitted power law. `None`
    /// picks 3·10⁻⁴ when the log-height integrals are lattice sums, otherwise
    /// min(0.01, ρ/15), small enough for the horocycles to resolve the bump.
    pub x_split: Option<f64>,
    /// Relative tolerance of the adaptive quadratures in log y.
    pub rel_tol: f64,
}

impl Default for DOptions {
    fn default() -> Self {
        DOptions { eps0: 0.0, x_split: None, rel_tol: 1e-9 }
    }
}

impl DOptions {
    /// The split point used for `bump`.
    pub fn split_for(&self, bump: &TestBump) -> f64 {
        self.x_split.unwrap_or_else(|| {
            if self.uses_lattice(bump) {
                3e-4
            } else {
                (bump.radius / 15.0).min(0.01)
            }
        })
    }

    fn uses_lattice(&self, bump: &TestBump) -> bool {
        self.eps0 == 0.0 && bump.chord_profile.is_some()
    }
}

/// The distributions 𝒟±(φ), each computed in two equivalent forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DConstants {
    /// ∫₀¹ (ℱ − ∫φ)/x dx + ∫₁^∞ ℱ/x dx with ℱ the U-horocycle values.
    pub d_plus: f64,
    /// Same with the U⁻-horocycle values.
    pub d_minus: f64,
    /// −∫₀^∞ ℱ′(x)·log x dx (integration by parts), U family.
    pub d_plus_ibp: f64,
    /// Same, U⁻ family.
    pub d_minus_ibp: f64,
    /// Fitted exponent of |ℱ − ∫φ| ~ x^δ near the split point.
    pub near_zero_exponent: f64,
    /// Split point ε actually used.
    pub x_split: f64,
    /// ∫φ dm_Y.
    pub haar: f64,
}

impl DConstants {
    /// 𝒟⁺ + 𝒟⁻.
    pub fn sum(&self) -> f64 {
        self.d_plus + self.d_minus
    }
}

/// Adaptive quadrature of a fallible integrand; the first error aborts the result.
fn adaptive_fallible<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, rel: f64, abs: f64) -> Result<f64> {
    let mut failure = None;
    let v = adaptive(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        rel,
        abs,
        30,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Evaluates 𝒟±(φ). In y = x² the forms read ½∫₀¹(H − c)dy/y + ½∫₁^∞ H dy/y and
/// −½∫₀^∞ H′(y)·log y dy, with H the horocycle average and c = ∫φ; below the
/// split point H − c is extrapolated by a power law fitted just above it. The U⁻
/// family is carried onto the U family by S (see [`lower_horocycle_average`]), so
/// the two distributions coincide and are evaluated once.
pub fn d_constants(bump: &TestBump, opts: &DOptions) -> Result<DConstants> {
    let x_split = opts.split_for(bump);
    if !(x_split > 0.0 && x_split < 0.5) {
        return Err(LabError::InvalidParameter("split point must lie in (0, 0.5)".into()));
    }
    let c = haar_average(bump)?;
    let eps0 = opts.eps0;
    let h = |y: f64| boundary_f(bump, y.sqrt(), BoundarySign::Plus, eps0);
    let h_dy = |y: f64| -> Result<f64> {
        if eps0 == 0.0 {
            return horocycle_average_dy(bump, y);
        }
        // d/dy of the arc-averaged value: average of H′ at y·e^{−2ξ} times e^{−2ξ}.
        let mut failure = None;
        let v = GaussRule::new(24).composite(
            |xi| {
                let f = (-2.0 * xi).exp();
                match horocycle_average_dy(bump, y * f) {
                    Ok(d) => d * f,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            -eps0,
            eps0,
            2,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(v / (2.0 * eps0)),
        }
    };
    let y_split = x_split * x_split;
    let y_top = (escape_height(bump) * (2.0 * eps0).exp()).max(1.0);
    let (la, lb) = (y_split.ln(), y_top.ln());
    // Form 1: ½∫ (H − c·1_{y<1}) dℓ; form 2: −½∫ H′(y)·y·ℓ dℓ; ℓ = log y over [ln ε², ln y_top].
    let (form1, form2) = match (&bump.chord_profile, opts.uses_lattice(bump)) {
        (Some(table), true) => {
            let (plain, weighted) = lattice_log_integrals(bump, table, y_split, y_top);
            (0.5 * (plain + c * la), -0.5 * weighted)
        }
        _ => {
            let abs = 1e-10 * c;
            let form1 = 0.5
                * (adaptive_fallible(|l| Ok(h(l.exp())? - c), la, 0.0, opts.rel_tol, abs)?
                    + adaptive_fallible(|l| h(l.exp()), 0.0, lb, opts.rel_tol, abs)?);
            let form2 =
                -0.5 * adaptive_fallible(|l| Ok(h_dy(l.exp())? * l.exp() * l), la, lb, opts.rel_tol, abs)?;
            (form1, form2)
        }
    };
    // Near-zero power law A·y^β. The deviation H − c oscillates, so β is fitted to
    // its envelope: the RMS over the dyadic x-windows [2ʲε, 2ʲ⁺¹ε], j < 4. A pins the
    // model to H(ε²) − c so it joins the quadrature continuously.
    let mut window_x = Vec::with_capacity(NEAR_ZERO_WINDOWS);
    let mut window_rms = Vec::with_capacity(NEAR_ZERO_WINDOWS);
    let mut at_split = 0.0;
    for j in 0..NEAR_ZERO_WINDOWS {
        let x_lo = x_split * 2f64.powi(j as i32);
        let mut sum_sq = 0.0;
        for k in 0..NEAR_ZERO_SAMPLES {
            let x = x_lo * 2f64.powf(k as f64 / (NEAR_ZERO_SAMPLES - 1) as f64);
            let r = h(x * x)? - c;
            if j == 0 && k == 0 {
                at_split = r;
            }
            sum_sq += r * r;
        }
        window_x.push(x_lo * 2f64.sqrt());
        window_rms.push((sum_sq / NEAR_ZERO_SAMPLES as f64).sqrt());
    }
    let fit = SeriesFit::power_law(&window_x, &window_rms);
    // Exponent in y = x².
    let beta = 0.5 * fit.slope;
    if fit.degenerate || !(beta > 0.0) {
        return Err(LabError::SlowConvergence(2.0 * beta));
    }
    // ½∫₀^{y_s} A y^{β−1} dy and −½∫₀^{y_s} Aβ y^{β−1} log y dy with A·y_s^β = H(y_s) − c.
    let tail1 = 0.5 * at_split / beta;
    let tail2 = -0.5 * at_split * (la - 1.0 / beta);
    let (d, d_ibp) = (form1 + tail1, form2 + tail2);
    Ok(DConstants {
        d_plus: d,
        d_minus: d,
        d_plus_ibp: d_ibp,
        d_minus_ibp: d_ibp,
        near_zero_exponent: 2.0 * beta,
        x_split,
        haar: c,
    })
}

/// One row of the main-identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremRow {
    pub s: f64,
    pub t: f64,
    pub orbit_integral: f64,
    pub log_term: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub residual: f64,
}

/// Residuals of ∫φ(a_s·h_t)dt/t = log T·∫φ + 𝒟⁺ + 𝒟⁻ over the s-list.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremCheck {
    pub rows: Vec<TheoremRow>,
    /// Power-law fit of |r(s)| against T_{a_s} (excluding T = 1).
    pub fit: SeriesFit,
}

/// Evaluates the residual table for a_s, s ∈ `s_list`.
pub fn theorem_check(bump: &TestBump, s_list: &[f64], d: &DConstants) -> Result<TheoremCheck> {
    let rows = s_list
        .iter()
        .map(|&s| {
            let a = a_matrix(Complex64::new(s, 0.0));
            let a = [[a[0][0].re, a[0][1].re], [a[1][0].re, a[1][1].re]];
            let t = t_of(&a);
            let oi = orbit_integral(bump, &a)?;
            let log_term = t.ln() * d.haar;
            Ok(TheoremRow {
                s,
                t,
                orbit_integral: oi,
                log_term,
                d_plus: d.d_plus,
                d_minus: d.d_minus,
                residual: oi - log_term - d.d_plus - d.d_minus,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<&TheoremRow> = rows.iter().filter(|r| r.t > 1.0 + 1e-12).collect();
    let fit = SeriesFit::power_law(
        &used.iter().map(|r| r.t).collect::<Vec<_>>(),
        &used.iter().map(|r| r.residual).collect::<Vec<_>>(),
    );
    Ok(TheoremCheck { rows, fit })
}

/// One rung of a decay ladder for f_φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub x1: f64,
    pub x2: f64,
    pub f: f64,
    /// The limit f_φ is compared with (boundary value or ∫φ).
    pub reference: f64,
    /// |f − reference|.
    pub gap: f64,
}

/// A decay ladder with its power-law fit of the gap against 1/x.
#[derive(Debug, Clone, Serialize)]
pub struct DecayStudy {
    pub rows: Vec<DecayRow>,
    pub fit: SeriesFit,
}

impl DecayStudy {
    fn new(rows: Vec<DecayRow>, scale: impl Fn(&DecayRow) -> f64) -> Self {
        let params: Vec<f64> = rows.iter().map(|r| 1.0 / scale(r)).collect();
        let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
        let fit = SeriesFit::power_law(&params, &gaps);
        DecayStudy { rows, fit }
    }

    /// Fitted exponent δ̂ of gap ~ x^δ̂.
    pub fn exponent(&self) -> f64 {
        self.fit.decay_exponent()
    }

    /// One-sided 95% lower confidence bound on δ̂.
    pub fn lower_bound(&self) -> f64 {
        self.fit.decay_lower_bound()
    }
}

/// Default focusing ladder x₂ = 10^{−k/2}, k = 3..=12.
pub fn focusing_ladder() -> Vec<f64> {
    (3..=12).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect()
}

/// Default generic ladder x₁ = x₂ = 10^{−k/4}, k = 4..=12.
pub fn generic_ladder() -> Vec<(f64, f64)> {
    (4..=12).map(|k| 10f64.powf(-(k as f64) / 4.0)).map(|x| (x, x)).collect()
}

/// Focusing regime x₁ > x₂^δ: the gap |f_φ(x₁, x₂, a) − f_φ(x₁, 0, ∞)| as x₂ → 0.
pub fn focusing_study(bump: &TestBump, x1: f64, x2_ladder: &[f64], eps0: f64, delta: f64) -> Result<DecayStudy> {
    let reference = boundary_f(bump, x1, BoundarySign::Plus, eps0)?;
    let rows = x2_ladder
        .iter()
        .map(|&x2| {
            if !(x1 > x2.powf(delta)) {
                return Err(LabError::InvalidParameter(format!("({x1}, {x2}) is not in the focusing regime")));
            }
            let f = f_eval(bump, &CompactifiedCoord::interior(x1, x2)?, eps0)?;
            Ok(DecayRow { x1, x2, f, reference, gap: (f - reference).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayStudy::new(rows, |r| r.x2))
}

/// Generic regime x₁ < x₂^δ, x₂ < x₁^δ: the gap |f_φ − ∫φ| against max(x₁, x₂).
pub fn generic_study(bump: &TestBump, ladder: &[(f64, f64)], eps0: f64, delta: f64) -> Result<DecayStudy> {
    let reference = haar_average(bump)?;
    let rows = ladder
        .iter()
        .map(|&(x1, x2)| {
            if !(x1 < x2.powf(delta) && x2 < x1.powf(delta)) {
                return Err(LabError::InvalidParameter(format!("({x1}, {x2}) is not in the generic regime")));
            }
            let f = f_eval(bump, &CompactifiedCoord::interior(x1, x2)?, eps0)?;
            Ok(DecayRow { x1, x2, f, reference, gap: (f - reference).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayStudy::new(rows, |r| r.x1.max(r.x2)))
}
