//! Eisenstein series over number fields of class number one: the lattice sums
//! E and E* with integral-comparison tails, the class-character inversion of
//! M(s), the Siegel-like transforms ℱ and 𝒢, residue and constant-term
//! extraction, and the constant c₂ at a point of the modular surface.
//!
//! Conventions: Ny(α, β; z) = ∏ y_i^{ε_i} / |σ_i(α)z_i + σ_i(β)|^{2ε_i} with
//! the classical denominator |αz + β|² = (σ(α)x + σ(β))² + σ(α)²y² (complex
//! places: |σ(α)x + σ(β)|² + |σ(α)|²y²), ε = 1 at real and 2 at complex places.
//! Sums run over pairs modulo units: over ℚ the pairs (c, d) ≠ 0 up to sign,
//! truncated to max(|c|, |d|) ≤ cutoff; over quadratic fields the pairs with
//! 1/Ny ≤ cutoff², restricted for real quadratic fields to a fundamental cone
//! of the unit action. Partial sums are reported without their tail, which is
//! estimated separately from the lattice-point density.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equidist_lab::{haar_average, horocycle_average, profile, stabilizer_order, TestBump};
use crate::error::{LabError, Result};
use crate::group_kit::RealMat2;
use crate::number_field::{FieldElement, FieldKind, NumberFieldSpec};
use crate::numerics::{
    adaptive, dirichlet_l, kronecker_symbol, least_squares, pairwise_sum, riemann_zeta, GaussRule,
};

/// A partial sum is rejected when its tail estimate exceeds this multiple of
/// it. The tails are accurate to relative order cutoff⁻², so sums close to the
/// pole at s = 1 remain usable even when most of their mass lies in the tail.
pub const MAX_TAIL_FRACTION: f64 = 4.0;

/// Smallest admissible distance of s from the pole at 1.
pub const S_MARGIN: f64 = 1e-3;

/// Default s-samples for the residue fit.
/// Samples close to the pole keep the bias of the three-term Laurent model
/// small (at z = 2i, samples spread over (1, 1.5] bias A by 1%).
pub const DEFAULT_RESIDUE_SAMPLES: [f64; 5] = [1.02, 1.04, 1.06, 1.08, 1.1];

/// Default cutoff for the E* sums entering the residue fit.
pub const DEFAULT_RESIDUE_CUTOFF: u64 = 2000;

/// The fitted residue A of E* at s = 1 equals this factor divided by the
/// hyperbolic area of SL₂(ℤ)\ℍ: the coprime pairs modulo ±1 index Γ∞\Γ, so
/// E*(z, s) = Σ Im(γz)^s and its residue is 1/vol.
pub const RESIDUE_CONVENTION: f64 = 1.0;

/// Largest height of the horocycle range [y_min, y_top] integrated numerically
/// in the ℱ side of the adjunction; below it ℱ is replaced by ∫φ dm_Y.
const ADJUNCTION_Y_MIN: f64 = 1e-3;

/// Euclidean cutoff for the 𝒢 sums at Monte-Carlo sample points.
const CALIBRATION_CUTOFF: f64 = 30.0;

/// A point of 𝐡_{k∞}: one point of 𝐡_ℝ per real place and one (x, y) ∈ ℂ × ℝ⁺
/// of 𝐡_ℂ per complex place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperHalfTuple {
    pub reals: Vec<Complex64>,
    pub complexes: Vec<(Complex64, f64)>,
}

impl UpperHalfTuple {
    /// Validated tuple; every height must be positive.
    pub fn new(reals: Vec<Complex64>, complexes: Vec<(Complex64, f64)>) -> Result<Self> {
        if reals.iter().any(|z| !(z.im > 0.0)) || complexes.iter().any(|(_, y)| !(*y > 0.0)) {
            return Err(LabError::InvalidParameter("every height of an upper-half tuple must be positive".into()));
        }
        Ok(UpperHalfTuple { reals, complexes })
    }

    /// The point z of the upper half plane, for k = ℚ.
    pub fn rational(z: Complex64) -> Result<Self> {
        Self::new(vec![z], vec![])
    }

    fn check(&self, field: &NumberFieldSpec) -> Result<()> {
        if self.reals.len() != field.l1 || self.complexes.len() != field.l2 {
            return Err(LabError::InvalidParameter(format!(
                "point has {} real and {} complex components, field needs {} and {}",
                self.reals.len(),
                self.complexes.len(),
                field.l1,
                field.l2
            )));
        }
        Ok(())
    }
}

/// 𝐍y(z) = ∏ y_i^{ε_i}.
pub fn big_ny(z: &UpperHalfTuple) -> f64 {
    z.reals.iter().map(|w| w.im).product::<f64>() * z.complexes.iter().map(|(_, y)| y * y).product::<f64>()
}

/// 𝐍y(α, β; z) with the classical |αz + β|² denominator.
pub fn ny_pair(field: &NumberFieldSpec, alpha: &FieldElement, beta: &FieldElement, z: &UpperHalfTuple) -> Result<f64> {
    z.check(field)?;
    if alpha.is_zero() && beta.is_zero() {
        return Err(LabError::ZeroPair);
    }
    let a = field.embed(alpha);
    let b = field.embed(beta);
    let mut value = 1.0;
    for (i, w) in z.reals.iter().enumerate() {
        let (sa, sb) = (a.reals[i], b.reals[i]);
        let q = (sa * w.re + sb).powi(2) + sa * sa * w.im * w.im;
        value *= w.im / q;
    }
    for (i, (x, y)) in z.complexes.iter().enumerate() {
        let (sa, sb) = (a.complexes[i], b.complexes[i]);
        let q = (sa * x + sb).norm_sqr() + sa.norm_sqr() * y * y;
        value *= (y / q).powi(2);
    }
    Ok(value)
}

/// Partial Eisenstein sum with its tail estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EisensteinSample {
    pub z: UpperHalfTuple,
    pub s: f64,
    /// The partial sum (monotone increasing in the cutoff).
    pub value: f64,
    pub cutoff: u64,
    /// Estimated contribution of the pairs beyond the cutoff.
    pub tail: f64,
}

impl EisensteinSample {
    /// Partial sum plus tail estimate.
    pub fn corrected(&self) -> f64 {
        self.value + self.tail
    }
}

/// E(z, s, O_k): the sum of Ny(α, β; z)^s over nonzero pairs modulo units.
pub fn e_partial(field: &NumberFieldSpec, z: &UpperHalfTuple, s: f64, cutoff: u64) -> Result<EisensteinSample> {
    eisenstein_sum(field, z, s, cutoff, false)
}

/// E*(z, s, O_k): the sum restricted to pairs with O_k·α + O_k·β = O_k.
pub fn estar_partial(field: &NumberFieldSpec, z: &UpperHalfTuple, s: f64, cutoff: u64) -> Result<EisensteinSample> {
    eisenstein_sum(field, z, s, cutoff, true)
}

fn eisenstein_sum(field: &NumberFieldSpec, z: &UpperHalfTuple, s: f64, cutoff: u64, primitive: bool) -> Result<EisensteinSample> {
    z.check(field)?;
    if !(s > 1.0 + S_MARGIN) {
        return Err(LabError::InvalidParameter(format!("Eisenstein sums need s > 1 + {S_MARGIN}, got {s}")));
    }
    if cutoff == 0 {
        return Err(LabError::InvalidParameter("cutoff must be positive".into()));
    }
    let (value, tail) = match field.kind {
        FieldKind::Rational => {
            let w = z.reals[0];
            let n = cutoff as i64;
            let value = primitive_rows(n, |_| n, primitive, |c, d| pow_s(w.im / form_q(w, c, d), s));
            let shape = rational_box_tail(w, s, 1.0);
            let tail = if primitive {
                primitive_box_tail(shape, s, cutoff, value)
            } else {
                shape * (cutoff as f64 + 0.5).powf(2.0 - 2.0 * s)
            };
            (value, tail)
        }
        FieldKind::Quadratic { .. } => {
            let ring = QuadRing::new(field)?;
            ring.sum(z, s, (cutoff as f64).powi(2), primitive)?
        }
    };
    if tail > MAX_TAIL_FRACTION * value {
        return Err(LabError::CutoffTooSmall { tail, tol: MAX_TAIL_FRACTION * value });
    }
    Ok(EisensteinSample { z: z.clone(), s, value, cutoff, tail })
}

/// |c·z + d|².
fn form_q(z: Complex64, c: i64, d: i64) -> f64 {
    let (c, d) = (c as f64, d as f64);
    (c * z.re + d).powi(2) + c * c * z.im * z.im
}

/// w^s with fast paths for integer and half-integer exponents.
fn pow_s(w: f64, s: f64) -> f64 {
    if s.fract() == 0.0 && s.abs() < 64.0 {
        w.powi(s as i32)
    } else if (2.0 * s).fract() == 0.0 && s.abs() < 64.0 {
        w.powi((s - 0.5) as i32) * w.sqrt()
    } else {
        w.powf(s)
    }
}

/// Σ term(c, d) over integer pairs modulo ±1 in rows c = 0..=rows with
/// |d| ≤ d_max(c) (d ≥ 1 on the row c = 0), optionally coprime only. Rows are
/// summed independently (coprimality by sieving the prime factors of c) and
/// reduced in a fixed tree order.
fn primitive_rows<D, F>(rows: i64, d_max: D, primitive: bool, term: F) -> f64
where
    D: Fn(i64) -> i64 + Sync,
    F: Fn(i64, i64) -> f64 + Sync,
{
    let row_sums: Vec<f64> = (0..=rows)
        .into_par_iter()
        .map(|c| {
            let dm = d_max(c);
            if dm < 0 {
                return 0.0;
            }
            if c == 0 {
                if primitive {
                    return if dm >= 1 { term(0, 1) } else { 0.0 };
                }
                let v: Vec<f64> = (1..=dm).map(|d| term(0, d)).collect();
                return pairwise_sum(&v);
            }
            let len = (2 * dm + 1) as usize;
            let mut blocked = vec![false; if primitive { len } else { 0 }];
            if primitive {
                for p in prime_factors(c) {
                    let mut i = (dm % p) as usize;
                    while i < len {
                        blocked[i] = true;
                        i += p as usize;
                    }
                }
            }
            let v: Vec<f64> = (0..len)
                .filter(|&i| !primitive || !blocked[i])
                .map(|i| term(c, i as i64 - dm))
                .collect();
            pairwise_sum(&v)
        })
        .collect();
    pairwise_sum(&row_sums)
}

fn prime_factors(mut n: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// ½ ∫_{‖v‖∞ > m} (y/Q(v))^s dv for Q(c, d) = |cz + d|²: the density-one tail
/// of the box sum modulo ±1, in polar coordinates (closed form in r). It is
/// homogeneous of degree 2 − 2s in m.
fn rational_box_tail(z: Complex64, s: f64, m: f64) -> f64 {
    let rule = GaussRule::new(16);
    let mut total = 0.0;
    for k in 0..8 {
        let (a, b) = (k as f64 * PI / 4.0, (k + 1) as f64 * PI / 4.0);
        total += rule.composite(
            |t| {
                let (c, d) = (t.cos(), t.sin());
                let q = (c * z.re + d).powi(2) + c * c * z.im * z.im;
                let rho = 1.0 / c.abs().max(d.abs());
                (z.im / q).powf(s) * (rho * m).powf(2.0 - 2.0 * s) / (2.0 * s - 2.0)
            },
            a,
            b,
            2,
        );
    }
    0.5 * total
}

/// Tail of the primitive box sum by Möbius inversion of the all-pairs tails:
/// with A(M) the sum over all pairs with ‖v‖∞ > M and G(M) the primitive one,
/// A(N) = Σ_k k^{−2s}·G(N/k), hence G(N) = Σ_k μ(k)·k^{−2s}·A(N/k). For k ≤ N,
/// A(N/k) ≈ shape·(⌊N/k⌋ + ½)^{2−2s} (midpoint shells); for k > N it is the
/// whole sum ζ(2s)·(value + G), which makes the relation linear in G.
fn primitive_box_tail(shape: f64, s: f64, cutoff: u64, value: f64) -> f64 {
    let n = cutoff as usize;
    let mu = mobius_table(n);
    let mut head = Vec::with_capacity(n);
    let mut partial_dirichlet = Vec::with_capacity(n);
    for k in 1..=n {
        if mu[k] == 0 {
            continue;
        }
        let w = mu[k] as f64 * (k as f64).powf(-2.0 * s);
        partial_dirichlet.push(w);
        head.push(w * shape * ((n / k) as f64 + 0.5).powf(2.0 - 2.0 * s));
    }
    let zeta = riemann_zeta(2.0 * s);
    // Σ_{k>N} μ(k)·k^{−2s} = 1/ζ(2s) − Σ_{k≤N} μ(k)·k^{−2s}.
    let rest = 1.0 / zeta - pairwise_sum(&partial_dirichlet);
    (pairwise_sum(&head) + rest * zeta * value) / (1.0 - rest * zeta)
}

/// Möbius function μ(0..=n) by a linear sieve.
fn mobius_table(n: usize) -> Vec<i8> {
    let mut mu = vec![1i8; n + 1];
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    if n >= 1 {
        mu[0] = 0;
    }
    for i in 2..=n {
        if !composite[i] {
            primes.push(i);
            mu[i] = -1;
        }
        for &p in &primes {
            if i * p > n {
                break;
            }
            composite[i * p] = true;
            if i % p == 0 {
                mu[i * p] = 0;
                break;
            }
            mu[i * p] = -mu[i];
        }
    }
    mu
}

/// The ring of integers ℤ[ω] of a quadratic field, ω² = t·ω + n, with the
/// float embeddings of ω and the unit data used by the lattice sums.
struct QuadRing {
    t: i64,
    n: i64,
    disc: i64,
    /// σ₁(ω), σ₂(ω) for real fields; ω (the complex place) for imaginary ones.
    omega: [Complex64; 2],
    real: bool,
    /// ln ε of the fundamental unit (real fields).
    log_unit: f64,
    /// Number of roots of unity.
    roots_of_unity: f64,
}

type QElt = (i64, i64);

impl QuadRing {
    fn new(field: &NumberFieldSpec) -> Result<Self> {
        let FieldKind::Quadratic { d } = field.kind else {
            return Err(LabError::Unsupported("quadratic ring requested for ℚ".into()));
        };
        let (t, n) = if d.rem_euclid(4) == 1 { (1, (d - 1) / 4) } else { (0, d) };
        let disc = field.discriminant();
        let root = (d.abs() as f64).sqrt();
        let tf = t as f64 / 2.0;
        let scale = if t == 1 { 0.5 } else { 1.0 };
        let real = d > 0;
        let omega = if real {
            [Complex64::new(tf + scale * root, 0.0), Complex64::new(tf - scale * root, 0.0)]
        } else {
            [Complex64::new(tf, scale * root), Complex64::new(tf, -scale * root)]
        };
        let log_unit = if real {
            let u = &field.fundamental_units[0];
            let c: Vec<f64> = u.coords.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
            (c[0] + c[1] * omega[0].re).abs().ln().abs()
        } else {
            0.0
        };
        let roots_of_unity = match d {
            -1 => 4.0,
            -3 => 6.0,
            _ => 2.0,
        };
        Ok(QuadRing { t, n, disc, omega, real, log_unit, roots_of_unity })
    }

    fn sigma(&self, a: QElt, place: usize) -> Complex64 {
        a.0 as f64 + a.1 as f64 * self.omega[place]
    }

    fn norm(&self, a: QElt) -> i128 {
        let (x, y) = (a.0 as i128, a.1 as i128);
        x * x + self.t as i128 * x * y - self.n as i128 * y * y
    }

    fn mul(&self, a: QElt, b: QElt) -> (i128, i128) {
        let (a0, a1, b0, b1) = (a.0 as i128, a.1 as i128, b.0 as i128, b.1 as i128);
        let bd = a1 * b1;
        (a0 * b0 + bd * self.n as i128, a0 * b1 + a1 * b0 + bd * self.t as i128)
    }

    fn conj(&self, a: QElt) -> QElt {
        (a.0 + self.t * a.1, -a.1)
    }

    /// Remainder of a Euclidean division a = q·b + r with |N(r)| < |N(b)|.
    fn rem(&self, a: QElt, b: QElt) -> Result<QElt> {
        let nb = self.norm(b);
        let num = self.mul(a, self.conj(b));
        let (x, y) = (num.0 as f64 / nb as f64, num.1 as f64 / nb as f64);
        let mut best: Option<(i128, QElt)> = None;
        for qx in [x.floor(), x.ceil()] {
            for qy in [y.floor(), y.ceil()] {
                let qb = self.mul((qx as i64, qy as i64), b);
                let r = (a.0 - qb.0 as i64, a.1 - qb.1 as i64);
                let nr = self.norm(r).abs();
                if best.is_none_or(|(bn, _)| nr < bn) {
                    best = Some((nr, r));
                }
            }
        }
        let (nr, r) = best.expect("four candidates");
        if nr >= nb.abs() {
            return Err(LabError::Unsupported(format!(
                "ℚ(√d) with discriminant {} is not norm-Euclidean; primitive pairs need a Euclidean ring",
                self.disc
            )));
        }
        Ok(r)
    }

    /// True when α and β generate the unit ideal.
    fn coprime(&self, a: QElt, b: QElt) -> Result<bool> {
        let (mut a, mut b) = (a, b);
        while b != (0, 0) {
            let r = self.rem(a, b)?;
            a = b;
            b = r;
        }
        Ok(self.norm(a).abs() == 1)
    }

    /// Dedekind zeta ζ_k(σ) = ζ(σ)·L(σ, (D/·)).
    fn dedekind_zeta(&self, sigma: f64) -> f64 {
        let disc = self.disc;
        riemann_zeta(sigma) * dirichlet_l(sigma, disc.unsigned_abs(), |m| kronecker_symbol(disc, m) as f64)
    }

    /// Σ Ny^s over pairs modulo units with 1/Ny ≤ x_max, and the tail κ·X^{1−s}/(s−1)
    /// where κ is the density of such pairs per unit of 1/Ny.
    fn sum(&self, z: &UpperHalfTuple, s: f64, x_max: f64, primitive: bool) -> Result<(f64, f64)> {
        let (value, kappa) = if self.real { self.sum_real(z, s, x_max, primitive)? } else { self.sum_imag(z, s, x_max, primitive)? };
        let density = if primitive { 1.0 / self.dedekind_zeta(2.0) } else { 1.0 };
        Ok((value, density * kappa * x_max.powf(1.0 - s) / (s - 1.0)))
    }

    fn sum_imag(&self, z: &UpperHalfTuple, s: f64, x_max: f64, primitive: bool) -> Result<(f64, f64)> {
        let (x, y) = z.complexes[0];
        let im_w = self.omega[0].im;
        let re_w = self.omega[0].re;
        // |αx + β|² + |α|²y² ≤ R ⇔ 1/Ny ≤ x_max.
        let r_big = y * x_max.sqrt();
        let a_max = r_big.sqrt() / y;
        let b_lim = (a_max / im_w).floor() as i64;
        let alphas: Vec<QElt> = (-b_lim..=b_lim)
            .flat_map(|b| {
                let h = (a_max * a_max - (b as f64 * im_w).powi(2)).max(0.0).sqrt();
                let lo = (-h - b as f64 * re_w).ceil() as i64;
                let hi = (h - b as f64 * re_w).floor() as i64;
                (lo..=hi).map(move |a| (a, b))
            })
            .collect();
        let rows: Vec<Result<f64>> = alphas
            .par_iter()
            .map(|&alpha| {
                let sa = self.sigma(alpha, 0);
                let r2 = r_big - sa.norm_sqr() * y * y;
                if r2 < 0.0 {
                    return Ok(0.0);
                }
                let r = r2.sqrt();
                let m = -sa * x;
                let d_lo = ((m.im - r) / im_w).ceil() as i64;
                let d_hi = ((m.im + r) / im_w).floor() as i64;
                let mut terms = Vec::new();
                for d in d_lo..=d_hi {
                    let h = (r2 - (d as f64 * im_w - m.im).powi(2)).max(0.0).sqrt();
                    let c_lo = (m.re - d as f64 * re_w - h).ceil() as i64;
                    let c_hi = (m.re - d as f64 * re_w + h).floor() as i64;
                    for c in c_lo..=c_hi {
                        let beta = (c, d);
                        if alpha == (0, 0) && beta == (0, 0) {
                            continue;
                        }
                        let q = (sa * x + self.sigma(beta, 0)).norm_sqr() + sa.norm_sqr() * y * y;
                        if q > r_big {
                            continue;
                        }
                        if primitive && !self.coprime(alpha, beta)? {
                            continue;
                        }
                        terms.push(pow_s(y / q, 2.0 * s));
                    }
                }
                Ok(pairwise_sum(&terms))
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<f64>>>()?;
        let covol = (self.disc.abs() as f64).sqrt() / 2.0;
        let kappa = PI * PI / (2.0 * covol * covol * self.roots_of_unity);
        Ok((pairwise_sum(&rows) / self.roots_of_unity, kappa))
    }

    fn sum_real(&self, z: &UpperHalfTuple, s: f64, x_max: f64, primitive: bool) -> Result<(f64, f64)> {
        let (z1, z2) = (z.reals[0], z.reals[1]);
        let (w1, w2) = (self.omega[0].re, self.omega[1].re);
        // Fundamental cone of the unit action: |ln(p₁/p₂)| ≤ 2 ln ε (half-open).
        let half_width = 2.0 * self.log_unit;
        let p_max = x_max.sqrt() * self.log_unit.exp();
        let a1 = (p_max / z1.im).sqrt();
        let a2 = (p_max / z2.im).sqrt();
        let gap = w1 - w2;
        let b_lim = ((a1 + a2) / gap).floor() as i64;
        let alphas: Vec<QElt> = (-b_lim..=b_lim)
            .flat_map(|b| {
                let bf = b as f64;
                let lo = (-a1 - bf * w1).max(-a2 - bf * w2).ceil() as i64;
                let hi = (a1 - bf * w1).min(a2 - bf * w2).floor() as i64;
                (lo..=hi).map(move |a| (a, b))
            })
            .collect();
        let rows: Vec<Result<f64>> = alphas
            .par_iter()
            .map(|&alpha| {
                let (s1, s2) = (self.sigma(alpha, 0).re, self.sigma(alpha, 1).re);
                let r1sq = z1.im * (p_max - s1 * s1 * z1.im);
                let r2sq = z2.im * (p_max - s2 * s2 * z2.im);
                if r1sq < 0.0 || r2sq < 0.0 {
                    return Ok(0.0);
                }
                let (r1, r2) = (r1sq.sqrt(), r2sq.sqrt());
                let (m1, m2) = (-s1 * z1.re, -s2 * z2.re);
                let d_lo = ((m1 - r1 - m2 - r2) / gap).ceil() as i64;
                let d_hi = ((m1 + r1 - m2 + r2) / gap).floor() as i64;
                let mut terms = Vec::new();
                for d in d_lo..=d_hi {
                    let df = d as f64;
                    let c_lo = (m1 - r1 - df * w1).max(m2 - r2 - df * w2).ceil() as i64;
                    let c_hi = (m1 + r1 - df * w1).min(m2 + r2 - df * w2).floor() as i64;
                    for c in c_lo..=c_hi {
                        let beta = (c, d);
                        if alpha == (0, 0) && beta == (0, 0) {
                            continue;
                        }
                        let (b1, b2) = (self.sigma(beta, 0).re, self.sigma(beta, 1).re);
                        let p1 = ((s1 * z1.re + b1).powi(2) + s1 * s1 * z1.im * z1.im) / z1.im;
                        let p2 = ((s2 * z2.re + b2).powi(2) + s2 * s2 * z2.im * z2.im) / z2.im;
                        let ratio = (p1 / p2).ln();
                        if p1 * p2 > x_max || ratio < -half_width || ratio >= half_width {
                            continue;
                        }
                        if primitive && !self.coprime(alpha, beta)? {
                            continue;
                        }
                        terms.push(pow_s(1.0 / (p1 * p2), s));
                    }
                }
                Ok(pairwise_sum(&terms))
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<f64>>>()?;
        // Volume of {1/Ny ≤ X} in the cone is π²·(2·half_width)·X/2 over covolume D, modulo ±1.
        let kappa = PI * PI * half_width / (2.0 * self.disc as f64);
        Ok((pairwise_sum(&rows) / 2.0, kappa))
    }
}

/// ζ_k(σ) for ℚ or a quadratic field.
pub fn dedekind_zeta(field: &NumberFieldSpec, sigma: f64) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(LabError::InvalidParameter(format!("ζ_k(σ) needs σ > 1, got {sigma}")));
    }
    match field.kind {
        FieldKind::Rational => Ok(riemann_zeta(sigma)),
        FieldKind::Quadratic { .. } => Ok(QuadRing::new(field)?.dedekind_zeta(sigma)),
    }
}

/// The reporting multiplier G_k(2s) = |disc|·π^{−s·l}·Γ(s)^{l₁}·Γ(2s)^{l₂}, l = l₁ + l₂.
pub fn gamma_multiplier(field: &NumberFieldSpec, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let l = field.places() as f64;
    field.discriminant().unsigned_abs() as f64
        * PI.powf(-s * l)
        * gamma(s).powi(field.l1 as i32)
        * gamma(2.0 * s).powi(field.l2 as i32)
}

/// Ideal-class data: labels and the character table χ_λ(𝔎_j) (row λ, column j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGroupData {
    pub h: usize,
    pub labels: Vec<String>,
    pub characters: Vec<Vec<Complex64>>,
}

impl ClassGroupData {
    /// Validated class data: an h×h table whose rows are orthonormal under
    /// ⟨χ, θ⟩ = (1/h)·Σ_j χ(𝔎_j)·conj θ(𝔎_j).
    pub fn new(labels: Vec<String>, characters: Vec<Vec<Complex64>>) -> Result<Self> {
        let data = ClassGroupData { h: labels.len(), labels, characters };
        data.validate()?;
        Ok(data)
    }

    /// Checks shape and orthonormality (used after deserialisation too).
    pub fn validate(&self) -> Result<()> {
        let h = self.h;
        if h == 0 || self.labels.len() != h || self.characters.len() != h || self.characters.iter().any(|r| r.len() != h) {
            return Err(LabError::InvalidParameter(format!("character table must be {h}×{h} with {h} labels")));
        }
        for (l, chi) in self.characters.iter().enumerate() {
            for (m, theta) in self.characters.iter().enumerate() {
                let ip: Complex64 = chi.iter().zip(theta).map(|(a, b)| a * b.conj()).sum::<Complex64>() / h as f64;
                let want = if l == m { 1.0 } else { 0.0 };
                if (ip - want).norm() > 1e-9 {
                    return Err(LabError::InvalidParameter(format!("characters {l} and {m} are not orthonormal")));
                }
            }
        }
        Ok(())
    }

    /// Class number one.
    pub fn trivial() -> Self {
        ClassGroupData { h: 1, labels: vec!["O_k".into()], characters: vec![vec![Complex64::new(1.0, 0.0)]] }
    }

    /// The character table of a cyclic class group of order h.
    pub fn cyclic(h: usize) -> Result<Self> {
        if h == 0 {
            return Err(LabError::InvalidParameter("class number must be positive".into()));
        }
        let characters = (0..h)
            .map(|l| (0..h).map(|j| Complex64::from_polar(1.0, 2.0 * PI * (l * j) as f64 / h as f64)).collect())
            .collect();
        Ok(ClassGroupData { h, labels: (0..h).map(|j| format!("K{j}")).collect(), characters })
    }

    fn check_l_values(&self, l_values: &[Complex64]) -> Result<()> {
        if l_values.len() != self.h {
            return Err(LabError::InvalidParameter(format!("need {} L-values, got {}", self.h, l_values.len())));
        }
        if let Some(i) = l_values.iter().position(|l| l.norm() < 1e-12) {
            return Err(LabError::SingularL(i));
        }
        Ok(())
    }

    /// M(s)_{ij} = (1/h)·Σ_λ L(2s, χ_λ⁻¹)·χ_λ(𝔎_i)·χ_λ(𝔎_j)⁻¹, with l_values[λ] = L(2s, χ_λ⁻¹).
    pub fn m_matrix(&self, l_values: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        self.check_l_values(l_values)?;
        Ok(self.weighted(|l| l_values[l]))
    }

    /// M(s)⁻¹_{ij} = (1/h)·Σ_λ χ_λ(𝔎_i)·χ_λ(𝔎_j)⁻¹ / L(2s, χ_λ⁻¹).
    pub fn m_inverse(&self, l_values: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        self.check_l_values(l_values)?;
        Ok(self.weighted(|l| 1.0 / l_values[l]))
    }

    fn weighted<W: Fn(usize) -> Complex64>(&self, w: W) -> Vec<Vec<Complex64>> {
        let h = self.h;
        (0..h)
            .map(|i| {
                (0..h)
                    .map(|j| {
                        (0..h).map(|l| w(l) * self.characters[l][i] * self.characters[l][j].conj()).sum::<Complex64>()
                            / h as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// E* per class from E per class: E* = M(s)⁻¹·E (for h = 1 a division by ζ_k(2s)).
pub fn class_transform(e_values: &[Complex64], l_values: &[Complex64], data: &ClassGroupData) -> Result<Vec<Complex64>> {
    if e_values.len() != data.h {
        return Err(LabError::InvalidParameter(format!("need {} class values, got {}", data.h, e_values.len())));
    }
    let inv = data.m_inverse(l_values)?;
    Ok(inv.iter().map(|row| row.iter().zip(e_values).map(|(m, e)| m * e).sum()).collect())
}

/// The built-in L-values for class number one: [ζ_k(2s)].
pub fn principal_l_values(field: &NumberFieldSpec, s: f64) -> Result<Vec<Complex64>> {
    Ok(vec![Complex64::new(dedekind_zeta(field, 2.0 * s)?, 0.0)])
}

/// A value of 𝒢(f) with its tail estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SiegelSample {
    pub value: f64,
    pub tail: f64,
    pub cutoff: f64,
}

impl SiegelSample {
    /// Partial sum plus tail estimate.
    pub fn corrected(&self) -> f64 {
        self.value + self.tail
    }
}

/// 𝒢(f)([g]) = Σ f(‖g·(c, d)ᵀ‖⁻¹) over primitive (c, d) modulo ±1 with
/// ‖(c, d)‖ ≤ cutoff. The tail is (1/ζ(2))·½∫_{‖v‖>R} f(‖gv‖⁻¹) dv, whose radial
/// part is integrated numerically over 60 e-folds; f must be O(x^{2+margin}).
pub fn siegel_g<F: Fn(f64) -> f64 + Sync>(f: F, g: &RealMat2, cutoff: f64) -> Result<SiegelSample> {
    let value = siegel_sum(&f, g, cutoff)?;
    let tail = siegel_tail(g, cutoff, |t_lo| {
        adaptive(|u| f((-u).exp()) * (2.0 * u).exp(), t_lo.ln(), t_lo.ln() + 60.0, 1e-8, 1e-300, 40)
    })?;
    finish_siegel(value, tail, cutoff)
}

/// [`siegel_g`] for f(x) = x^k (k > 2), with the radial tail in closed form.
pub fn siegel_g_power(k: f64, g: &RealMat2, cutoff: f64) -> Result<SiegelSample> {
    if !(k > 2.0) {
        return Err(LabError::InvalidParameter(format!("𝒢(x^k) converges only for k > 2, got {k}")));
    }
    let value = siegel_sum(&|x: f64| pow_s(x, k), g, cutoff)?;
    let tail = siegel_tail(g, cutoff, |t_lo| Ok(t_lo.powf(2.0 - k) / (k - 2.0)))?;
    finish_siegel(value, tail, cutoff)
}

fn finish_siegel(value: f64, tail: f64, cutoff: f64) -> Result<SiegelSample> {
    if tail.abs() > MAX_TAIL_FRACTION * value.abs() && tail != 0.0 {
        return Err(LabError::CutoffTooSmall { tail: tail.abs(), tol: MAX_TAIL_FRACTION * value.abs() });
    }
    Ok(SiegelSample { value, tail, cutoff })
}

fn siegel_sum<F: Fn(f64) -> f64 + Sync>(f: &F, g: &RealMat2, cutoff: f64) -> Result<f64> {
    if !(cutoff >= 1.0) {
        return Err(LabError::InvalidParameter(format!("cutoff must be at least 1, got {cutoff}")));
    }
    let r2 = cutoff * cutoff;
    let rows = cutoff.floor() as i64;
    Ok(primitive_rows(
        rows,
        |c| (r2 - (c * c) as f64).max(0.0).sqrt().floor() as i64,
        true,
        |c, d| {
            let (c, d) = (c as f64, d as f64);
            let v0 = g[0][0] * c + g[0][1] * d;
            let v1 = g[1][0] * c + g[1][1] * d;
            f(1.0 / (v0 * v0 + v1 * v1).sqrt())
        },
    ))
}

/// (1/ζ(2))·∫₀^π ‖g·u_θ‖⁻² I(R‖g·u_θ‖) dθ with I(T) = ∫_T^∞ f(1/t)·t dt.
fn siegel_tail<I: Fn(f64) -> Result<f64>>(g: &RealMat2, cutoff: f64, radial: I) -> Result<f64> {
    let rule = GaussRule::new(16);
    let mut err = None;
    let mut total = 0.0;
    for k in 0..4 {
        let (a, b) = (k as f64 * PI / 4.0, (k + 1) as f64 * PI / 4.0);
        total += rule.integrate(
            |t| {
                let (c, d) = (t.cos(), t.sin());
                let n = ((g[0][0] * c + g[0][1] * d).powi(2) + (g[1][0] * c + g[1][1] * d).powi(2)).sqrt();
                match radial(cutoff * n) {
                    Ok(v) => v / (n * n),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            },
            a,
            b,
        );
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total / riemann_zeta(2.0)),
    }
}

/// A matrix g with g⁻¹·i = z.
pub fn section(z: Complex64) -> RealMat2 {
    let r = z.im.sqrt();
    [[1.0 / r, -z.re / r], [0.0, r]]
}

/// Fit of E* samples against A/(s−1) + B + C·(s−1).
#[derive(Debug, Clone, Serialize)]
pub struct ResidueFit {
    /// Residue coefficient A (≘ ½·c₋₁).
    pub a: f64,
    /// Constant term B (≘ c₀(z)).
    pub b: f64,
    pub c: f64,
    /// Standard errors of (A, B, C).
    pub std_errors: [f64; 3],
    pub condition_number: f64,
    pub s_samples: Vec<f64>,
    pub values: Vec<f64>,
}

/// Least-squares fit of given E* values.
pub fn residue_fit_values(s_samples: &[f64], values: &[f64]) -> Result<ResidueFit> {
    if s_samples.len() < 4 || s_samples.len() != values.len() {
        return Err(LabError::InvalidParameter("residue fit needs at least 4 (s, value) samples".into()));
    }
    if s_samples.iter().any(|&s| !(s > 1.0 && s <= 1.5)) {
        return Err(LabError::InvalidParameter("residue fit samples must lie in (1, 1.5]".into()));
    }
    let rows: Vec<Vec<f64>> = s_samples.iter().map(|&s| vec![1.0 / (s - 1.0), 1.0, s - 1.0]).collect();
    let ls = least_squares(&rows, values, 1e8)?;
    Ok(ResidueFit {
        a: ls.coefficients[0],
        b: ls.coefficients[1],
        c: ls.coefficients[2],
        std_errors: [ls.std_errors[0], ls.std_errors[1], ls.std_errors[2]],
        condition_number: ls.condition_number,
        s_samples: s_samples.to_vec(),
        values: values.to_vec(),
    })
}

/// Residue fit of the tail-corrected E*(z, s) over ℚ.
pub fn residue_fit(z: Complex64, s_samples: &[f64], cutoff: u64) -> Result<ResidueFit> {
    let field = NumberFieldSpec::rational();
    let point = UpperHalfTuple::rational(z)?;
    let values = s_samples
        .iter()
        .map(|&s| estar_partial(&field, &point, s, cutoff).map(|e| e.corrected()))
        .collect::<Result<Vec<f64>>>()?;
    residue_fit_values(s_samples, &values)
}

/// Hyperbolic area of the fundamental domain {|x| ≤ ½, |z| ≥ 1} by a
/// two-dimensional Gauss rule (y = √(1−x²)/t maps the strip to t ∈ (0, 1]).
pub fn fundamental_domain_volume() -> f64 {
    let rule = GaussRule::new(32);
    rule.composite(
        |x| {
            let y0 = (1.0 - x * x).sqrt();
            // dy/y² = dt/y0 under y = y0/t.
            rule.integrate(|_t| 1.0 / y0, 0.0, 1.0)
        },
        -0.5,
        0.5,
        4,
    )
}

/// Monte-Carlo calibration of c_G⁺ from the adjunction
/// ∫ℱ(φ)(x)·f(x)·x⁻²dx/x = c_G⁺·∫φ·𝒢(f) dm_Y with f(x) = x^{s+2}.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub s: f64,
    /// Left side, by quadrature of horocycle averages.
    pub lhs: f64,
    /// Monte-Carlo estimate of ∫φ·𝒢(f) dm_Y and its standard error.
    pub rhs: f64,
    pub rhs_std_error: f64,
    pub samples: usize,
    pub seed: u64,
    /// c_G⁺ = lhs/rhs and its standard error.
    pub estimate: f64,
    pub std_error: f64,
}

/// ∫₀^∞ ℱ(φ)(x)·x^{s+2}·x⁻²dx/x = ½∫₀^∞ H(y)·y^{s/2−1} dy with H the horocycle average.
pub fn adjunction_lhs(bump: &TestBump, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(LabError::InvalidParameter(format!("adjunction exponent must be positive, got {s}")));
    }
    let haar = haar_average(bump)?;
    let half = s / 2.0;
    let mut failed = None;
    let body = adaptive(
        |u| {
            let y = u.exp();
            match horocycle_average(bump, y) {
                Ok(h) => h * (half * u).exp(),
                Err(e) => {
                    failed = Some(e);
                    0.0
                }
            }
        },
        ADJUNCTION_Y_MIN.ln(),
        bump.y_top.ln(),
        1e-8,
        1e-14,
        30,
    )?;
    if let Some(e) = failed {
        return Err(e);
    }
    Ok(0.5 * body + 0.5 * haar * ADJUNCTION_Y_MIN.powf(half) / half)
}

/// Monte-Carlo estimate of ∫φ·𝒢(x^{s+2}) dm_Y and its standard error, sampling
/// the hyperbolic disc of the bump uniformly (Φ is one radial translate on it).
pub fn adjunction_rhs(bump: &TestBump, s: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if !bump.has_disjoint_images() {
        return Err(LabError::InvalidParameter("calibration needs a bump whose Γ-translates are disjoint".into()));
    }
    if samples < 2 {
        return Err(LabError::InvalidParameter("calibration needs at least 2 samples".into()));
    }
    let (z0, rho) = (bump.center, bump.radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = rho.cosh();
    let points: Vec<(f64, Complex64)> = (0..samples)
        .map(|_| {
            let u: f64 = rng.random();
            let theta: f64 = rng.random::<f64>() * 2.0 * PI;
            let r = (1.0 + u * (ch - 1.0)).acosh();
            let w = Complex64::from_polar((r / 2.0).tanh(), theta);
            (r, (z0 - z0.conj() * w) / (1.0 - w))
        })
        .collect();
    let values = points
        .par_iter()
        .map(|&(r, z)| siegel_g_power(s + 2.0, &section(z), CALIBRATION_CUTOFF).map(|g| profile(r / rho) * g.corrected()))
        .collect::<Result<Vec<f64>>>()?;
    let n = samples as f64;
    let mean = pairwise_sum(&values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    // Disc area 2π(cosh ρ − 1), divided by the stabilizer order and by vol = π/3.
    let scale = 2.0 * PI * (ch - 1.0) / stabilizer_order(z0) / (PI / 3.0);
    Ok((scale * mean, scale * (var / n).sqrt()))
}

/// Calibrated c_G⁺ (the unfolding gives exactly π/6 at k = ℚ, l = 1).
pub fn calibrate_c_g_plus(bump: &TestBump, s: f64, samples: usize, seed: u64) -> Result<Calibration> {
    let lhs = adjunction_lhs(bump, s)?;
    let (rhs, rhs_std_error) = adjunction_rhs(bump, s, samples, seed)?;
    let estimate = lhs / rhs;
    Ok(Calibration { s, lhs, rhs, rhs_std_error, samples, seed, estimate, std_error: estimate * rhs_std_error / rhs })
}

/// Options for [`c2_point`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C2Options {
    pub s_samples: Vec<f64>,
    pub cutoff: u64,
    pub calibration_s: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for C2Options {
    fn default() -> Self {
        C2Options { s_samples: DEFAULT_RESIDUE_SAMPLES.to_vec(), cutoff: DEFAULT_RESIDUE_CUTOFF, calibration_s: 2.0, samples: 20_000, seed: 1 }
    }
}

/// The limiting constant c₂ at the bump's center.
#[derive(Debug, Clone, Serialize)]
pub struct C2Point {
    pub z: Complex64,
    pub residue: ResidueFit,
    pub calibration: Calibration,
    /// c_G⁺·c₀(z): the limit of 𝒟⁺/∫φ (and of 𝒟⁻/∫φ).
    pub per_side: f64,
    /// c⁺ + c⁻ = 2·c_G⁺·c₀(z): the limit of (𝒟⁺ + 𝒟⁻)/∫φ.
    pub value: f64,
}

/// c₂ at the bump's center z₀ from the constant term of E*(z₀, s) at s = 1 and
/// the calibrated c_G⁺.
pub fn c2_point(bump: &TestBump, opts: &C2Options) -> Result<C2Point> {
    let residue = residue_fit(bump.center, &opts.s_samples, opts.cutoff)?;
    let calibration = calibrate_c_g_plus(bump, opts.calibration_s, opts.samples, opts.seed)?;
    let per_side = calibration.estimate * residue.b;
    Ok(C2Point { z: bump.center, residue, calibration, per_side, value: 2.0 * per_side })
}
