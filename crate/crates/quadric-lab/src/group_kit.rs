//! Elements of G = SL₂(k∞): the one-parameter families a_s, h_t, u_r, the
//! invariant T_g, the KAU and KHU decompositions, the w_r matrices with their
//! distance to the central-stable planes, and the local charts Φ.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default chart radius ε₀.
pub const DEFAULT_EPS0: f64 = 0.1;

/// Threshold on |r| above which w_r and the twisted chart factor are used.
pub const WAVEFRONT_THRESHOLD: f64 = 100.0;

/// A 2×2 complex matrix (real places carry zero imaginary parts).
pub type Mat2 = [[Complex64; 2]; 2];

/// A 2×2 real matrix.
pub type RealMat2 = [[f64; 2]; 2];

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Identity matrix.
pub fn identity() -> Mat2 {
    [[c(1.0), c(0.0)], [c(0.0), c(1.0)]]
}

/// Matrix product.
pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[c(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Determinant.
pub fn det(a: &Mat2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Inverse of a unimodular matrix (adjugate divided by the determinant).
pub fn inv(a: &Mat2) -> Mat2 {
    let d = det(a);
    [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]]
}

/// Entrywise difference.
pub fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = *a;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

/// Frobenius norm √Re tr(A A*).
pub fn frobenius(a: &Mat2) -> f64 {
    a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Embeds a real matrix.
pub fn from_real(a: &RealMat2) -> Mat2 {
    [[c(a[0][0]), c(a[0][1])], [c(a[1][0]), c(a[1][1])]]
}

/// Real part of a matrix (for real places).
pub fn to_real(a: &Mat2) -> RealMat2 {
    [[a[0][0].re, a[0][1].re], [a[1][0].re, a[1][1].re]]
}

/// Real matrix product.
pub fn mul_real(a: &RealMat2, b: &RealMat2) -> RealMat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Inverse of a real unimodular matrix.
pub fn inv_real(a: &RealMat2) -> RealMat2 {
    let d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]]
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &Mat2) -> Mat2 {
    let n = frobenius(a);
    let squarings = if n > 0.5 { (n / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let x = [[a[0][0] * scale, a[0][1] * scale], [a[1][0] * scale, a[1][1] * scale]];
    let mut term = identity();
    let mut sum = identity();
    for k in 1..30 {
        term = mul(&term, &x);
        for row in term.iter_mut() {
            for z in row.iter_mut() {
                *z /= k as f64;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

/// Upper (U) or lower (U⁻) unipotent family, or the matching decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    /// Both signs, `+` first.
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];
}

/// a_s = [[(s+s⁻¹)/2, (s−s⁻¹)/2], [(s−s⁻¹)/2, (s+s⁻¹)/2]] for real or complex s.
pub fn a_matrix(s: Complex64) -> Mat2 {
    let p = (s + s.inv()) * 0.5;
    let m = (s - s.inv()) * 0.5;
    [[p, m], [m, p]]
}

/// h_t = diag(t, t⁻¹).
pub fn h_matrix(t: Complex64) -> Mat2 {
    [[t, c(0.0)], [c(0.0), t.inv()]]
}

/// u_r (upper) or u⁻_r (lower).
pub fn u_matrix(r: Complex64, sign: Sign) -> Mat2 {
    match sign {
        Sign::Plus => [[c(1.0), r], [c(0.0), c(1.0)]],
        Sign::Minus => [[c(1.0), c(0.0)], [r, c(1.0)]],
    }
}

/// k_{45°} = (1/√2)[[1, −1], [1, 1]].
pub fn k45() -> Mat2 {
    let s = FRAC_1_SQRT_2;
    [[c(s), c(-s)], [c(s), c(s)]]
}

/// An element of SL₂(k∞): one matrix per place, real places first.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub l1: usize,
    pub places: Vec<Mat2>,
}

impl GroupElement {
    /// Builds an element and checks unit determinants (to 1e−12 relative) and real entries at real places.
    pub fn new(l1: usize, places: Vec<Mat2>) -> Result<Self> {
        if places.len() < l1 || places.is_empty() {
            return Err(LabError::InvalidParameter("need at least one place and l1 ≤ places".into()));
        }
        for (i, m) in places.iter().enumerate() {
            let scale = frobenius(m).powi(2).max(1.0);
            if (det(m) - c(1.0)).norm() > 1e-12 * scale {
                return Err(LabError::InvalidParameter(format!("place {i} has determinant {}", det(m))));
            }
            if i < l1 && m.iter().flatten().any(|z| z.im != 0.0) {
                return Err(LabError::InvalidParameter(format!("real place {i} has complex entries")));
            }
        }
        Ok(GroupElement { l1, places })
    }

    /// Element of SL₂(ℝ) at k = ℚ.
    pub fn real(m: RealMat2) -> Result<Self> {
        Self::new(1, vec![from_real(&m)])
    }

    /// The identity with the given place counts.
    pub fn identity(l1: usize, l2: usize) -> Self {
        GroupElement { l1, places: vec![identity(); l1 + l2] }
    }

    /// Number of complex places.
    pub fn l2(&self) -> usize {
        self.places.len() - self.l1
    }

    /// Placewise product.
    pub fn mul(&self, other: &Self) -> Self {
        let places = self.places.iter().zip(&other.places).map(|(a, b)| mul(a, b)).collect();
        GroupElement { l1: self.l1, places }
    }

    /// Placewise inverse.
    pub fn inverse(&self) -> Self {
        GroupElement { l1: self.l1, places: self.places.iter().map(inv).collect() }
    }

    /// Largest Frobenius distance over places.
    pub fn distance(&self, other: &Self) -> f64 {
        self.places.iter().zip(&other.places).map(|(a, b)| frobenius(&sub(a, b))).fold(0.0, f64::max)
    }

    /// Largest |det − 1| over places.
    pub fn det_defect(&self) -> f64 {
        self.places.iter().map(|m| (det(m) - c(1.0)).norm()).fold(0.0, f64::max)
    }

    fn place_is_complex(&self, i: usize) -> bool {
        i >= self.l1
    }
}

impl Serialize for GroupElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let value: Vec<serde_json::Value> = self
            .places
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let entry = |z: &Complex64| {
                    if self.place_is_complex(i) {
                        serde_json::json!([z.re, z.im])
                    } else {
                        serde_json::json!(z.re)
                    }
                };
                serde_json::json!([[entry(&m[0][0]), entry(&m[0][1])], [entry(&m[1][0]), entry(&m[1][1])]])
            })
            .collect();
        value.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw: Vec<[[serde_json::Value; 2]; 2]> = Vec::deserialize(d)?;
        let mut l1 = 0;
        let mut places = Vec::with_capacity(raw.len());
        for (i, m) in raw.iter().enumerate() {
            let complex = m[0][0].is_array();
            if !complex {
                if i != l1 {
                    return Err(D::Error::custom("real places must precede complex places"));
                }
                l1 += 1;
            }
            let mut out = identity();
            for r in 0..2 {
                for k in 0..2 {
                    out[r][k] = match &m[r][k] {
                        serde_json::Value::Number(n) if !complex => c(n.as_f64().unwrap_or(f64::NAN)),
                        serde_json::Value::Array(a) if complex && a.len() == 2 => Complex64::new(
                            a[0].as_f64().ok_or_else(|| D::Error::custom("bad real part"))?,
                            a[1].as_f64().ok_or_else(|| D::Error::custom("bad imaginary part"))?,
                        ),
                        _ => return Err(D::Error::custom("mixed real/complex entries in one place")),
                    };
                }
            }
            places.push(out);
        }
        GroupElement::new(l1, places).map_err(D::Error::custom)
    }
}

fn per_place<F: Fn(Complex64) -> Mat2>(l1: usize, params: &[Complex64], f: F) -> Result<GroupElement> {
    for (i, p) in params.iter().enumerate().take(l1) {
        if p.im != 0.0 {
            return Err(LabError::InvalidParameter(format!("real place {i} needs a real parameter")));
        }
    }
    GroupElement::new(l1, params.iter().map(|&p| f(p)).collect())
}

/// a_s placewise for positive real s.
pub fn make_a(l1: usize, l2: usize, s: &[f64]) -> Result<GroupElement> {
    if s.len() != l1 + l2 || s.iter().any(|&x| !(x > 0.0)) {
        return Err(LabError::InvalidParameter("a_s needs one positive real per place".into()));
    }
    let params: Vec<Complex64> = s.iter().map(|&x| c(x)).collect();
    per_place(l1, &params, a_matrix)
}

/// h_t placewise for nonzero t (real at real places).
pub fn make_h(l1: usize, t: &[Complex64]) -> Result<GroupElement> {
    if let Some(i) = t.iter().position(|z| z.norm() == 0.0) {
        return Err(LabError::InvalidParameter(format!("h_t needs nonzero t (slot {i})")));
    }
    per_place(l1, t, h_matrix)
}

/// u_r (sign +) or u⁻_r (sign −) placewise.
pub fn make_u(l1: usize, r: &[Complex64], sign: Sign) -> Result<GroupElement> {
    per_place(l1, r, |x| u_matrix(x, sign))
}

/// Per-place norm of g·e_j (squared at complex places) multiplied over places.
fn column_arch_norm(g: &GroupElement, col: usize) -> f64 {
    g.places
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let n2 = m[0][col].norm_sqr() + m[1][col].norm_sqr();
            if g.place_is_complex(i) {
                n2
            } else {
                n2.sqrt()
            }
        })
        .product()
}

/// T_g = ‖g·e₁‖·‖g·e₂‖ in the archimedean norm.
pub fn big_t(g: &GroupElement) -> f64 {
    column_arch_norm(g, 0) * column_arch_norm(g, 1)
}

/// Rotation by angle θ.
pub fn rotation(theta: f64) -> RealMat2 {
    let (s, co) = theta.sin_cos();
    [[co, -s], [s, co]]
}

/// g = k·a_λ·u_r^{±} at a single real place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KauResult {
    pub k: RealMat2,
    pub angle: f64,
    pub lambda: f64,
    pub r: f64,
    pub sign: Sign,
}

impl KauResult {
    /// k·a_λ·u_r^{±}.
    pub fn reconstruct(&self) -> RealMat2 {
        let a = to_real(&a_matrix(c(self.lambda)));
        let u = to_real(&u_matrix(c(self.r), self.sign));
        mul_real(&mul_real(&self.k, &a), &u)
    }
}

fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// KAU decomposition following the existence proof: rotate g·e₁ (sign +) onto
/// the branch {x² − y² = 1, x > 0}, or g·e₂ (sign −) onto {y² − x² = 1, y > 0},
/// read λ from the intersection point, then solve for r.
///
/// Among the admissible rotation angles the one of smallest absolute value is
/// chosen, ties going to the positive angle.
pub fn kau_decompose(g: &RealMat2, sign: Sign) -> Result<KauResult> {
    let col = match sign {
        Sign::Plus => 0,
        Sign::Minus => 1,
    };
    let v = [g[0][col], g[1][col]];
    let norm = v[0].hypot(v[1]);
    if norm < 1.0 {
        return Err(LabError::PreconditionNorm { norm });
    }
    let big = ((norm * norm + 1.0) / 2.0).sqrt();
    let small = ((norm * norm - 1.0) / 2.0).max(0.0).sqrt();
    let phi = v[1].atan2(v[0]);
    let mut best: Option<(f64, f64)> = None;
    for y in [small, -small] {
        // Target point on the branch: a_λ·e₁ = (X, Y) or a_λ·e₂ = (Y, X).
        let target = match sign {
            Sign::Plus => [big, y],
            Sign::Minus => [y, big],
        };
        let angle = wrap_angle(phi - target[1].atan2(target[0]));
        let better = match best {
            None => true,
            Some((a, _)) => angle.abs() < a.abs() - 1e-15 || ((angle.abs() - a.abs()).abs() <= 1e-15 && angle > a),
        };
        if better {
            best = Some((angle, y));
        }
    }
    let (angle, y) = best.expect("two candidates");
    let lambda = big + y;
    let k = rotation(angle);
    let a_inv = to_real(&inv(&a_matrix(c(lambda))));
    let rest = mul_real(&a_inv, &mul_real(&inv_real(&k), g));
    let r = match sign {
        Sign::Plus => rest[0][1],
        Sign::Minus => rest[1][0],
    };
    Ok(KauResult { k, angle, lambda, r, sign })
}

/// g = b⁻¹·h1⁻¹·h^Δ_s·u with b ∈ K₀, h1 ∈ H^{(1)}, s > 0 and u ∈ U (or U⁻).
#[derive(Debug, Clone, PartialEq)]
pub struct KhuResult {
    pub b: GroupElement,
    /// Scalar of the diagonal part h^Δ_s.
    pub s: f64,
    /// Per-place parameters of h1 = h_{s_vec}.
    pub s_vec: Vec<f64>,
    pub h1: GroupElement,
    pub u: GroupElement,
    pub sign: Sign,
}

impl KhuResult {
    /// The diagonal element h^Δ_s.
    pub fn h_delta(&self) -> GroupElement {
        let l = self.b.places.len();
        GroupElement { l1: self.b.l1, places: vec![h_matrix(c(self.s)); l] }
    }

    /// b⁻¹·h1⁻¹·h^Δ_s·u.
    pub fn reconstruct(&self) -> GroupElement {
        self.b.inverse().mul(&self.h1.inverse()).mul(&self.h_delta()).mul(&self.u)
    }
}

/// KHU decomposition: per place a rotation/unitary b_i with b_i·g_i·e = λ_i·e
/// (e = e₁ for sign +, e₂ for sign −), λ = ∏λ_i^{ε_i}, h1 = h_{s_vec} with
/// s_i = λ^{1/l}/λ_i (sign +) or λ_i·λ^{−1/l} (sign −), and u the residual.
pub fn khu_decompose(g: &GroupElement, sign: Sign) -> KhuResult {
    let col = match sign {
        Sign::Plus => 0,
        Sign::Minus => 1,
    };
    let mut b_places = Vec::with_capacity(g.places.len());
    let mut lambdas = Vec::with_capacity(g.places.len());
    let mut log_lambda = 0.0;
    let mut degree = 0.0;
    for (i, m) in g.places.iter().enumerate() {
        let p = m[0][col];
        let q = m[1][col];
        let n = (p.norm_sqr() + q.norm_sqr()).sqrt();
        // b(p, q)ᵀ = (n, 0)ᵀ or (0, n)ᵀ, with b in SO₂ / SU₂.
        let b = match sign {
            Sign::Plus => [[p.conj() / n, q.conj() / n], [-q / n, p / n]],
            Sign::Minus => [[q / n, -p / n], [p.conj() / n, q.conj() / n]],
        };
        let eps = if g.place_is_complex(i) { 2.0 } else { 1.0 };
        log_lambda += eps * n.ln();
        degree += eps;
        b_places.push(b);
        lambdas.push(n);
    }
    let root = (log_lambda / degree).exp();
    let s_vec: Vec<f64> = lambdas
        .iter()
        .map(|&li| match sign {
            Sign::Plus => root / li,
            Sign::Minus => li / root,
        })
        .collect();
    let s = match sign {
        Sign::Plus => root,
        Sign::Minus => 1.0 / root,
    };
    let b = GroupElement { l1: g.l1, places: b_places };
    let h1 = GroupElement { l1: g.l1, places: s_vec.iter().map(|&x| h_matrix(c(x))).collect() };
    let h_delta = GroupElement { l1: g.l1, places: vec![h_matrix(c(s)); g.places.len()] };
    // u = (h^Δ_s)⁻¹·h1·b·g, upper (lower) unipotent by construction.
    let raw = h_delta.inverse().mul(&h1).mul(&b).mul(g);
    let u_places = raw
        .places
        .iter()
        .map(|m| match sign {
            Sign::Plus => u_matrix(m[0][1], Sign::Plus),
            Sign::Minus => u_matrix(m[1][0], Sign::Minus),
        })
        .collect();
    let u = GroupElement { l1: g.l1, places: u_places };
    KhuResult { b, s, s_vec, h1, u, sign }
}

/// w^±_r = ⌊|r|⌋⁻¹·u^±_r·diag(1, −1)·(u^±_r)⁻¹, defined for |r| ≥ 100.
pub fn w_matrix(r: f64, sign: Sign) -> Result<RealMat2> {
    if !(r.abs() >= WAVEFRONT_THRESHOLD) {
        return Err(LabError::OutOfRange(format!("w_r needs |r| ≥ 100, got {r}")));
    }
    let n = r.abs().floor();
    Ok(match sign {
        Sign::Plus => [[1.0 / n, -2.0 * r / n], [0.0, -1.0 / n]],
        Sign::Minus => [[1.0 / n, 0.0], [-2.0 * r / n, -1.0 / n]],
    })
}

/// Orthogonal basis of 𝔙^{0±} = k_{45°}·𝔘^{0±}·k_{45°}⁻¹ where 𝔘^{0+}
/// (𝔘^{0−}) is the traceless upper (lower) triangular plane.
pub fn central_stable_basis(varstar: Sign) -> [Mat2; 2] {
    let k = k45();
    let ki = inv(&k);
    let (e_diag, e_off) = match varstar {
        Sign::Plus => ([[c(1.0), c(0.0)], [c(0.0), c(-1.0)]], [[c(0.0), c(1.0)], [c(0.0), c(0.0)]]),
        Sign::Minus => ([[c(1.0), c(0.0)], [c(0.0), c(-1.0)]], [[c(0.0), c(0.0)], [c(1.0), c(0.0)]]),
    };
    [mul(&mul(&k, &e_diag), &ki), mul(&mul(&k, &e_off), &ki)]
}

fn hermitian_inner(a: &Mat2, b: &Mat2) -> Complex64 {
    let mut s = c(0.0);
    for i in 0..2 {
        for j in 0..2 {
            s += a[i][j] * b[i][j].conj();
        }
    }
    s
}

/// Distance from w to 𝔙^{0±} in the metric Re tr(A B*), by least squares
/// onto the (complex) span of the plane's basis.
pub fn dist_to_central_stable(w: &Mat2, varstar: Sign) -> f64 {
    let [b1, b2] = central_stable_basis(varstar);
    // Gram system for the projection coefficients.
    let g11 = hermitian_inner(&b1, &b1);
    let g12 = hermitian_inner(&b2, &b1);
    let g21 = hermitian_inner(&b1, &b2);
    let g22 = hermitian_inner(&b2, &b2);
    let r1 = hermitian_inner(w, &b1);
    let r2 = hermitian_inner(w, &b2);
    let d = g11 * g22 - g12 * g21;
    let x1 = (r1 * g22 - g12 * r2) / d;
    let x2 = (g11 * r2 - g21 * r1) / d;
    let mut residual = *w;
    for i in 0..2 {
        for j in 0..2 {
            residual[i][j] -= x1 * b1[i][j] + x2 * b2[i][j];
        }
    }
    frobenius(&residual)
}

/// Chart coordinates (θ, γ, η) per place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub theta: Vec<Complex64>,
    pub gamma: Vec<Complex64>,
    pub eta: Vec<Complex64>,
}

impl ChartPoint {
    /// The origin with `places` places.
    pub fn zero(places: usize) -> Self {
        ChartPoint { theta: vec![c(0.0); places], gamma: vec![c(0.0); places], eta: vec![c(0.0); places] }
    }
}

/// h^{r,⋆}_{e^η}: exp(η·w^⋆_r) for |r| ≥ 100, else h_{e^η}.
///
/// In closed form exp(η·w⁺_r) = u_r·h_{e^{η/⌊|r|⌋}}·u_r⁻¹, while the lower
/// matrix w⁻_r (off-diagonal entry −2r/⌊|r|⌋) is the conjugate by u⁻_{−r}.
pub fn twisted_h(r: f64, varstar: Sign, eta: Complex64) -> Mat2 {
    if r.abs() >= WAVEFRONT_THRESHOLD {
        let n = r.abs().floor();
        let shift = match varstar {
            Sign::Plus => r,
            Sign::Minus => -r,
        };
        let u = u_matrix(c(shift), varstar);
        mul(&mul(&u, &h_matrix((eta / n).exp())), &inv(&u))
    } else {
        h_matrix(eta.exp())
    }
}

/// v^⋆_γ = k_{45°}·u^⋆_γ·k_{45°}⁻¹.
pub fn v_matrix(gamma: Complex64, star: Sign) -> Mat2 {
    let k = k45();
    mul(&mul(&k, &u_matrix(gamma, star)), &inv(&k))
}

/// Φ(θ, γ, η) = a_{e^θ}·v^⋆_γ·h^{r,⋆}_{e^η} at every place.
pub fn chart(
    l1: usize,
    r: &[f64],
    star: &[Sign],
    varstar: &[Sign],
    p: &ChartPoint,
    eps0: f64,
) -> Result<GroupElement> {
    let places = r.len();
    if [star.len(), varstar.len(), p.theta.len(), p.gamma.len(), p.eta.len()].iter().any(|&n| n != places) {
        return Err(LabError::InvalidParameter("chart inputs must have one entry per place".into()));
    }
    let mut out = Vec::with_capacity(places);
    for i in 0..places {
        for z in [p.theta[i], p.gamma[i], p.eta[i]] {
            if z.re.abs() >= eps0 || z.im.abs() >= eps0 {
                return Err(LabError::OutOfRange(format!("chart coordinate {z} outside (−ε₀, ε₀)")));
            }
            if i < l1 && z.im != 0.0 {
                return Err(LabError::InvalidParameter("real place needs real chart coordinates".into()));
            }
        }
        let a = a_matrix(p.theta[i].exp());
        let v = v_matrix(p.gamma[i], star[i]);
        let h = twisted_h(r[i], varstar[i], p.eta[i]);
        out.push(mul(&mul(&a, &v), &h));
    }
    GroupElement::new(l1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        frobenius(&sub(a, b)) < tol
    }

    #[test]
    fn family_examples() {
        assert!(close(&make_a(1, 0, &[1.0]).unwrap().places[0], &identity(), 1e-15));
        let h = make_h(1, &[c(2.0)]).unwrap();
        assert!(close(&h.places[0], &from_real(&[[2.0, 0.0], [0.0, 0.5]]), 1e-15));
        let a3 = make_a(1, 0, &[3.0]).unwrap();
        assert!(close(&a3.places[0], &from_real(&[[5.0 / 3.0, 4.0 / 3.0], [4.0 / 3.0, 5.0 / 3.0]]), 1e-15));
        assert!(make_h(1, &[c(0.0)]).is_err());
        let u = make_u(1, &[c(2.0)], Sign::Minus).unwrap();
        assert!(close(&u.places[0], &from_real(&[[1.0, 0.0], [2.0, 1.0]]), 0.0 + 1e-15));
    }

    #[test]
    fn big_t_examples() {
        assert_eq!(big_t(&GroupElement::identity(1, 0)), 1.0);
        assert!((big_t(&make_h(1, &[c(2.0)]).unwrap()) - 1.0).abs() < 1e-15);
        assert!((big_t(&make_a(1, 0, &[3.0]).unwrap()) - 41.0 / 9.0).abs() < 1e-14);
        // Complex place: norms are squared.
        let g = make_a(0, 1, &[3.0]).unwrap();
        assert!((big_t(&g) - (41.0f64 / 9.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn kau_examples() {
        let a2 = to_real(&a_matrix(c(2.0)));
        let d = kau_decompose(&a2, Sign::Plus).unwrap();
        assert!(d.angle.abs() < 1e-15 && (d.lambda - 2.0).abs() < 1e-14 && d.r.abs() < 1e-14);

        let h2 = [[2.0, 0.0], [0.0, 0.5]];
        let d = kau_decompose(&h2, Sign::Plus).unwrap();
        assert!(((2.0 * d.angle).cos() - 0.25).abs() < 1e-14);
        assert!(((d.lambda + 1.0 / d.lambda) / 2.0 - 2.0 * d.angle.cos()).abs() < 1e-14);
        let rec = d.reconstruct();
        assert!(frobenius(&sub(&from_real(&rec), &from_real(&h2))) < 1e-10);

        let t = 1.0 / 20.0;
        let g = [[t, 0.0], [0.0, 1.0 / t]];
        let d = kau_decompose(&g, Sign::Plus).unwrap_err();
        assert!(matches!(d, LabError::PreconditionNorm { .. }));
        // a_1·h_t with t = 1/20: ‖g·e₁‖ = 1/20 < 1, so sign + is inadmissible;
        // scale through a_s with large s to reach the admissible regime.
        let g = mul_real(&to_real(&a_matrix(c(50.0))), &[[t, 0.0], [0.0, 1.0 / t]]);
        let d = kau_decompose(&g, Sign::Plus).unwrap();
        assert!(d.r.abs() >= 100.0 && d.r.abs() + 1.0 >= t.powi(-2) * (1.0 - 1e-12));
    }

    #[test]
    fn kau_sign_minus_reconstructs() {
        let g: RealMat2 = [[0.3, 2.0], [-0.2, 2.0]];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let s = det.sqrt();
        let g = [[g[0][0] / s, g[0][1] / s], [g[1][0] / s, g[1][1] / s]];
        let d = kau_decompose(&g, Sign::Minus).unwrap();
        let rec = d.reconstruct();
        assert!(frobenius(&sub(&from_real(&rec), &from_real(&g))) < 1e-10);
    }

    #[test]
    fn khu_examples() {
        let id = GroupElement::identity(1, 0);
        let d = khu_decompose(&id, Sign::Plus);
        assert!(d.b.distance(&id) < 1e-15 && (d.s - 1.0).abs() < 1e-15 && d.u.distance(&id) < 1e-15);
        let u5 = make_u(1, &[c(5.0)], Sign::Plus).unwrap();
        let d = khu_decompose(&u5, Sign::Plus);
        assert!(d.u.distance(&u5) < 1e-14 && d.h1.distance(&id) < 1e-14);

        let g = make_a(2, 0, &[3.0, 3.0]).unwrap();
        for sign in Sign::BOTH {
            let d = khu_decompose(&g, sign);
            assert!(d.reconstruct().distance(&g) < 1e-9);
            let nm: f64 = d.s_vec.iter().product();
            assert!((nm - 1.0).abs() < 1e-12, "h1 must lie in H^(1)");
        }
        // Mixed signature element with a complex place.
        let mut m = a_matrix(Complex64::new(1.5, 0.4));
        m = mul(&m, &u_matrix(Complex64::new(-0.3, 2.0), Sign::Plus));
        let g = GroupElement::new(1, vec![from_real(&[[2.0, 1.0], [1.0, 1.0]]), m]).unwrap();
        for sign in Sign::BOTH {
            let d = khu_decompose(&g, sign);
            assert!(d.reconstruct().distance(&g) < 1e-9);
            let nm = d.s_vec[0] * d.s_vec[1] * d.s_vec[1];
            assert!((nm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn w_matrix_examples() {
        let w = w_matrix(100.0, Sign::Plus).unwrap();
        assert_eq!(w, [[0.01, -2.0], [0.0, -0.01]]);
        let w = w_matrix(-150.5, Sign::Plus).unwrap();
        assert!((w[0][1] - 2.0 * 150.5 / 150.0).abs() < 1e-15 && (w[0][0] - 1.0 / 150.0).abs() < 1e-18);
        assert!(matches!(w_matrix(50.0, Sign::Plus), Err(LabError::OutOfRange(_))));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dist_to_central_stable(&[[c(0.0); 2]; 2], Sign::Plus), 0.0);
        let lim = from_real(&[[0.0, -2.0], [0.0, 0.0]]);
        let d = dist_to_central_stable(&lim, Sign::Plus);
        assert!((d - 1.0).abs() < 1e-12 && d >= 1.0 / 3.0);
        let w = from_real(&w_matrix(100.0, Sign::Plus).unwrap());
        assert!(dist_to_central_stable(&w, Sign::Plus) >= 0.1);
        // Members of the plane have zero distance.
        let [b1, b2] = central_stable_basis(Sign::Minus);
        let mut m = b1;
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = b1[i][j] * 0.7 - b2[i][j] * 1.3;
            }
        }
        assert!(dist_to_central_stable(&m, Sign::Minus) < 1e-14);
    }

    #[test]
    fn chart_examples() {
        let p = ChartPoint::zero(1);
        let g = chart(1, &[200.0], &[Sign::Plus], &[Sign::Plus], &p, DEFAULT_EPS0).unwrap();
        assert!(close(&g.places[0], &identity(), 1e-15));
        let p = ChartPoint { theta: vec![c(0.1 - 1e-12)], gamma: vec![c(0.0)], eta: vec![c(0.0)] };
        let g = chart(1, &[1.0], &[Sign::Plus], &[Sign::Plus], &p, DEFAULT_EPS0).unwrap();
        assert!(close(&g.places[0], &a_matrix(c((0.1f64 - 1e-12).exp())), 1e-14));
        let p = ChartPoint { theta: vec![c(0.05)], gamma: vec![c(0.05)], eta: vec![c(0.05)] };
        let g = chart(1, &[200.0], &[Sign::Plus], &[Sign::Plus], &p, DEFAULT_EPS0).unwrap();
        assert!(g.det_defect() < 1e-12);
        let bad = ChartPoint { theta: vec![c(0.1)], gamma: vec![c(0.0)], eta: vec![c(0.0)] };
        assert!(matches!(chart(1, &[1.0], &[Sign::Plus], &[Sign::Plus], &bad, 0.1), Err(LabError::OutOfRange(_))));
    }

    #[test]
    fn twisted_h_is_the_exponential_of_w() {
        for sign in Sign::BOTH {
            for r in [100.0, -250.7, 12345.5] {
                let w = w_matrix(r, sign).unwrap();
                for eta in [c(0.07), Complex64::new(-0.05, 0.03)] {
                    let scaled = [[w[0][0] * eta, w[0][1] * eta], [w[1][0] * eta, w[1][1] * eta]];
                    let e = expm(&scaled);
                    let closed = twisted_h(r, sign, eta);
                    assert!(frobenius(&sub(&e, &closed)) < 1e-10 * frobenius(&e).max(1.0));
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let m = a_matrix(Complex64::new(1.5, 0.4));
        let g = GroupElement::new(1, vec![from_real(&[[2.0, 1.0], [1.0, 1.0]]), m]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with("[[[2.0,1.0],[1.0,1.0]],[[["));
        let back: GroupElement = serde_json::from_str(&s).unwrap();
        assert!(back.distance(&g) < 1e-15 && back.l1 == 1);
    }
}
