//! Effective equidistribution of coordinate lines on tori ℝ^l/Λ: trace dual
//! forms, Kronecker-type Diophantine conditions, bad shift sets and
//! discrepancy sweeps for real and complex directions.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::number_field::{FieldElement, NumberFieldSpec};
use crate::numerics::{pairwise_sum, GaussRule, SeriesFit};

/// Exponent δ₁ of the exceptional angle sets E(β).
pub const DELTA1: f64 = 0.2;

/// Default κ > 4 used by the discrepancy diagnostics.
pub const DEFAULT_KAPPA: f64 = 4.5;

/// Default enumeration budget for dual-lattice searches.
pub const DEFAULT_BUDGET: f64 = 5e7;

/// Exponent δ₂ = 0.1·κ⁻¹·(2l+2)⁻².
pub fn delta2(kappa: f64, l: usize) -> f64 {
    let m = 2.0 * l as f64 + 2.0;
    0.1 / (kappa * m * m)
}

/// A full-rank lattice in ℝ^l with the dual basis of integral forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusLattice {
    /// Basis vectors b_1, …, b_l.
    pub basis: Vec<Vec<f64>>,
    /// Forms ℓ_1, …, ℓ_l with ℓ_i(b_j) = δ_ij.
    pub dual_basis: Vec<Vec<f64>>,
    /// Index L₀ of the trace-form sublattice in Hom(Λ, ℤ).
    pub index: u64,
}

impl TorusLattice {
    /// Builds the lattice and inverts its basis.
    pub fn new(basis: Vec<Vec<f64>>, index: u64) -> Result<Self> {
        let l = basis.len();
        if l == 0 || basis.iter().any(|b| b.len() != l) || index == 0 {
            return Err(LabError::InvalidParameter("lattice basis must be square and index ≥ 1".into()));
        }
        let b = DMatrix::from_fn(l, l, |i, j| basis[j][i]);
        let inv = b.try_inverse().ok_or_else(|| LabError::InvalidParameter("singular lattice basis".into()))?;
        let dual_basis = (0..l).map(|i| (0..l).map(|k| inv[(i, k)]).collect()).collect();
        Ok(TorusLattice { basis, dual_basis, index })
    }

    /// The standard lattice ℤ^l.
    pub fn integer(l: usize) -> Self {
        let basis = (0..l).map(|i| (0..l).map(|k| if i == k { 1.0 } else { 0.0 }).collect()).collect();
        TorusLattice::new(basis, 1).expect("identity basis")
    }

    /// Dimension l.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Covolume |det B|.
    pub fn covolume(&self) -> f64 {
        let l = self.dim();
        DMatrix::from_fn(l, l, |i, j| self.basis[j][i]).determinant().abs()
    }

    /// Coordinates of v in the lattice basis.
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        self.dual_basis.iter().map(|row| dot(row, v)).collect()
    }

    /// The integral form Σ n_i ℓ_i as a coefficient vector.
    pub fn form(&self, n: &[i64]) -> Vec<f64> {
        let l = self.dim();
        (0..l).map(|k| (0..l).map(|i| n[i] as f64 * self.dual_basis[i][k]).sum()).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A real linear form on ℝ^l, optionally the trace form of a field element.
#[derive(Debug, Clone, PartialEq)]
pub struct DualForm {
    pub coefficients: Vec<f64>,
    pub beta: Option<FieldElement>,
    pub norm: f64,
}

impl DualForm {
    /// Evaluates the form at v.
    pub fn eval(&self, v: &[f64]) -> f64 {
        dot(&self.coefficients, v)
    }
}

/// The trace form 𝓛_β(α) = Tr(αβ) written in the real basis of k∞.
pub fn trace_dual_form(spec: &NumberFieldSpec, beta: &FieldElement) -> DualForm {
    let s = spec.embed(beta);
    let mut coefficients = s.reals.clone();
    for z in &s.complexes {
        coefficients.push(2.0 * z.re);
        coefficients.push(-2.0 * z.im);
    }
    let norm = norm(&coefficients);
    DualForm { coefficients, beta: Some(beta.clone()), norm }
}

/// Per-coordinate bounds |n_i| ≤ R·√((G⁻¹)_ii) for ‖Σ n_i d_i‖ ≤ R.
fn box_bounds(vectors: &[Vec<f64>], radius: f64) -> Vec<i64> {
    let l = vectors.len();
    let gram = DMatrix::from_fn(l, l, |i, j| dot(&vectors[i], &vectors[j]));
    let inv = gram.try_inverse().expect("independent vectors");
    (0..l).map(|i| (radius * inv[(i, i)].max(0.0).sqrt() + 1e-9).floor() as i64).collect()
}

/// Calls `visit` for every nonzero integer vector n with ‖Σ n_i d_i‖ ≤ radius.
fn for_each_in_ball<F: FnMut(&[i64], &[f64])>(
    vectors: &[Vec<f64>],
    radius: f64,
    budget: f64,
    mut visit: F,
) -> Result<()> {
    let bounds = box_bounds(vectors, radius);
    let needed: f64 = bounds.iter().map(|&b| 2.0 * b as f64 + 1.0).product();
    if needed > budget {
        return Err(LabError::BudgetExceeded { needed, budget });
    }
    let l = vectors.len();
    let dim = vectors[0].len();
    let mut n: Vec<i64> = bounds.iter().map(|b| -b).collect();
    let r2 = radius * radius * (1.0 + 1e-12);
    loop {
        if n.iter().any(|&x| x != 0) {
            let mut v = vec![0.0; dim];
            for i in 0..l {
                for k in 0..dim {
                    v[k] += n[i] as f64 * vectors[i][k];
                }
            }
            if dot(&v, &v) <= r2 {
                visit(&n, &v);
            }
        }
        let mut i = 0;
        loop {
            if i == l {
                return Ok(());
            }
            if n[i] < bounds[i] {
                n[i] += 1;
                break;
            }
            n[i] = -bounds[i];
            i += 1;
        }
    }
}

/// Smallest |ℓ(α)| over nonzero integral forms ℓ on Λ with ‖ℓ‖ ≤ R.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMinimum {
    pub value: f64,
    /// Coefficients of the minimizing form in the dual basis.
    pub witness: Vec<i64>,
    pub form: DualForm,
}

/// Exact minimum of |ℓ(α)| over integral forms of norm at most `radius`.
///
/// The first l−1 coordinates are enumerated over their Gram–Schmidt box; the
/// last coordinate is solved optimally inside its exact admissible interval,
/// so the cost is O(R^{l−1}) rather than O(R^l).
pub fn min_dual_value(lattice: &TorusLattice, alpha: &[f64], radius: f64, budget: f64) -> Result<DualMinimum> {
    if radius < 1.0 {
        return Err(LabError::InvalidParameter(format!("radius {radius} < 1")));
    }
    let l = lattice.dim();
    let d = &lattice.dual_basis;
    let c: Vec<f64> = d.iter().map(|row| dot(row, alpha)).collect();
    let bounds = box_bounds(d, radius);
    let needed: f64 = bounds[..l - 1].iter().map(|&b| 2.0 * b as f64 + 1.0).product();
    if needed > budget {
        return Err(LabError::BudgetExceeded { needed, budget });
    }
    let last = &d[l - 1];
    let a = dot(last, last);
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut n: Vec<i64> = bounds[..l - 1].iter().map(|b| -b).collect();
    loop {
        // Partial form from the first l−1 coordinates.
        let mut p = vec![0.0; l];
        let mut partial = 0.0;
        for i in 0..l - 1 {
            partial += n[i] as f64 * c[i];
            for k in 0..l {
                p[k] += n[i] as f64 * d[i][k];
            }
        }
        let b = dot(&p, last);
        let cc = dot(&p, &p);
        // a·m² + 2b·m + cc ≤ R²
        let disc = b * b - a * (cc - r2);
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let lo = ((-b - sq) / a).ceil() as i64;
            let hi = ((-b + sq) / a).floor() as i64;
            if lo <= hi {
                let mut candidates = Vec::with_capacity(6);
                if c[l - 1] != 0.0 {
                    let target = -partial / c[l - 1];
                    candidates.push(target.floor() as i64);
                    candidates.push(target.ceil() as i64);
                }
                candidates.extend([lo, hi, -1, 1]);
                let all_zero = n.iter().all(|&x| x == 0);
                for m in candidates {
                    let m = m.clamp(lo, hi);
                    if all_zero && m == 0 {
                        for alt in [m - 1, m + 1] {
                            if alt != 0 && alt >= lo && alt <= hi {
                                consider(&mut best, partial + alt as f64 * c[l - 1], &n, alt);
                            }
                        }
                        continue;
                    }
                    consider(&mut best, partial + m as f64 * c[l - 1], &n, m);
                }
            }
        }
        let mut i = 0;
        loop {
            if i + 1 >= l {
                let (value, witness) = best.ok_or_else(|| {
                    LabError::InvalidParameter("no nonzero integral form within the radius".into())
                })?;
                let coefficients = lattice.form(&witness);
                let norm = norm(&coefficients);
                return Ok(DualMinimum { value, witness, form: DualForm { coefficients, beta: None, norm } });
            }
            if n[i] < bounds[i] {
                n[i] += 1;
                break;
            }
            n[i] = -bounds[i];
            i += 1;
        }
    }
}

fn consider(best: &mut Option<(f64, Vec<i64>)>, value: f64, head: &[i64], last: i64) {
    let v = value.abs();
    if best.as_ref().is_none_or(|(b, _)| v < *b) {
        let mut w = head.to_vec();
        w.push(last);
        *best = Some((v, w));
    }
}

/// The lattice Diophantine condition for irrational lines: every nonzero integral form of
/// norm ≤ δ^{−κ(2l+2)} satisfies |ℓ(α)| ≥ δ^{−κ(2l+2)}/N.
pub fn kronecker_condition_lattice(
    lattice: &TorusLattice,
    delta: f64,
    alpha: &[f64],
    n_big: f64,
    kappa: f64,
    budget: f64,
) -> Result<bool> {
    check_kronecker_params(delta, n_big, kappa)?;
    let l = lattice.dim() as f64;
    let bound = delta.powf(-kappa * (2.0 * l + 2.0));
    let min = min_dual_value(lattice, alpha, bound, budget)?;
    Ok(min.value >= bound / n_big)
}

fn check_kronecker_params(delta: f64, n_big: f64, kappa: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) || !(n_big > 1.0) || !(kappa > 4.0) {
        return Err(LabError::InvalidParameter(format!(
            "need 0 < δ < 0.5, N > 1, κ > 4 (got δ={delta}, N={n_big}, κ={kappa})"
        )));
    }
    Ok(())
}

/// Distance from x to the nearest integer.
fn dist_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// The integer-vector condition |v·α − L| ≥ δ^{−κ}/N for all integer v with
/// 0 < ‖v‖ ≤ δ^{−κ} and all integers L.
pub fn kronecker_condition_integer(delta: f64, alpha: &[f64], n_big: u64, kappa: f64, budget: f64) -> Result<bool> {
    if n_big == 0 {
        return Err(LabError::InvalidParameter("N must be a positive integer".into()));
    }
    let bound = delta.powf(-kappa);
    let threshold = bound / n_big as f64;
    let unit = TorusLattice::integer(alpha.len());
    let mut ok = true;
    for_each_in_ball(&unit.basis, bound, budget, |n, _| {
        if ok {
            let s: f64 = n.iter().zip(alpha).map(|(&v, a)| v as f64 * a).sum();
            if dist_to_integer(s) < threshold {
                ok = false;
            }
        }
    })?;
    Ok(ok)
}

/// Union of the BAD(v, L) shift intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BadSet {
    /// Disjoint sorted intervals inside (−0.5, 0).
    pub intervals: Vec<(f64, f64)>,
    pub measure: f64,
    /// The bound 2(3δ^κ)^l.
    pub bound: f64,
    /// Whether every enumerated slope satisfies |ℓ(α)| ≥ δ^{−κ(2l+2)}/N,
    /// the hypothesis under which the bound is guaranteed.
    pub slope_condition_holds: bool,
}

/// BAD(v, L) = {λ ∈ (−0.5, 0) : |ℓ_v(α) − L + λ·ℓ_v(α)| ≤ δ^{−κ}/N} over
/// integral forms with 0 < ‖v‖ ≤ δ^{−κ} (v in dual-basis coordinates) and all L.
pub fn bad_set(
    lattice: &TorusLattice,
    delta: f64,
    n_big: f64,
    kappa: f64,
    alpha: &[f64],
    budget: f64,
) -> Result<BadSet> {
    check_kronecker_params(delta, n_big, kappa)?;
    let l = lattice.dim();
    let radius = delta.powf(-kappa);
    let eps = radius / n_big;
    let slope_floor = delta.powf(-kappa * (2.0 * l as f64 + 2.0)) / n_big;
    let w = lattice.coords(alpha);
    let unit = TorusLattice::integer(l);
    let mut raw = Vec::new();
    let mut slope_ok = true;
    for_each_in_ball(&unit.basis, radius, budget, |n, _| {
        let s: f64 = n.iter().zip(&w).map(|(&v, a)| v as f64 * a).sum();
        if s.abs() < slope_floor {
            slope_ok = false;
        }
        if s == 0.0 {
            if eps >= 0.0 {
                raw.push((-0.5, 0.0));
            }
            return;
        }
        // (1+λ)s ranges over the open interval between 0.5s and s.
        let (lo, hi) = if s > 0.0 { (0.5 * s, s) } else { (s, 0.5 * s) };
        let l_min = (lo - eps).ceil() as i64;
        let l_max = (hi + eps).floor() as i64;
        for big_l in l_min..=l_max {
            let a = (big_l as f64 - eps) / s - 1.0;
            let b = (big_l as f64 + eps) / s - 1.0;
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let a = a.max(-0.5);
            let b = b.min(0.0);
            if a < b {
                raw.push((a, b));
            }
        }
    })?;
    let intervals = merge_intervals(raw);
    let measure = intervals.iter().map(|(a, b)| b - a).sum();
    Ok(BadSet { intervals, measure, bound: 2.0 * (3.0 * delta.powf(kappa)).powi(l as i32), slope_condition_holds: slope_ok })
}

fn merge_intervals(mut raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    raw.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in raw {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// A shift λ ∈ (−0.5, 0) avoiding the bad set, with the shifted condition verified.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodShift {
    pub lambda: f64,
    /// Lattice coordinates of (1+λ)α.
    pub shifted: Vec<f64>,
    pub condition_holds: bool,
}

/// Searches for λ outside the bad set (midpoint of the widest gap) and checks
/// the integer condition for (δ, (1+λ)α, N) in lattice coordinates.
pub fn find_good_shift(
    lattice: &TorusLattice,
    delta: f64,
    n_big: u64,
    kappa: f64,
    alpha: &[f64],
    budget: f64,
) -> Result<Option<GoodShift>> {
    let bad = bad_set(lattice, delta, n_big as f64, kappa, alpha, budget)?;
    let mut gaps = Vec::new();
    let mut cursor = -0.5;
    for &(a, b) in &bad.intervals {
        if a > cursor {
            gaps.push((cursor, a));
        }
        cursor = cursor.max(b);
    }
    if cursor < 0.0 {
        gaps.push((cursor, 0.0));
    }
    let Some(&(a, b)) = gaps.iter().max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0))) else {
        return Ok(None);
    };
    let lambda = 0.5 * (a + b);
    let shifted: Vec<f64> = lattice.coords(alpha).iter().map(|x| (1.0 + lambda) * x).collect();
    let condition_holds = kronecker_condition_integer(delta, &shifted, n_big, kappa, budget)?;
    Ok(Some(GoodShift { lambda, shifted, condition_holds }))
}

/// A Lipschitz function on ℝ^l/Λ.
pub trait TorusFunction: Sync {
    /// Value at a point of ℝ^l (must be Λ-periodic).
    fn eval(&self, v: &[f64]) -> f64;
    /// A Lipschitz constant with respect to the Euclidean metric.
    fn lipschitz(&self) -> f64;
    /// Cosine expansion Σ a_n cos(2π ℓ_n(v) + φ_n), when available.
    fn modes(&self) -> Option<&[FourierMode]> {
        None
    }
}

/// One term a·cos(2π ℓ(v) + phase) of a trigonometric polynomial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierMode {
    /// Coefficients of ℓ in the dual basis.
    pub n: Vec<i64>,
    /// ℓ as a coefficient vector on ℝ^l.
    pub form: Vec<f64>,
    pub amplitude: f64,
    pub phase: f64,
}

/// A finite trigonometric polynomial on the torus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigPolynomial {
    pub modes: Vec<FourierMode>,
    lipschitz: f64,
}

impl TrigPolynomial {
    /// Builds the polynomial from (n, amplitude, phase) triples.
    pub fn new(lattice: &TorusLattice, terms: &[(Vec<i64>, f64, f64)]) -> Self {
        let modes: Vec<FourierMode> = terms
            .iter()
            .map(|(n, a, p)| FourierMode { n: n.clone(), form: lattice.form(n), amplitude: *a, phase: *p })
            .collect();
        let lipschitz = modes.iter().map(|m| m.amplitude.abs() * 2.0 * PI * norm(&m.form)).sum();
        TrigPolynomial { modes, lipschitz }
    }

    /// The constant function c.
    pub fn constant(lattice: &TorusLattice, c: f64) -> Self {
        Self::new(lattice, &[(vec![0; lattice.dim()], c, 0.0)])
    }

    /// cos(2π ℓ_n(v)).
    pub fn character(lattice: &TorusLattice, n: &[i64]) -> Self {
        Self::new(lattice, &[(n.to_vec(), 1.0, 0.0)])
    }

    /// Smooth nonnegative bump ∏_i g(w_i) in lattice coordinates, where
    /// g(x) = Σ_{|k|≤K} e^{−k²/(2σ²)} e^{2πikx}; the torus average is 1.
    pub fn smooth_bump(lattice: &TorusLattice, order: usize, width: f64) -> Self {
        let l = lattice.dim();
        let k = order as i64;
        let coeff = |j: i64| (-(j * j) as f64 / (2.0 * width * width)).exp();
        let mut terms = Vec::new();
        let mut n = vec![-k; l];
        loop {
            let a: f64 = n.iter().map(|&j| coeff(j)).product();
            terms.push((n.clone(), a, 0.0));
            let mut i = 0;
            loop {
                if i == l {
                    return Self::new(lattice, &terms);
                }
                if n[i] < k {
                    n[i] += 1;
                    break;
                }
                n[i] = -k;
                i += 1;
            }
        }
    }

    /// Torus average (the constant Fourier coefficient).
    pub fn mean(&self) -> f64 {
        self.modes.iter().filter(|m| m.n.iter().all(|&x| x == 0)).map(|m| m.amplitude * m.phase.cos()).sum()
    }
}

impl TorusFunction for TrigPolynomial {
    fn eval(&self, v: &[f64]) -> f64 {
        self.modes.iter().map(|m| m.amplitude * (2.0 * PI * dot(&m.form, v) + m.phase).cos()).sum()
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn modes(&self) -> Option<&[FourierMode]> {
        Some(&self.modes)
    }
}

/// A torus function given by a closure with a declared Lipschitz constant.
pub struct FnTorus<F: Fn(&[f64]) -> f64 + Sync> {
    pub f: F,
    pub lip: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> TorusFunction for FnTorus<F> {
    fn eval(&self, v: &[f64]) -> f64 {
        (self.f)(v)
    }
    fn lipschitz(&self) -> f64 {
        self.lip
    }
}

/// Which coordinate line is averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Direction {
    /// t ↦ t·e_i for a real place i (0-based).
    Real { index: usize },
    /// (t, θ) ↦ t·e^{iθ}·e_{l1+j} for a complex place j (0-based), θ ∈ I.
    Complex { index: usize, interval: (f64, f64) },
}

/// A line (or line × angle family) on the torus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSpec {
    pub l1: usize,
    pub direction: Direction,
    /// Base point added to every sample.
    pub offset: Vec<f64>,
    pub t0: f64,
    pub t: f64,
}

impl LineSpec {
    /// Checks the interval length and positivity of T.
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(LabError::InvalidParameter("line length T must be positive".into()));
        }
        if let Direction::Complex { interval: (a, b), .. } = self.direction {
            if !(b > a) || b - a > 2.0 * PI + 1e-12 {
                return Err(LabError::InvalidParameter("angle interval must have length in (0, 2π]".into()));
            }
        }
        Ok(())
    }

    /// Angular length |I| (1 for real directions).
    pub fn angular_length(&self) -> f64 {
        match self.direction {
            Direction::Real { .. } => 1.0,
            Direction::Complex { interval: (a, b), .. } => b - a,
        }
    }

    fn point(&self, t: f64, theta: f64) -> Vec<f64> {
        let mut v = self.offset.clone();
        match self.direction {
            Direction::Real { index } => v[index] += t,
            Direction::Complex { index, .. } => {
                let k = self.l1 + 2 * index;
                v[k] += t * theta.cos();
                v[k + 1] += t * theta.sin();
            }
        }
        v
    }

    /// ℓ(direction) split as (a, b) with ℓ(e^{iθ}e) = a cos θ + b sin θ.
    fn form_on_direction(&self, form: &[f64]) -> (f64, f64) {
        match self.direction {
            Direction::Real { index } => (form[index], 0.0),
            Direction::Complex { index, .. } => {
                let k = self.l1 + 2 * index;
                (form[k], form[k + 1])
            }
        }
    }
}

/// A line average with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineAverage {
    pub value: f64,
    pub error_bound: f64,
}

/// (1/T)∫_{T0}^{T0+T} f (real) or (1/T)∫∫_I f dθ dt (complex) by composite midpoint.
///
/// The reported bound is step²·Lip(f)·(domain length), normalized like the value.
pub fn line_average(f: &dyn TorusFunction, line: &LineSpec, step: f64) -> Result<LineAverage> {
    line.validate()?;
    if !(step > 0.0) {
        return Err(LabError::InvalidParameter("step must be positive".into()));
    }
    let nt = (line.t / step).ceil().max(1.0) as usize;
    let ht = line.t / nt as f64;
    match line.direction {
        Direction::Real { .. } => {
            let samples: Vec<f64> =
                (0..nt).map(|k| f.eval(&line.point(line.t0 + (k as f64 + 0.5) * ht, 0.0))).collect();
            let value = pairwise_sum(&samples) / nt as f64;
            Ok(LineAverage { value, error_bound: step * step * f.lipschitz() })
        }
        Direction::Complex { interval: (a, b), .. } => {
            let width = b - a;
            let nth = (width / step).ceil().max(1.0) as usize;
            let hth = width / nth as f64;
            let rows: Vec<f64> = (0..nt)
                .map(|k| {
                    let t = line.t0 + (k as f64 + 0.5) * ht;
                    let row: Vec<f64> =
                        (0..nth).map(|m| f.eval(&line.point(t, a + (m as f64 + 0.5) * hth))).collect();
                    pairwise_sum(&row) * hth
                })
                .collect();
            let value = pairwise_sum(&rows) / nt as f64;
            Ok(LineAverage { value, error_bound: step * step * f.lipschitz() * width })
        }
    }
}

/// sin(x)/x with the removable singularity filled in.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Line average of a trigonometric polynomial with the t-integral done in
/// closed form. For complex directions the remaining θ-integral is done by
/// composite Gauss–Legendre sized to the oscillation; the error estimate is
/// the change under panel doubling.
pub fn line_average_spectral(f: &TrigPolynomial, line: &LineSpec) -> Result<LineAverage> {
    line.validate()?;
    let mid = line.t0 + 0.5 * line.t;
    let rule = GaussRule::new(20);
    let mut total = Vec::with_capacity(f.modes.len());
    let mut noise = 0.0;
    for m in &f.modes {
        let phase0 = 2.0 * PI * dot(&m.form, &line.offset) + m.phase;
        let (fa, fb) = line.form_on_direction(&m.form);
        // (1/T)∫ cos(phase0 + 2πct) dt = cos(phase0 + 2πc·mid)·sinc(πcT).
        let term = |c: f64| (phase0 + 2.0 * PI * c * mid).cos() * sinc(PI * c * line.t);
        match line.direction {
            Direction::Real { .. } => total.push(m.amplitude * term(fa)),
            Direction::Complex { interval: (a, b), .. } => {
                let amp = (fa * fa + fb * fb).sqrt();
                let cycles = amp * (line.t0.abs() + line.t) * (b - a);
                // A 20-point rule resolves two oscillations per panel to
                // roundoff; the comparison grid carries ~2.7 per panel.
                let panels = ((cycles / 2.0).ceil() as usize).max(8);
                let g = |th: f64| term(fa * th.cos() + fb * th.sin());
                let coarse = rule.composite(g, a, b, (panels * 3).div_ceil(4));
                let fine = rule.composite(g, a, b, panels);
                noise += m.amplitude.abs() * (fine - coarse).abs();
                total.push(m.amplitude * fine);
            }
        }
    }
    Ok(LineAverage { value: pairwise_sum(&total), error_bound: noise + 1e-15 * f.modes.len() as f64 })
}

/// Normalized grid average over the fundamental parallelepiped.
pub fn torus_average(f: &dyn TorusFunction, lattice: &TorusLattice, resolution: usize) -> Result<f64> {
    if resolution < 8 {
        return Err(LabError::InvalidParameter("resolution must be at least 8".into()));
    }
    let l = lattice.dim();
    let mut idx = vec![0usize; l];
    let mut samples = Vec::with_capacity(resolution.pow(l as u32));
    loop {
        let mut v = vec![0.0; l];
        for (i, &k) in idx.iter().enumerate() {
            let w = (k as f64 + 0.5) / resolution as f64;
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += w * lattice.basis[i][c];
            }
        }
        samples.push(f.eval(&v));
        let mut i = 0;
        loop {
            if i == l {
                return Ok(pairwise_sum(&samples) / samples.len() as f64);
            }
            idx[i] += 1;
            if idx[i] < resolution {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// One row of a discrepancy sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub line_avg: f64,
    pub torus_avg: f64,
    pub abs_err: f64,
    pub excluded_measure: f64,
    #[serde(skip)]
    pub quadrature_noise: f64,
}

/// Result of a discrepancy sweep.
#[derive(Debug, Clone)]
pub struct DiscrepancySweep {
    pub rows: Vec<SweepRow>,
    pub fit: SeriesFit,
}

impl DiscrepancySweep {
    /// Writes the CSV artifact (columns T, line_avg, torus_avg, abs_err, excluded_measure).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wtr.serialize(row).map_err(|e| LabError::Io(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Largest quadrature noise relative to the smallest discrepancy.
    pub fn noise_ratio(&self) -> f64 {
        let min_err = self.rows.iter().map(|r| r.abs_err).fold(f64::INFINITY, f64::min);
        let max_noise = self.rows.iter().map(|r| r.quadrature_noise).fold(0.0, f64::max);
        max_noise / min_err
    }
}

/// Options of a discrepancy sweep.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub kappa: f64,
    /// Field used to report the exceptional angle measure for complex directions.
    pub field: Option<NumberFieldSpec>,
    /// Grid resolution for the torus average of non-polynomial functions.
    pub resolution: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { kappa: DEFAULT_KAPPA, field: None, resolution: 64 }
    }
}

/// |line average − |I|·torus average| for each T, with a log–log decay fit.
///
/// Trigonometric polynomials use the closed-form t-integral; other functions
/// fall back to composite midpoint with the step chosen so that the reported
/// bound stays below a tenth of the expected 1/T discrepancy.
pub fn discrepancy_sweep(
    f: &dyn TorusFunction,
    lattice: &TorusLattice,
    template: &LineSpec,
    t_list: &[f64],
    opts: &SweepOptions,
) -> Result<DiscrepancySweep> {
    if t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidParameter("T list must be increasing".into()));
    }
    let torus_avg = match f.modes() {
        Some(modes) => modes.iter().filter(|m| m.n.iter().all(|&x| x == 0)).map(|m| m.amplitude * m.phase.cos()).sum(),
        None => torus_average(f, lattice, opts.resolution)?,
    };
    let spectral = f.modes().map(|modes| TrigPolynomial { modes: modes.to_vec(), lipschitz: f.lipschitz() });
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let line = LineSpec { t, ..template.clone() };
        let avg = match &spectral {
            Some(p) => line_average_spectral(p, &line)?,
            None => {
                let target = 0.1 / t;
                let step = (target / (f.lipschitz().max(1e-12) * line.angular_length())).sqrt();
                line_average(f, &line, step)?
            }
        };
        let expected = line.angular_length() * torus_avg;
        let excluded_measure = match (&template.direction, &opts.field) {
            (Direction::Complex { index, interval }, Some(spec)) => {
                exceptional_angle_measure(spec, *index, *interval, t, opts.kappa)?
            }
            _ => 0.0,
        };
        rows.push(SweepRow {
            t,
            line_avg: avg.value,
            torus_avg,
            abs_err: (avg.value - expected).abs(),
            excluded_measure,
            quadrature_noise: avg.error_bound,
        });
    }
    let params: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.abs_err).collect();
    let fit = SeriesFit::power_law(&params, &errs);
    Ok(DiscrepancySweep { rows, fit })
}

/// Measure of E ∩ I where E is the union of E(β) over nonzero β ∈ O_k with
/// ‖𝓛_β‖ ≤ L₀·T^{δ₂κ(2l+2)} and
/// E(β) = {θ : |Re(σ_{l1+j}(β) e^{iθ})| ≤ T^{−δ₁}|σ_{l1+j}(β)|}.
pub fn exceptional_angle_measure(
    spec: &NumberFieldSpec,
    complex_index: usize,
    interval: (f64, f64),
    t: f64,
    kappa: f64,
) -> Result<f64> {
    if complex_index >= spec.l2 {
        return Err(LabError::InvalidParameter("complex place index out of range".into()));
    }
    let l = spec.degree;
    let radius = spec.discriminant().unsigned_abs() as f64 * t.powf(delta2(kappa, l) * kappa * (2.0 * l as f64 + 2.0));
    let forms: Vec<Vec<f64>> =
        spec.integral_basis.iter().map(|b| trace_dual_form(spec, b).coefficients).collect();
    let half_width = t.powf(-DELTA1).min(1.0).asin();
    let mut raw = Vec::new();
    let mut failure = None;
    for_each_in_ball(&forms, radius, DEFAULT_BUDGET, |n, _| {
        let coords: Vec<i64> = n.to_vec();
        let beta = spec.element(&coords);
        let sigma = spec.embed(&beta).complexes[complex_index];
        if sigma.norm() == 0.0 {
            failure = Some(LabError::InvalidParameter("zero embedding of nonzero β".into()));
            return;
        }
        let psi = sigma.arg();
        // |cos(θ + ψ)| ≤ ε ⟺ θ within asin(ε) of π/2 − ψ + kπ.
        for k in -4..=4 {
            let c = PI / 2.0 - psi + k as f64 * PI;
            let a = (c - half_width).max(interval.0);
            let b = (c + half_width).min(interval.1);
            if a < b {
                raw.push((a, b));
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(merge_intervals(raw).iter().map(|(a, b)| b - a).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zsqrt2() -> (NumberFieldSpec, TorusLattice) {
        let k = NumberFieldSpec::quadratic(2).unwrap();
        let lat = k.ok_lattice();
        (k, lat)
    }

    #[test]
    fn trace_forms_match_examples() {
        let q = NumberFieldSpec::rational();
        assert_eq!(trace_dual_form(&q, &q.element(&[1])).coefficients, vec![1.0]);
        let (k, _) = zsqrt2();
        let f = trace_dual_form(&k, &k.element(&[0, 1]));
        assert!((f.coefficients[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((f.coefficients[1] + 2f64.sqrt()).abs() < 1e-15);
        let g = NumberFieldSpec::quadratic(-1).unwrap();
        let f = trace_dual_form(&g, &g.element(&[0, 1]));
        assert_eq!(f.coefficients, vec![0.0, -2.0]);
        assert!((f.norm - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dual_basis_is_dual() {
        let (_, lat) = zsqrt2();
        for i in 0..2 {
            for j in 0..2 {
                let v = dot(&lat.dual_basis[i], &lat.basis[j]);
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert_eq!(lat.index, 8);
    }

    #[test]
    fn min_dual_value_examples() {
        let z = TorusLattice::integer(1);
        let m = min_dual_value(&z, &[0.5], 3.0, 1e6).unwrap();
        assert_eq!(m.value, 0.5);
        assert_eq!(m.witness.iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![1]);
        assert_eq!(min_dual_value(&z, &[0.0], 1.0, 1e6).unwrap().value, 0.0);
        assert!(min_dual_value(&z, &[0.0], 0.5, 1e6).is_err());
    }

    #[test]
    fn min_dual_value_matches_double_loop_on_zsqrt2() {
        let (_, lat) = zsqrt2();
        let alpha = [1.0, 0.0];
        for radius in [1.0, 2.5, 5.0, 11.0] {
            let fast = min_dual_value(&lat, &alpha, radius, 1e6).unwrap();
            let mut brute = f64::INFINITY;
            for a in -60i64..=60 {
                for b in -60i64..=60 {
                    if a == 0 && b == 0 {
                        continue;
                    }
                    let form = lat.form(&[a, b]);
                    if norm(&form) <= radius * (1.0 + 1e-12) {
                        brute = brute.min(dot(&form, &alpha).abs());
                    }
                }
            }
            assert!((fast.value - brute).abs() < 1e-14, "radius {radius}: {} vs {brute}", fast.value);
        }
    }

    #[test]
    fn kronecker_lattice_conditions() {
        let z = TorusLattice::integer(1);
        assert!(!kronecker_condition_lattice(&z, 0.4, &[0.0], 1e6, 4.5, 1e8).unwrap());
        // Over ℤ the minimum over 1 ≤ |v| ≤ R of |v√2| is √2, compared with R/N.
        let r = 0.4f64.powf(-18.0);
        let holds = kronecker_condition_lattice(&z, 0.4, &[2f64.sqrt()], 1e6, 4.5, 1e8).unwrap();
        assert_eq!(holds, 2f64.sqrt() >= r / 1e6);
        let holds = kronecker_condition_lattice(&z, 0.4, &[2f64.sqrt()], 1e8, 4.5, 1e8).unwrap();
        assert_eq!(holds, 2f64.sqrt() >= r / 1e8);
        assert!(kronecker_condition_lattice(&z, 0.6, &[1.0], 10.0, 4.5, 1e8).is_err());
    }

    #[test]
    fn kronecker_integer_examples() {
        assert!(!kronecker_condition_integer(0.49, &[0.5], 4, 4.01, 1e6).unwrap());
        assert!(!kronecker_condition_integer(0.49, &[0.0], 4, 4.01, 1e6).unwrap());
        // α = 1/1000003 with δ^{−κ} ≈ 17.4: v·α ≤ 17.4/1000003 is far from any
        // integer other than 0, and its distance to 0 exceeds bound/N only if N is large.
        let alpha = 1.0 / 1_000_003.0;
        assert!(kronecker_condition_integer(0.49, &[alpha], 1_000_000_000, 4.01, 1e6).unwrap());
    }

    #[test]
    fn bad_set_respects_bound() {
        let z = TorusLattice::integer(1);
        let n_big = 0.4f64.powf(-20.0) * 10.0;
        let bad = bad_set(&z, 0.4, n_big, 5.0, &[0.37], 1e6).unwrap();
        assert!(bad.slope_condition_holds);
        assert!(bad.measure < 0.06144 && bad.measure < bad.bound);
        let none = bad_set(&z, 0.49, 1e6, 4.01, &[0.05], 1e6).unwrap();
        assert!(none.intervals.is_empty());
        assert_eq!(none.measure, 0.0);
    }

    #[test]
    fn good_shift_satisfies_shifted_condition() {
        let z = TorusLattice::integer(1);
        let n_big = 1_000_000_000u64;
        let shift = find_good_shift(&z, 0.4, n_big, 5.0, &[0.37], 1e6).unwrap().unwrap();
        assert!(shift.lambda > -0.5 && shift.lambda < 0.0);
        assert!(shift.condition_holds);
    }

    #[test]
    fn line_average_of_constant_and_character() {
        let (_, lat) = zsqrt2();
        let one = TrigPolynomial::constant(&lat, 1.0);
        let line = LineSpec { l1: 2, direction: Direction::Real { index: 0 }, offset: vec![0.0; 2], t0: 0.0, t: 10.0 };
        assert!((line_average(&one, &line, 0.01).unwrap().value - 1.0).abs() < 1e-14);
        let chi = TrigPolynomial::character(&lat, &[1, 0]);
        let c = chi.modes[0].form[0];
        let closed = (2.0 * PI * c * 10.0).sin() / (2.0 * PI * c * 10.0);
        let mid = line_average(&chi, &line, 1e-3).unwrap().value;
        let spec = line_average_spectral(&chi, &line).unwrap().value;
        assert!((spec - closed).abs() < 1e-12);
        assert!((mid - closed).abs() < 1e-6);
        assert!(closed.abs() <= 1.0 / (PI * 10.0 * c.abs()));
    }

    #[test]
    fn annihilated_character_is_constant_on_the_line() {
        let lat = TorusLattice::integer(2);
        let chi = TrigPolynomial::character(&lat, &[0, 1]);
        let line = LineSpec { l1: 2, direction: Direction::Real { index: 0 }, offset: vec![0.0, 0.1], t0: 3.0, t: 7.0 };
        let expected = (2.0 * PI * 0.1).cos();
        assert!((line_average_spectral(&chi, &line).unwrap().value - expected).abs() < 1e-14);
        assert!((line_average(&chi, &line, 0.01).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn complex_direction_full_circle_of_constant_is_interval_length() {
        let g = NumberFieldSpec::quadratic(-1).unwrap();
        let lat = g.ok_lattice();
        let one = TrigPolynomial::constant(&lat, 1.0);
        let line = LineSpec {
            l1: 0,
            direction: Direction::Complex { index: 0, interval: (0.0, 2.0 * PI) },
            offset: vec![0.0; 2],
            t0: 0.0,
            t: 5.0,
        };
        assert!((line_average(&one, &line, 0.05).unwrap().value - 2.0 * PI).abs() < 1e-12);
        assert!((line_average_spectral(&one, &line).unwrap().value - 2.0 * PI).abs() < 1e-12);
        // The two quadrature routes agree on a nontrivial polynomial.
        let bump = TrigPolynomial::smooth_bump(&lat, 2, 1.0);
        let a = line_average(&bump, &line, 4e-3).unwrap().value;
        let b = line_average_spectral(&bump, &line).unwrap().value;
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn torus_average_examples() {
        let (_, lat) = zsqrt2();
        let c = TrigPolynomial::constant(&lat, 3.5);
        assert!((torus_average(&c, &lat, 8).unwrap() - 3.5).abs() < 1e-14);
        let chi = TrigPolynomial::character(&lat, &[2, -1]);
        assert!(torus_average(&chi, &lat, 16).unwrap().abs() < 1e-10);
        let bump = TrigPolynomial::smooth_bump(&lat, 3, 1.2);
        assert!((torus_average(&bump, &lat, 16).unwrap() - bump.mean()).abs() < 1e-12);
    }

    #[test]
    fn sweep_of_constant_is_degenerate() {
        let (_, lat) = zsqrt2();
        let one = TrigPolynomial::constant(&lat, 1.0);
        let line = LineSpec { l1: 2, direction: Direction::Real { index: 0 }, offset: vec![0.0; 2], t0: 0.0, t: 1.0 };
        let sweep = discrepancy_sweep(&one, &lat, &line, &[10.0, 100.0], &SweepOptions::default()).unwrap();
        assert!(sweep.rows.iter().all(|r| r.abs_err < 1e-14));
        assert!(sweep.fit.degenerate);
    }

    #[test]
    fn exceptional_measure_is_small_for_large_t() {
        let g = NumberFieldSpec::quadratic(-1).unwrap();
        let small = exceptional_angle_measure(&g, 0, (0.0, 2.0 * PI), 1e2, DEFAULT_KAPPA).unwrap();
        let large = exceptional_angle_measure(&g, 0, (0.0, 2.0 * PI), 1e5, DEFAULT_KAPPA).unwrap();
        assert!(large < small && large > 0.0);
        assert!(small <= 2.0 * PI);
    }

    #[test]
    fn delta_constants() {
        assert_eq!(DELTA1, 0.2);
        assert!((delta2(5.0, 2) - 0.1 / (5.0 * 36.0)).abs() < 1e-18);
    }
}
