//! Integer points on ternary affine quadrics q(x) = m over ℚ: the split
//! condition, the spin action of SL₂ through the discriminant form
//! x₂² − 4x₁x₃, brute-force counting, orbit classification by reduction
//! signatures, and the T·log T + T main-term fit.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numerics::{least_squares, SeriesFit};

/// Default cap on the size of a plateau explored by [`orbit_reduce`].
pub const DEFAULT_PLATEAU_BUDGET: usize = 4096;

/// Exact 3×3 rational matrix.
pub type RatMat3 = [[BigRational; 3]; 3];

/// An integer 2×2 matrix.
pub type IntMat2 = [[i64; 2]; 2];

/// Which norm bounds the points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    Euclidean,
    Max,
}

pub fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rat_matrix(m: [[i64; 3]; 3]) -> RatMat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| rat(m[i][j])))
}

fn det3(m: &RatMat3) -> BigRational {
    let minor = |a: usize, b: usize, c: usize, d: usize| &m[1][a] * &m[2][b] - &m[1][c] * &m[2][d];
    &m[0][0] * minor(1, 2, 2, 1) - &m[0][1] * minor(0, 2, 2, 0) + &m[0][2] * minor(0, 1, 1, 0)
}

fn inverse3(m: &RatMat3) -> Option<RatMat3> {
    let d = det3(m);
    if d.is_zero() {
        return None;
    }
    let cof = |i: usize, j: usize| {
        let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let c: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let v = &m[r[0]][c[0]] * &m[r[1]][c[1]] - &m[r[0]][c[1]] * &m[r[1]][c[0]];
        if (i + j).is_multiple_of(2) {
            v
        } else {
            -v
        }
    };
    // Inverse = adjugate / det, adjugate = transpose of the cofactor matrix.
    Some(std::array::from_fn(|i| std::array::from_fn(|j| cof(j, i) / &d)))
}

fn mat3_mul(a: &RatMat3, b: &RatMat3) -> RatMat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| &a[i][k] * &b[k][j]).sum()))
}

/// True when the non-negative rational is the square of a rational.
pub fn is_rational_square(x: &BigRational) -> bool {
    if x.is_negative() {
        return false;
    }
    let sq = |n: &BigInt| {
        let r = n.sqrt();
        &r * &r == *n
    };
    sq(x.numer()) && sq(x.denom())
}

/// The spin (symmetric-square) action on binary forms x₁u² + x₂uv + x₃v²:
/// the form is composed with (u, v) ↦ (u, v)·g. It preserves x₂² − 4x₁x₃.
pub fn spin_act(g: &IntMat2, x: &[i64; 3]) -> [i64; 3] {
    let s = spin_matrix(g);
    let out: [i128; 3] = std::array::from_fn(|i| (0..3).map(|j| s[i][j] as i128 * x[j] as i128).sum());
    out.map(|v| i64::try_from(v).expect("spin action left the i64 range"))
}

/// The spin action with exact rational entries (det g = 1 is the caller's concern).
pub fn spin_act_rational(g: &[[BigRational; 2]; 2], x: &[BigRational; 3]) -> [BigRational; 3] {
    let (a, b, c, d) = (&g[0][0], &g[0][1], &g[1][0], &g[1][1]);
    [
        &x[0] * a * a + &x[1] * a * b + &x[2] * b * b,
        rat(2) * &x[0] * a * c + &x[1] * (a * d + b * c) + rat(2) * &x[2] * b * d,
        &x[0] * c * c + &x[1] * c * d + &x[2] * d * d,
    ]
}

/// The 3×3 integer matrix of the spin action of g in the coefficient basis.
pub fn spin_matrix(g: &IntMat2) -> [[i64; 3]; 3] {
    let [[a, b], [c, d]] = *g;
    [[a * a, a * b, b * b], [2 * a * c, a * d + b * c, 2 * b * d], [c * c, c * d, d * d]]
}

/// A generator of the arithmetic group, with its action in problem coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GammaGenerator {
    pub name: String,
    pub matrix: IntMat2,
    /// Integer 3×3 matrix of the transported spin action.
    pub action: [[i64; 3]; 3],
}

/// An integral ternary quadric problem q(x) = m.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryQuadricProblem {
    /// Symmetric Gram matrix with q(x) = xᵀ·gram·x.
    pub gram: RatMat3,
    pub m: BigRational,
    pub norm: NormChoice,
    pub base_point: Option<[i64; 3]>,
    /// Optional exact equivalence P with (x₂² − 4x₁x₃)(P·x) = q(x), used to transport the spin action.
    pub equivalence: Option<RatMat3>,
}

/// Outcome of the split-condition test.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub split: bool,
    pub det: BigRational,
    pub neg_m_det: BigRational,
    pub diagnostic: String,
}

impl TernaryQuadricProblem {
    /// A problem from a rational Gram matrix.
    pub fn new(gram: RatMat3, m: BigRational, norm: NormChoice) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                if gram[i][j] != gram[j][i] {
                    return Err(LabError::InvalidParameter("Gram matrix must be symmetric".into()));
                }
            }
        }
        if m.is_zero() {
            return Err(LabError::InvalidParameter("m must be nonzero".into()));
        }
        Ok(TernaryQuadricProblem { gram, m, norm, base_point: None, equivalence: None })
    }

    /// x² + y² − z² = m, transported to the discriminant form via (a, b, c) = ((z−y)/2, x, (z+y)/2).
    pub fn hyperboloid(m: i64, norm: NormChoice) -> Result<Self> {
        let mut p = Self::new(rat_matrix([[1, 0, 0], [0, 1, 0], [0, 0, -1]]), rat(m), norm)?;
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let z = rat(0);
        p.equivalence = Some([
            [z.clone(), -half.clone(), half.clone()],
            [rat(1), z.clone(), z.clone()],
            [z.clone(), half.clone(), half],
        ]);
        if m == 1 {
            p.base_point = Some([1, 0, 0]);
        }
        Ok(p)
    }

    /// The discriminant form x₂² − 4x₁x₃ = m itself.
    pub fn discriminant(m: i64, norm: NormChoice) -> Result<Self> {
        let mut p = Self::new(rat_matrix([[0, 0, -2], [0, 1, 0], [-2, 0, 0]]), rat(m), norm)?;
        p.equivalence = Some(rat_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]]));
        if m == 1 {
            p.base_point = Some([0, 1, 0]);
        }
        Ok(p)
    }

    /// Checks det ≠ 0 and whether −m·det(q) is a rational square.
    pub fn validate(&self) -> Result<Validation> {
        let det = det3(&self.gram);
        if det.is_zero() {
            return Err(LabError::DegenerateForm);
        }
        let neg_m_det = -(&self.m * &det);
        let split = is_rational_square(&neg_m_det);
        let diagnostic = format!(
            "det(q) = {det}, −m·det(q) = {neg_m_det} is {}a rational square",
            if split { "" } else { "not " }
        );
        Ok(Validation { split, det, neg_m_det, diagnostic })
    }

    /// Integer coefficients (Q, M) with D·q(x) = xᵀQx and D·m = M for a common denominator D.
    fn integer_form(&self) -> ([[i128; 3]; 3], i128) {
        let mut d = self.m.denom().clone();
        for row in &self.gram {
            for v in row {
                d = d.lcm(v.denom());
            }
        }
        let scale = BigRational::from_integer(d);
        let to_int = |v: &BigRational| (v * &scale).to_integer().to_i128().expect("form coefficients out of range");
        let q = std::array::from_fn(|i| std::array::from_fn(|j| to_int(&self.gram[i][j])));
        (q, to_int(&self.m))
    }

    /// q(x) evaluated exactly.
    pub fn eval(&self, x: &[i64; 3]) -> BigRational {
        let mut s = BigRational::zero();
        for i in 0..3 {
            for j in 0..3 {
                s += &self.gram[i][j] * rat(x[i]) * rat(x[j]);
            }
        }
        s
    }

    /// True when q(x) = m.
    pub fn on_quadric(&self, x: &[i64; 3]) -> bool {
        self.eval(x) == self.m
    }

    /// Squared Euclidean norm or max norm, as an exact integer.
    pub fn norm_key(&self, x: &[i64; 3]) -> i128 {
        match self.norm {
            NormChoice::Euclidean => x.iter().map(|&v| v as i128 * v as i128).sum(),
            NormChoice::Max => x.iter().map(|&v| (v as i128).abs()).max().unwrap_or(0),
        }
    }

    /// Ordering key for reduction: the norm, refined by the squared Euclidean norm.
    pub fn reduction_key(&self, x: &[i64; 3]) -> (i128, i128) {
        (self.norm_key(x), x.iter().map(|&v| v as i128 * v as i128).sum())
    }

    /// The norm as a real number.
    pub fn norm_value(&self, x: &[i64; 3]) -> f64 {
        match self.norm {
            NormChoice::Euclidean => (self.norm_key(x) as f64).sqrt(),
            NormChoice::Max => self.norm_key(x) as f64,
        }
    }

    fn within(&self, x: &[i64; 3], t: f64) -> bool {
        match self.norm {
            NormChoice::Euclidean => (self.norm_key(x) as f64) <= t * t,
            NormChoice::Max => (self.norm_key(x) as f64) <= t,
        }
    }

    fn is_plain_hyperboloid(&self) -> bool {
        self.gram == rat_matrix([[1, 0, 0], [0, 1, 0], [0, 0, -1]]) && self.m.is_integer()
    }

    /// Generators of Γ acting integrally in problem coordinates: S, S⁻¹, T, T⁻¹
    /// of SL₂(ℤ) when their transported actions preserve ℤ³, otherwise the
    /// generators T^{±2}, U^{±2} of the principal congruence subgroup Γ(2).
    pub fn default_generators(&self) -> Result<Vec<GammaGenerator>> {
        let full: [(&str, IntMat2); 4] =
            [("S", [[0, -1], [1, 0]]), ("Si", [[0, 1], [-1, 0]]), ("T", [[1, 1], [0, 1]]), ("Ti", [[1, -1], [0, 1]])];
        let level_two: [(&str, IntMat2); 4] =
            [("T2", [[1, 2], [0, 1]]), ("T2i", [[1, -2], [0, 1]]), ("U2", [[1, 0], [2, 1]]), ("U2i", [[1, 0], [-2, 1]])];
        if let Some(gens) = self.transport(&full)? {
            return Ok(gens);
        }
        if let Some(gens) = self.transport(&level_two)? {
            return Ok(gens);
        }
        Err(LabError::Unsupported("no integral generating set for the transported spin action".into()))
    }

    fn transport(&self, list: &[(&str, IntMat2)]) -> Result<Option<Vec<GammaGenerator>>> {
        let p = self
            .equivalence
            .as_ref()
            .ok_or_else(|| LabError::Unsupported("no equivalence to the discriminant form was supplied".into()))?;
        let p_inv = inverse3(p).ok_or(LabError::DegenerateForm)?;
        let mut out = Vec::with_capacity(list.len());
        for (name, g) in list {
            let s = rat_matrix(spin_matrix(g));
            let m = mat3_mul(&p_inv, &mat3_mul(&s, p));
            if m.iter().flatten().any(|v| !v.is_integer()) {
                return Ok(None);
            }
            let action = std::array::from_fn(|i| std::array::from_fn(|j| m[i][j].to_integer().to_i64().unwrap_or(i64::MAX)));
            out.push(GammaGenerator { name: name.to_string(), matrix: *g, action });
        }
        Ok(Some(out))
    }

    /// All integer points with q = m and norm ≤ t, sorted.
    pub fn enumerate_points(&self, t: f64) -> Result<Vec<[i64; 3]>> {
        if !(t >= 0.0) {
            return Err(LabError::InvalidParameter(format!("T must be non-negative, got {t}")));
        }
        let (q, m) = self.integer_form();
        let bound = t.floor() as i64;
        // Solve for a coordinate with nonzero square coefficient; loop the other two.
        let k = (0..3).find(|&k| q[k][k] != 0);
        let (k, i, j) = match k {
            Some(0) => (0, 1, 2),
            Some(1) => (1, 0, 2),
            Some(_) => (2, 0, 1),
            None => (2, 0, 1),
        };
        let mut pts: Vec<[i64; 3]> = (-bound..=bound)
            .into_par_iter()
            .flat_map_iter(|xi| {
                let mut local = Vec::new();
                for xj in -bound..=bound {
                    let (a, bi) = (xi as i128, xj as i128);
                    let aa = q[k][k];
                    let bb = 2 * (q[k][i] * a + q[k][j] * bi);
                    let cc = q[i][i] * a * a + 2 * q[i][j] * a * bi + q[j][j] * bi * bi - m;
                    let mut push = |xk: i128| {
                        if xk.abs() <= bound as i128 {
                            let mut x = [0i64; 3];
                            x[i] = xi;
                            x[j] = xj;
                            x[k] = xk as i64;
                            if self.within(&x, t) {
                                local.push(x);
                            }
                        }
                    };
                    if aa != 0 {
                        for root in quadratic_integer_roots(aa, bb, cc) {
                            push(root);
                        }
                    } else if bb != 0 {
                        if cc % bb == 0 {
                            push(-cc / bb);
                        }
                    } else if cc == 0 {
                        for xk in -bound..=bound {
                            push(xk as i128);
                        }
                    }
                }
                local
            })
            .collect();
        pts.sort_unstable();
        Ok(pts)
    }

    /// Number of integer points with q = m and norm ≤ t.
    pub fn brute_force_count(&self, t: f64) -> Result<u64> {
        if self.is_plain_hyperboloid() && self.norm == NormChoice::Euclidean {
            if !(t >= 0.0) {
                return Err(LabError::InvalidParameter(format!("T must be non-negative, got {t}")));
            }
            let m = self.m.to_integer().to_i64().expect("small m");
            return Ok(hyperboloid_counts(m, &[t])[0]);
        }
        Ok(self.enumerate_points(t)?.len() as u64)
    }

    /// Spin action of a generator in problem coordinates.
    pub fn act(&self, gen: &GammaGenerator, x: &[i64; 3]) -> [i64; 3] {
        let out: [i128; 3] = std::array::from_fn(|i| (0..3).map(|j| gen.action[i][j] as i128 * x[j] as i128).sum());
        out.map(|v| i64::try_from(v).expect("orbit point left the i64 range"))
    }
}

/// Integer roots of a·x² + b·x + c = 0 (a ≠ 0), without duplicates.
fn quadratic_integer_roots(a: i128, b: i128, c: i128) -> Vec<i128> {
    let disc = match b.checked_mul(b).and_then(|bb| a.checked_mul(c).and_then(|ac| ac.checked_mul(4)).and_then(|ac4| bb.checked_sub(ac4))) {
        Some(d) => BigInt::from(d),
        None => BigInt::from(b) * BigInt::from(b) - BigInt::from(4) * BigInt::from(a) * BigInt::from(c),
    };
    if disc.is_negative() {
        return vec![];
    }
    let s = disc.sqrt();
    if &s * &s != disc {
        return vec![];
    }
    let s = s.to_i128().expect("root in range");
    let mut out = Vec::with_capacity(2);
    for num in [-b + s, -b - s] {
        if num % (2 * a) == 0 {
            let r = num / (2 * a);
            if !out.contains(&r) {
                out.push(r);
            }
        }
    }
    out
}

fn primes_up_to(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    let mut out = Vec::new();
    for p in 2..=n {
        if sieve[p] {
            out.push(p as u64);
            let mut k = p * p;
            while k <= n {
                sieve[k] = false;
                k += p;
            }
        }
    }
    out
}

/// r₂(n): the number of (x, y) ∈ ℤ² with x² + y² = n.
pub fn sum_of_two_squares_count(n: u64, primes: &[u64]) -> u64 {
    if n == 0 {
        return 1;
    }
    let mut rest = n;
    let mut product = 1u64;
    for &p in primes {
        if p * p > rest {
            break;
        }
        if !rest.is_multiple_of(p) {
            continue;
        }
        let mut e = 0;
        while rest.is_multiple_of(p) {
            rest /= p;
            e += 1;
        }
        match p % 4 {
            1 => product *= e + 1,
            3 if e % 2 == 1 => return 0,
            _ => {}
        }
    }
    if rest > 1 {
        match rest % 4 {
            1 => product *= 2,
            3 => return 0,
            _ => {}
        }
    }
    4 * product
}

/// Counts on x² + y² − z² = m (Euclidean norm) for every T in `ts`, via
/// Σ_z r₂(m + z²) over m + 2z² ≤ T².
pub fn hyperboloid_counts(m: i64, ts: &[f64]) -> Vec<u64> {
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    let z_max = (((t_max * t_max - m as f64) / 2.0).max(0.0)).sqrt().floor() as i64 + 1;
    let n_max = (m + z_max * z_max).max(1) as u64;
    let primes = primes_up_to(n_max.sqrt() + 1);
    // Per |z|: number of (x, y) with x² + y² = m + z².
    let per_z: Vec<u64> = (0..=z_max)
        .into_par_iter()
        .map(|z| {
            let n = m + z * z;
            if n < 0 {
                0
            } else {
                sum_of_two_squares_count(n as u64, &primes)
            }
        })
        .collect();
    ts.iter()
        .map(|&t| {
            let t2 = t * t;
            (0..=z_max)
                .filter(|&z| ((m + 2 * z * z) as f64) <= t2)
                .map(|z| per_z[z as usize] * if z == 0 { 1 } else { 2 })
                .sum()
        })
        .collect()
}

/// The canonical representative of a point's Γ-orbit and a generator word reaching it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitSignature {
    pub representative: [i64; 3],
    /// Generator names, applied left to right to the input point.
    pub word: Vec<String>,
}

impl OrbitSignature {
    /// Replays the word on `x`.
    pub fn replay(&self, problem: &TernaryQuadricProblem, gens: &[GammaGenerator], x: &[i64; 3]) -> Result<[i64; 3]> {
        let mut y = *x;
        for name in &self.word {
            let g = gens
                .iter()
                .find(|g| &g.name == name)
                .ok_or_else(|| LabError::InvalidParameter(format!("unknown generator {name}")))?;
            y = problem.act(g, &y);
        }
        Ok(y)
    }
}

/// Greedy norm descent followed by plateau closure.
///
/// Moves are compared by [`TernaryQuadricProblem::reduction_key`] (the norm,
/// ties broken by the squared Euclidean norm). The canonical representative is
/// the lexicographically largest point of the final plateau, so that e.g.
/// (0, 1, 0) rather than its S-image (0, −1, 0) represents the orbit of
/// b² − 4ac = 1.
pub fn orbit_reduce(
    problem: &TernaryQuadricProblem,
    x: &[i64; 3],
    gens: &[GammaGenerator],
    plateau_budget: usize,
) -> Result<OrbitSignature> {
    if !problem.on_quadric(x) {
        return Err(LabError::NotOnQuadric(*x));
    }
    let mut word: Vec<usize> = Vec::new();
    let mut cur = *x;
    loop {
        // Greedy descent: the strictly best move, ties broken by generator order.
        loop {
            let here = problem.reduction_key(&cur);
            let best = gens
                .iter()
                .enumerate()
                .map(|(i, g)| (problem.reduction_key(&problem.act(g, &cur)), i))
                .filter(|&(n, _)| n < here)
                .min();
            match best {
                Some((_, i)) => {
                    cur = problem.act(&gens[i], &cur);
                    word.push(i);
                }
                None => break,
            }
        }
        // Plateau closure: breadth-first over moves that do not raise the norm.
        let level = problem.reduction_key(&cur);
        let mut parent: HashMap<[i64; 3], Option<([i64; 3], usize)>> = HashMap::new();
        parent.insert(cur, None);
        let mut queue = VecDeque::from([cur]);
        let mut lower: Option<[i64; 3]> = None;
        while let Some(p) = queue.pop_front() {
            for (i, g) in gens.iter().enumerate() {
                let y = problem.act(g, &p);
                let n = problem.reduction_key(&y);
                if n > level || parent.contains_key(&y) {
                    continue;
                }
                parent.insert(y, Some((p, i)));
                if n < level {
                    lower = Some(y);
                    break;
                }
                if parent.len() > plateau_budget {
                    return Err(LabError::PlateauBudget(plateau_budget));
                }
                queue.push_back(y);
            }
            if lower.is_some() {
                break;
            }
        }
        let target = match lower {
            Some(y) => y,
            None => *parent.keys().max().expect("plateau contains the start"),
        };
        // Reconstruct the path cur → target from parent pointers.
        let mut path = Vec::new();
        let mut node = target;
        while let Some(Some((prev, gi))) = parent.get(&node) {
            path.push(*gi);
            node = *prev;
        }
        path.reverse();
        word.extend(path);
        cur = target;
        if lower.is_none() {
            break;
        }
    }
    Ok(OrbitSignature { representative: cur, word: word.iter().map(|&i| gens[i].name.clone()).collect() })
}

/// Points with norm ≤ t grouped by orbit representative.
pub fn orbit_count(problem: &TernaryQuadricProblem, t: f64, plateau_budget: usize) -> Result<BTreeMap<[i64; 3], u64>> {
    let gens = problem.default_generators()?;
    let points = problem.enumerate_points(t)?;
    points
        .par_iter()
        .map(|x| orbit_reduce(problem, x, &gens, plateau_budget).map(|s| s.representative))
        .try_fold(BTreeMap::new, |mut acc, rep| {
            *acc.entry(rep?).or_insert(0u64) += 1;
            Ok(acc)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })
}

/// Counts N(T) at increasing T with the fitted model c₁·T·log T + c₂·T.
#[derive(Debug, Clone, Serialize)]
pub struct CountSeries {
    pub samples: Vec<(f64, u64)>,
    pub fit: Option<MainTermFit>,
}

/// Least-squares fit of N(T) ≈ c₁·T·log T + c₂·T.
#[derive(Debug, Clone, Serialize)]
pub struct MainTermFit {
    pub c1: f64,
    pub c2: f64,
    /// (N − model)/N at each sample.
    pub relative_residuals: Vec<f64>,
    pub condition_number: f64,
    /// Log–log fit of |N − model| against T; its slope estimates 1 − δ.
    pub remainder: SeriesFit,
}

impl MainTermFit {
    /// δ̂ = 1 − fitted remainder growth exponent.
    pub fn remainder_delta(&self) -> f64 {
        1.0 - self.remainder.slope
    }
}

impl CountSeries {
    /// Builds a series, checking that counts are nondecreasing in T.
    pub fn new(mut samples: Vec<(f64, u64)>) -> Result<Self> {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(LabError::InvalidParameter("counts must be nondecreasing in T".into()));
        }
        Ok(CountSeries { samples, fit: None })
    }

    /// Counts the problem at each T.
    pub fn measure(problem: &TernaryQuadricProblem, ts: &[f64]) -> Result<Self> {
        let counts = if problem.is_plain_hyperboloid() && problem.norm == NormChoice::Euclidean {
            hyperboloid_counts(problem.m.to_integer().to_i64().expect("small m"), ts)
        } else {
            ts.iter().map(|&t| problem.brute_force_count(t)).collect::<Result<Vec<_>>>()?
        };
        Self::new(ts.iter().cloned().zip(counts).collect())
    }
}

/// Fits N(T) ≈ c₁·T·log T + c₂·T; needs ≥ 4 samples spanning ≥ 2 decades.
pub fn fit_main_term(series: &CountSeries) -> Result<MainTermFit> {
    let s = &series.samples;
    if s.len() < 4 {
        return Err(LabError::InvalidParameter("need at least 4 samples".into()));
    }
    let (lo, hi) = (s.first().unwrap().0, s.last().unwrap().0);
    if !(lo > 1.0 && hi / lo >= 100.0 * (1.0 - 1e-12)) {
        return Err(LabError::InvalidParameter("samples must span at least two decades of T > 1".into()));
    }
    let rows: Vec<Vec<f64>> = s.iter().map(|&(t, _)| vec![t * t.ln(), t]).collect();
    let y: Vec<f64> = s.iter().map(|&(_, n)| n as f64).collect();
    let ls = least_squares(&rows, &y, 1e10)?;
    let (c1, c2) = (ls.coefficients[0], ls.coefficients[1]);
    let relative_residuals = s.iter().zip(&ls.residuals).map(|(&(_, n), r)| r / (n as f64).max(1.0)).collect();
    let ts: Vec<f64> = s.iter().map(|p| p.0).collect();
    let remainder = SeriesFit::power_law(&ts, &ls.residuals);
    Ok(MainTermFit { c1, c2, relative_residuals, condition_number: ls.condition_number, remainder })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_examples() {
        let h = TernaryQuadricProblem::hyperboloid(1, NormChoice::Euclidean).unwrap();
        assert!(h.validate().unwrap().split);
        let h2 = TernaryQuadricProblem::hyperboloid(2, NormChoice::Euclidean).unwrap();
        assert!(!h2.validate().unwrap().split);
        let d = TernaryQuadricProblem::discriminant(1, NormChoice::Max).unwrap();
        let v = d.validate().unwrap();
        assert_eq!(v.det, rat(-4));
        assert!(v.split);
        let z = TernaryQuadricProblem::new(rat_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 0]]), rat(1), NormChoice::Max).unwrap();
        assert_eq!(z.validate().unwrap_err(), LabError::DegenerateForm);
    }

    #[test]
    fn spin_examples() {
        assert_eq!(spin_act(&[[1, 0], [0, 1]], &[3, -4, 5]), [3, -4, 5]);
        assert_eq!(spin_act(&[[1, 1], [0, 1]], &[0, 1, 0]), [1, 1, 0]);
        assert_eq!(spin_act(&[[0, -1], [1, 0]], &[1, 0, 0]), [0, 0, 1]);
    }

    #[test]
    fn counting_examples() {
        let h = TernaryQuadricProblem::hyperboloid(1, NormChoice::Euclidean).unwrap();
        assert_eq!(h.brute_force_count(0.5).unwrap(), 0);
        assert_eq!(h.brute_force_count(5.0).unwrap(), 44);
        // Generic enumeration agrees with the r₂ fast path.
        for t in [5.0, 17.5, 40.0] {
            assert_eq!(h.enumerate_points(t).unwrap().len() as u64, h.brute_force_count(t).unwrap());
        }
        // 27-case oracle for the discriminant form under the max norm.
        let d = TernaryQuadricProblem::discriminant(1, NormChoice::Max).unwrap();
        let mut oracle = 0;
        for a in -1i64..=1 {
            for b in -1i64..=1 {
                for c in -1i64..=1 {
                    if b * b - 4 * a * c == 1 {
                        oracle += 1;
                    }
                }
            }
        }
        assert_eq!(d.brute_force_count(1.0).unwrap(), oracle);
    }

    #[test]
    fn r2_values() {
        let primes = primes_up_to(100);
        let brute = |n: i64| {
            let mut c = 0;
            for x in -100i64..=100 {
                for y in -100i64..=100 {
                    if x * x + y * y == n {
                        c += 1;
                    }
                }
            }
            c
        };
        for n in 0..200 {
            assert_eq!(sum_of_two_squares_count(n as u64, &primes), brute(n), "n = {n}");
        }
    }

    #[test]
    fn reduction_examples() {
        let d = TernaryQuadricProblem::discriminant(1, NormChoice::Max).unwrap();
        let gens = d.default_generators().unwrap();
        assert_eq!(gens.len(), 4);
        let s = orbit_reduce(&d, &[0, 1, 0], &gens, DEFAULT_PLATEAU_BUDGET).unwrap();
        assert_eq!(s.representative, [0, 1, 0]);
        let s = orbit_reduce(&d, &[1, 1, 0], &gens, DEFAULT_PLATEAU_BUDGET).unwrap();
        assert_eq!(s.representative, [0, 1, 0]);
        assert_eq!(s.word, vec!["Ti".to_string()]);
        assert!(matches!(orbit_reduce(&d, &[1, 0, 0], &gens, 10), Err(LabError::NotOnQuadric(_))));
    }

    #[test]
    fn hyperboloid_uses_level_two_generators() {
        let h = TernaryQuadricProblem::hyperboloid(1, NormChoice::Euclidean).unwrap();
        let gens = h.default_generators().unwrap();
        assert!(gens.iter().all(|g| g.name.contains('2')));
        for g in &gens {
            for x in [[1, 0, 0], [5, 5, 7], [0, 1, 0]] {
                assert!(h.on_quadric(&h.act(g, &x)));
            }
        }
    }

    #[test]
    fn orbit_partition() {
        let d = TernaryQuadricProblem::discriminant(1, NormChoice::Max).unwrap();
        let counts = orbit_count(&d, 5.0, DEFAULT_PLATEAU_BUDGET).unwrap();
        assert_eq!(counts.values().sum::<u64>(), d.brute_force_count(5.0).unwrap());
        assert!(orbit_count(&d, 0.5, DEFAULT_PLATEAU_BUDGET).unwrap().is_empty());
        let h = TernaryQuadricProblem::hyperboloid(1, NormChoice::Euclidean).unwrap();
        let counts = orbit_count(&h, 30.0, DEFAULT_PLATEAU_BUDGET).unwrap();
        assert_eq!(counts.values().sum::<u64>(), h.brute_force_count(30.0).unwrap());
    }

    #[test]
    fn fit_recovers_exact_model() {
        let ts: [f64; 5] = [1e3, 3e3, 1e4, 3e4, 1e5];
        let s = CountSeries {
            samples: ts.iter().map(|&t| (t, (3.0 * t * t.ln() + 5.0 * t).round() as u64)).collect(),
            fit: None,
        };
        let f = fit_main_term(&s).unwrap();
        assert!((f.c1 - 3.0).abs() < 1e-4 && (f.c2 - 5.0).abs() < 1e-3);
        let short = CountSeries { samples: s.samples[..3].to_vec(), fit: None };
        assert!(fit_main_term(&short).is_err());
    }

    #[test]
    fn rational_square_test() {
        assert!(is_rational_square(&BigRational::new(BigInt::from(9), BigInt::from(4))));
        assert!(!is_rational_square(&rat(2)));
        assert!(!is_rational_square(&rat(-4)));
    }
}
