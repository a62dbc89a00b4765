//! Number fields of degree at most two: exact element arithmetic, archimedean
//! embeddings, the norm ‖·‖ on k∞, the embedded ring of integers and units.

use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::torus_lines::TorusLattice;

/// Decimal digits kept for the defining root before rounding to `f64`.
const ROOT_DIGITS: u32 = 60;

/// Largest coefficient searched when looking for a fundamental unit.
const UNIT_SEARCH_LIMIT: i128 = 50_000_000;

/// How the field is defined; this is also its JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    /// The rational numbers.
    Rational,
    /// ℚ(√d) with `d` squarefree and different from 0 and 1.
    Quadratic { d: i64 },
}

/// An element of the field, stored by exact rational coordinates in the
/// integral basis of its field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldElement {
    pub coords: Vec<BigRational>,
}

impl FieldElement {
    /// Element with integer coordinates in the integral basis.
    pub fn from_ints(coords: &[i64]) -> Self {
        FieldElement { coords: coords.iter().map(|&c| BigRational::from_integer(c.into())).collect() }
    }

    /// True when every coordinate is an integer, i.e. the element lies in O_k.
    pub fn is_integral(&self) -> bool {
        self.coords.iter().all(|c| c.is_integer())
    }

    /// True for the zero element.
    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    /// Coordinatewise sum.
    pub fn add(&self, other: &Self) -> Self {
        FieldElement { coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect() }
    }

    /// Coordinatewise difference.
    pub fn sub(&self, other: &Self) -> Self {
        FieldElement { coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect() }
    }

    /// Negation.
    pub fn neg(&self) -> Self {
        FieldElement { coords: self.coords.iter().map(|a| -a).collect() }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// A point of k∞ = ℝ^{l1} × ℂ^{l2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchVector {
    pub reals: Vec<f64>,
    pub complexes: Vec<Complex64>,
}

impl ArchVector {
    /// Real coordinates in the basis (e₁,…,e_{l1}, e_{l1+1}, i·e_{l1+1}, …).
    pub fn real_coords(&self) -> Vec<f64> {
        let mut out = self.reals.clone();
        for z in &self.complexes {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }

    /// Componentwise product.
    pub fn mul(&self, other: &Self) -> Self {
        ArchVector {
            reals: self.reals.iter().zip(&other.reals).map(|(a, b)| a * b).collect(),
            complexes: self.complexes.iter().zip(&other.complexes).map(|(a, b)| a * b).collect(),
        }
    }
}

/// A number field together with the data the rest of the crate consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberFieldSpec {
    pub kind: FieldKind,
    pub l1: usize,
    pub l2: usize,
    pub degree: usize,
    pub integral_basis: Vec<FieldElement>,
    pub fundamental_units: Vec<FieldElement>,
    /// √|d| to `ROOT_DIGITS` digits, as an exact rational (1 for ℚ).
    root: BigRational,
}

impl Serialize for NumberFieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.kind.serialize(s)
    }
}

impl<'de> Deserialize<'de> for NumberFieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let kind = FieldKind::deserialize(d)?;
        NumberFieldSpec::new(kind).map_err(serde::de::Error::custom)
    }
}

fn is_squarefree(d: i64) -> bool {
    let n = d.unsigned_abs();
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p * p) {
            return false;
        }
        p += 1;
    }
    true
}

fn rational(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl NumberFieldSpec {
    /// The field ℚ.
    pub fn rational() -> Self {
        Self::new(FieldKind::Rational).expect("ℚ is always constructible")
    }

    /// The field ℚ(√d).
    pub fn quadratic(d: i64) -> Result<Self> {
        Self::new(FieldKind::Quadratic { d })
    }

    /// Builds the field, its integral basis and fundamental units.
    pub fn new(kind: FieldKind) -> Result<Self> {
        match kind {
            FieldKind::Rational => Ok(NumberFieldSpec {
                kind,
                l1: 1,
                l2: 0,
                degree: 1,
                integral_basis: vec![FieldElement::from_ints(&[1])],
                fundamental_units: vec![],
                root: BigRational::one(),
            }),
            FieldKind::Quadratic { d } => {
                if d == 0 || d == 1 || !is_squarefree(d) {
                    return Err(LabError::InvalidParameter(format!("d = {d} must be squarefree and not 0 or 1")));
                }
                let scale = BigInt::from(10).pow(ROOT_DIGITS);
                let radicand = BigInt::from(d.unsigned_abs()) * &scale * &scale;
                let root = BigRational::new(radicand.sqrt(), scale);
                let (l1, l2) = if d > 0 { (2, 0) } else { (0, 1) };
                let mut spec = NumberFieldSpec {
                    kind,
                    l1,
                    l2,
                    degree: 2,
                    integral_basis: vec![FieldElement::from_ints(&[1, 0]), FieldElement::from_ints(&[0, 1])],
                    fundamental_units: vec![],
                    root,
                };
                if d > 0 {
                    let unit = spec.find_fundamental_unit()?;
                    spec.fundamental_units.push(unit);
                }
                Ok(spec)
            }
        }
    }

    /// The radicand d (1 for ℚ).
    pub fn radicand(&self) -> i64 {
        match self.kind {
            FieldKind::Rational => 1,
            FieldKind::Quadratic { d } => d,
        }
    }

    /// True when the integral basis is {1, (1+√d)/2}.
    fn half_integral(&self) -> bool {
        matches!(self.kind, FieldKind::Quadratic { d } if d.rem_euclid(4) == 1)
    }

    /// Number of archimedean places l1 + l2.
    pub fn places(&self) -> usize {
        self.l1 + self.l2
    }

    /// Field discriminant.
    pub fn discriminant(&self) -> i64 {
        match self.kind {
            FieldKind::Rational => 1,
            FieldKind::Quadratic { d } => {
                if self.half_integral() {
                    d
                } else {
                    4 * d
                }
            }
        }
    }

    /// Element with integer coordinates in the integral basis.
    pub fn element(&self, coords: &[i64]) -> FieldElement {
        assert_eq!(coords.len(), self.degree, "coordinate count must equal the degree");
        FieldElement::from_ints(coords)
    }

    /// Element a + b√d written in the power basis (b ignored over ℚ).
    pub fn from_power_basis(&self, a: BigRational, b: BigRational) -> FieldElement {
        match self.kind {
            FieldKind::Rational => FieldElement { coords: vec![a] },
            FieldKind::Quadratic { .. } => {
                if self.half_integral() {
                    // a + b√d = (a − b) + 2b·ω with ω = (1+√d)/2.
                    let two = rational(2);
                    FieldElement { coords: vec![&a - &b, &b * &two] }
                } else {
                    FieldElement { coords: vec![a, b] }
                }
            }
        }
    }

    /// Power-basis coordinates (a, b) with x = a + b√d.
    pub fn to_power_basis(&self, x: &FieldElement) -> (BigRational, BigRational) {
        match self.kind {
            FieldKind::Rational => (x.coords[0].clone(), BigRational::zero()),
            FieldKind::Quadratic { .. } => {
                if self.half_integral() {
                    let half = BigRational::new(1.into(), 2.into());
                    let b = &x.coords[1] * &half;
                    (&x.coords[0] + &b, b)
                } else {
                    (x.coords[0].clone(), x.coords[1].clone())
                }
            }
        }
    }

    /// Exact product.
    pub fn mul(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        let (a, b) = self.to_power_basis(x);
        let (c, e) = self.to_power_basis(y);
        let d = rational(self.radicand());
        match self.kind {
            FieldKind::Rational => FieldElement { coords: vec![a * c] },
            FieldKind::Quadratic { .. } => {
                self.from_power_basis(&a * &c + &b * &e * &d, &a * &e + &b * &c)
            }
        }
    }

    /// Exact trace Tr_{k/ℚ}.
    pub fn trace(&self, x: &FieldElement) -> BigRational {
        let (a, _) = self.to_power_basis(x);
        a * rational(self.degree as i64)
    }

    /// Exact field norm N_{k/ℚ}.
    pub fn norm(&self, x: &FieldElement) -> BigRational {
        let (a, b) = self.to_power_basis(x);
        match self.kind {
            FieldKind::Rational => a,
            FieldKind::Quadratic { d } => &a * &a - &b * &b * rational(d),
        }
    }

    /// Embeds an element into k∞, evaluating the root at high precision first.
    pub fn embed(&self, x: &FieldElement) -> ArchVector {
        let (a, b) = self.to_power_basis(x);
        match self.kind {
            FieldKind::Rational => ArchVector { reals: vec![to_f64(&a)], complexes: vec![] },
            FieldKind::Quadratic { d } => {
                let br = &b * &self.root;
                if d > 0 {
                    ArchVector { reals: vec![to_f64(&(&a + &br)), to_f64(&(&a - &br))], complexes: vec![] }
                } else {
                    ArchVector { reals: vec![], complexes: vec![Complex64::new(to_f64(&a), to_f64(&br))] }
                }
            }
        }
    }

    /// Checks the component counts of an archimedean vector.
    pub fn check(&self, v: &ArchVector) -> Result<()> {
        if v.reals.len() != self.l1 || v.complexes.len() != self.l2 {
            return Err(LabError::InvalidParameter(format!(
                "expected {} real and {} complex slots, got {} and {}",
                self.l1,
                self.l2,
                v.reals.len(),
                v.complexes.len()
            )));
        }
        Ok(())
    }

    /// Searches for the fundamental unit ε > 1 of a real quadratic field.
    fn find_fundamental_unit(&self) -> Result<FieldElement> {
        let d = self.radicand() as i128;
        let half = self.half_integral();
        // Units x + y·ω with y ≥ 1; the smallest y gives the fundamental unit.
        for y in 1..UNIT_SEARCH_LIMIT {
            for target in [-1i128, 1] {
                let x = if half {
                    // x² + xy − c y² = target with c = (d − 1)/4.
                    let c = (d - 1) / 4;
                    let disc = y * y + 4 * (c * y * y + target);
                    if disc < 0 {
                        continue;
                    }
                    let r = disc.sqrt();
                    if r * r != disc || (r - y) % 2 != 0 {
                        continue;
                    }
                    (r - y) / 2
                } else {
                    let sq = d * y * y + target;
                    if sq < 0 {
                        continue;
                    }
                    let r = sq.sqrt();
                    if r * r != sq {
                        continue;
                    }
                    r
                };
                let unit = FieldElement {
                    coords: vec![BigRational::from_integer(x.into()), BigRational::from_integer(y.into())],
                };
                return Ok(unit);
            }
        }
        Err(LabError::BudgetExceeded { needed: f64::INFINITY, budget: UNIT_SEARCH_LIMIT as f64 })
    }

    /// The embedded ring of integers as a lattice in ℝ^l.
    pub fn ok_lattice(&self) -> TorusLattice {
        let basis: Vec<Vec<f64>> =
            self.integral_basis.iter().map(|b| self.embed(b).real_coords()).collect();
        TorusLattice::new(basis, self.discriminant().unsigned_abs())
            .expect("embedded integral basis is linearly independent")
    }
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// ‖v‖ on k∞: |v_i| over real places times |v_j|² over complex places.
pub fn arch_norm(spec: &NumberFieldSpec, v: &ArchVector) -> f64 {
    arch_norm_tuple(spec, std::slice::from_ref(v))
}

/// ‖·‖ of a point of k∞ⁿ given as n archimedean vectors: at every place the
/// standard Euclidean norm of the n-vector, squared at complex places.
pub fn arch_norm_tuple(spec: &NumberFieldSpec, vs: &[ArchVector]) -> f64 {
    let mut out = 1.0;
    for i in 0..spec.l1 {
        out *= vs.iter().map(|v| v.reals[i] * v.reals[i]).sum::<f64>().sqrt();
    }
    for j in 0..spec.l2 {
        out *= vs.iter().map(|v| v.complexes[j].norm_sqr()).sum::<f64>();
    }
    out
}

/// Nm(t) = ∏|t_i| · ∏|t_j|²; H^{(1)} is its kernel.
pub fn nm_map(spec: &NumberFieldSpec, t: &ArchVector) -> Result<f64> {
    spec.check(t)?;
    let mut out = 1.0;
    for (i, x) in t.reals.iter().enumerate() {
        if *x == 0.0 {
            return Err(LabError::ZeroSlot { slot: i });
        }
        out *= x.abs();
    }
    for (j, z) in t.complexes.iter().enumerate() {
        if z.norm_sqr() == 0.0 {
            return Err(LabError::ZeroSlot { slot: spec.l1 + j });
        }
        out *= z.norm_sqr();
    }
    Ok(out)
}

/// |N(x)| as an exact rational, used by oracles.
pub fn abs_norm(spec: &NumberFieldSpec, x: &FieldElement) -> BigRational {
    spec.norm(x).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_of_basic_elements() {
        let q = NumberFieldSpec::rational();
        assert_eq!(q.embed(&q.element(&[3])).reals, vec![3.0]);
        let k = NumberFieldSpec::quadratic(2).unwrap();
        let v = k.embed(&k.element(&[1, 1]));
        assert!((v.reals[0] - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!((v.reals[1] - (1.0 - 2f64.sqrt())).abs() < 1e-15);
        let g = NumberFieldSpec::quadratic(-1).unwrap();
        let z = g.embed(&g.element(&[1, 1]));
        assert_eq!(z.complexes[0], Complex64::new(1.0, 1.0));
    }

    #[test]
    fn signature_follows_sign_of_d() {
        let k = NumberFieldSpec::quadratic(5).unwrap();
        assert_eq!((k.l1, k.l2, k.degree), (2, 0, 2));
        let k = NumberFieldSpec::quadratic(-3).unwrap();
        assert_eq!((k.l1, k.l2, k.degree), (0, 1, 2));
        assert!(NumberFieldSpec::quadratic(8).is_err());
    }

    #[test]
    fn arch_norm_examples() {
        let q = NumberFieldSpec::rational();
        let e1 = ArchVector { reals: vec![1.0], complexes: vec![] };
        let zero = ArchVector { reals: vec![0.0], complexes: vec![] };
        assert_eq!(arch_norm_tuple(&q, &[e1, zero.clone(), zero]), 1.0);
        let k = NumberFieldSpec::quadratic(2).unwrap();
        assert!((arch_norm(&k, &k.embed(&k.element(&[1, 1]))) - 1.0).abs() < 1e-12);
        let g = NumberFieldSpec::quadratic(-1).unwrap();
        assert!((arch_norm(&g, &g.embed(&g.element(&[1, 1]))) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nm_map_examples() {
        let q = NumberFieldSpec::rational();
        assert_eq!(nm_map(&q, &ArchVector { reals: vec![5.0], complexes: vec![] }).unwrap(), 5.0);
        assert_eq!(nm_map(&q, &ArchVector { reals: vec![-2.0], complexes: vec![] }).unwrap(), 2.0);
        assert!(matches!(
            nm_map(&q, &ArchVector { reals: vec![0.0], complexes: vec![] }),
            Err(LabError::ZeroSlot { slot: 0 })
        ));
        let k = NumberFieldSpec::quadratic(2).unwrap();
        assert!((nm_map(&k, &k.embed(&k.element(&[1, 1]))).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fundamental_units_have_norm_one() {
        for (d, expected) in [(2, [1, 1]), (3, [2, 1]), (5, [0, 1]), (13, [1, 1]), (7, [8, 3])] {
            let k = NumberFieldSpec::quadratic(d).unwrap();
            let u = &k.fundamental_units[0];
            assert_eq!(u, &k.element(&expected), "d = {d}");
            assert!(k.norm(u).abs().is_one());
            assert!((nm_map(&k, &k.embed(u)).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn half_integral_basis_multiplies_correctly() {
        let k = NumberFieldSpec::quadratic(5).unwrap();
        let w = k.element(&[0, 1]);
        // ω² = ω + 1 for ω = (1+√5)/2.
        assert_eq!(k.mul(&w, &w), k.element(&[1, 1]));
        assert_eq!(k.trace(&w), rational(1));
        assert_eq!(k.norm(&w), rational(-1));
    }

    #[test]
    fn lattice_covolume_matches_discriminant() {
        for d in [2i64, 3, 5, -1, -3, -5, 13] {
            let k = NumberFieldSpec::quadratic(d).unwrap();
            let lat = k.ok_lattice();
            let expected = (k.discriminant().abs() as f64).sqrt() / 2f64.powi(k.l2 as i32);
            assert!((lat.covolume() - expected).abs() < 1e-12, "d = {d}");
        }
        let q = NumberFieldSpec::rational().ok_lattice();
        assert_eq!(q.basis, vec![vec![1.0]]);
    }

    #[test]
    fn json_round_trip() {
        let k = NumberFieldSpec::quadratic(2).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, r#"{"kind":"quadratic","d":2}"#);
        let back: NumberFieldSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
        let q: NumberFieldSpec = serde_json::from_str(r#"{"kind":"rational"}"#).unwrap();
        assert_eq!(q.degree, 1);
    }
}
