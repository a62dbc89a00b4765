//! Property tests across modules: decompositions reconstruct, group actions
//! preserve their invariants, reductions replay, counts are monotone, and the
//! automorphic objects are invariant under SL₂(ℤ).

use num_complex::Complex64;
use proptest::prelude::*;
use quadric_lab::eisenstein::{estar_partial, UpperHalfTuple};
use quadric_lab::equidist_lab::{mobius_real, reduce, TestBump};
use quadric_lab::group_kit::{kau_decompose, khu_decompose, GroupElement, Mat2, RealMat2, Sign};
use quadric_lab::number_field::NumberFieldSpec;
use quadric_lab::quadric_counting::{orbit_reduce, spin_act, NormChoice, TernaryQuadricProblem, DEFAULT_PLATEAU_BUDGET};

/// A random SL₂(ℝ) element k_θ·diag(e^t, e^{−t})·n_x.
fn sl2r() -> impl Strategy<Value = RealMat2> {
    (-3.2f64..3.2, -2.0f64..2.0, -3.0f64..3.0).prop_map(|(theta, t, x)| {
        let (s, c) = theta.sin_cos();
        let (a, d) = (t.exp(), (-t).exp());
        // [[c, −s], [s, c]] · [[a, a·x], [0, d]]
        [[c * a, c * a * x - s * d], [s * a, s * a * x + c * d]]
    })
}

/// A random SL₂(ℤ) element as a product of S and T^n.
fn sl2z() -> impl Strategy<Value = [[i64; 2]; 2]> {
    prop::collection::vec(-3i64..=3, 0..5).prop_map(|ns| {
        let mut m = [[1i64, 0], [0, 1]];
        for n in ns {
            // m ← m·T^n·S
            let t = [[m[0][0], m[0][0] * n + m[0][1]], [m[1][0], m[1][0] * n + m[1][1]]];
            m = [[t[0][1], -t[0][0]], [t[1][1], -t[1][0]]];
        }
        m
    })
}

fn max_diff(a: &RealMat2, b: &RealMat2) -> f64 {
    (0..4).map(|i| (a[i / 2][i % 2] - b[i / 2][i % 2]).abs()).fold(0.0, f64::max)
}

fn scale(g: &RealMat2) -> f64 {
    g.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kau_reconstructs_whenever_defined(g in sl2r(), plus in any::<bool>()) {
        let sign = if plus { Sign::Plus } else { Sign::Minus };
        let col = if plus { 0 } else { 1 };
        let norm = (g[0][col].powi(2) + g[1][col].powi(2)).sqrt();
        match kau_decompose(&g, sign) {
            Ok(d) => prop_assert!(max_diff(&d.reconstruct(), &g) < 1e-9 * scale(&g).powi(2)),
            Err(_) => prop_assert!(norm < 1.0 + 1e-9),
        }
    }

    #[test]
    fn khu_reconstructs_real_elements(g in sl2r(), plus in any::<bool>()) {
        let sign = if plus { Sign::Plus } else { Sign::Minus };
        let ge = GroupElement::real(g).unwrap();
        let d = khu_decompose(&ge, sign);
        prop_assert!(d.reconstruct().distance(&ge) < 1e-8 * scale(&g).powi(2));
    }

    #[test]
    fn khu_reconstructs_mixed_elements(g in sl2r(), h in sl2r(), phase in -3.0f64..3.0) {
        // One real place and one complex place; the complex matrix is h
        // conjugated by diag(e^{iφ/2}, e^{−iφ/2}).
        let e = Complex64::from_polar(1.0, phase / 2.0);
        let hc: Mat2 = [
            [Complex64::new(h[0][0], 0.0), e * e * h[0][1]],
            [h[1][0] / (e * e), Complex64::new(h[1][1], 0.0)],
        ];
        let gr: Mat2 = g.map(|row| row.map(|v| Complex64::new(v, 0.0)));
        let ge = GroupElement::new(1, vec![gr, hc]).unwrap();
        let d = khu_decompose(&ge, Sign::Plus);
        prop_assert!(d.reconstruct().distance(&ge) < 1e-8 * (scale(&g) * scale(&h)).powi(2));
    }

    #[test]
    fn spin_action_preserves_discriminant_and_composes(
        g in sl2z(), h in sl2z(), x in prop::array::uniform3(-50i64..50),
    ) {
        let disc = |v: &[i64; 3]| v[1] * v[1] - 4 * v[0] * v[2];
        let gx = spin_act(&g, &x);
        prop_assert_eq!(disc(&gx), disc(&x));
        // Q ↦ Q((u, v)·g) is a right action: acting by g and then h is acting by h·g.
        let hg = [
            [h[0][0] * g[0][0] + h[0][1] * g[1][0], h[0][0] * g[0][1] + h[0][1] * g[1][1]],
            [h[1][0] * g[0][0] + h[1][1] * g[1][0], h[1][0] * g[0][1] + h[1][1] * g[1][1]],
        ];
        prop_assert_eq!(spin_act(&h, &gx), spin_act(&hg, &x));
    }

    #[test]
    fn reduce_lands_in_fundamental_domain_and_unreduces(x in -20.0f64..20.0, ly in -6.0f64..3.0) {
        let z = Complex64::new(x, ly.exp());
        let p = reduce(z).unwrap();
        prop_assert!(p.z.re.abs() <= 0.5 + 1e-12);
        prop_assert!(p.z.norm() >= 1.0 - 1e-12);
        let back = p.unreduce();
        prop_assert!((back - z).norm() < 1e-8 * (1.0 + z.norm()));
        let m = p.matrix.map(|r| r.map(|v| v as f64));
        prop_assert!((mobius_real(&m, z) - p.z).norm() < 1e-8 * (1.0 + p.z.norm()));
    }

    #[test]
    fn test_function_is_modular_invariant(x in -0.5f64..0.5, y in 0.6f64..1.6, g in sl2z()) {
        let bump = TestBump::new(Complex64::new(0.1, 1.1), 0.4).unwrap();
        let z = Complex64::new(x, y);
        let gz = mobius_real(&g.map(|r| r.map(|v| v as f64)), z);
        prop_assert!((bump.phi_at(gz) - bump.phi_at(z)).abs() < 1e-10);
    }

    #[test]
    fn field_norm_is_multiplicative(d in prop::sample::select(vec![-7i64, -3, -2, -1, 2, 3, 5, 6]),
                                    a in prop::array::uniform2(-30i64..30), b in prop::array::uniform2(-30i64..30)) {
        let k = NumberFieldSpec::quadratic(d).unwrap();
        let (x, y) = (k.element(&a), k.element(&b));
        prop_assert_eq!(k.norm(&k.mul(&x, &y)), k.norm(&x) * k.norm(&y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn primitive_eisenstein_series_is_modular_invariant(x in -0.5f64..0.5, y in 0.9f64..2.0, g in sl2z()) {
        let q = NumberFieldSpec::rational();
        let z = Complex64::new(x, y);
        let gz = mobius_real(&g.map(|r| r.map(|v| v as f64)), z);
        // Keep the image inside a region where a modest cutoff suffices.
        prop_assume!(gz.im > 0.05);
        let a = estar_partial(&q, &UpperHalfTuple::rational(z).unwrap(), 3.0, 400).unwrap().corrected();
        let b = estar_partial(&q, &UpperHalfTuple::rational(gz).unwrap(), 3.0, 400).unwrap().corrected();
        prop_assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
    }

    #[test]
    fn orbit_words_replay_to_the_representative(i in 0usize..10_000, m in prop::sample::select(vec![1i64, 2, -1])) {
        let p = TernaryQuadricProblem::hyperboloid(m, NormChoice::Euclidean).unwrap();
        let points = p.enumerate_points(60.0).unwrap();
        let x = points[i % points.len()];
        let gens = p.default_generators().unwrap();
        let sig = orbit_reduce(&p, &x, &gens, DEFAULT_PLATEAU_BUDGET).unwrap();
        prop_assert_eq!(sig.replay(&p, &gens, &x).unwrap(), sig.representative);
        prop_assert!(p.on_quadric(&sig.representative));
    }

    #[test]
    fn counts_are_monotone_in_t(t in 1.0f64..40.0, dt in 0.0f64..20.0) {
        let p = TernaryQuadricProblem::hyperboloid(1, NormChoice::Max).unwrap();
        prop_assert!(p.brute_force_count(t).unwrap() <= p.brute_force_count(t + dt).unwrap());
    }
}
