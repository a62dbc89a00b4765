//! Partial sums of E and E* over ℚ, ℚ(i) and ℚ(√2): the relation
//! E = ζ_k(2s)·E*, modular invariance, the Siegel transform of |x|^k, and the
//! trivial-class inversion from E back to E*.

use std::time::Instant;

use num_complex::Complex64;
use quadric_lab::eisenstein::{
    class_transform, dedekind_zeta, e_partial, estar_partial, principal_l_values, section, siegel_g_power, ClassGroupData,
    UpperHalfTuple,
};
use quadric_lab::number_field::NumberFieldSpec;

fn main() -> quadric_lab::Result<()> {
    let q = NumberFieldSpec::rational();
    let z = Complex64::new(0.2, 1.3);
    let tuple = UpperHalfTuple::rational(z)?;
    for s in [1.5, 2.0, 3.0] {
        let start = Instant::now();
        let e = e_partial(&q, &tuple, s, 1000)?;
        let es = estar_partial(&q, &tuple, s, 1000)?;
        let zeta = dedekind_zeta(&q, 2.0 * s)?;
        println!(
            "Q, s = {s}: E = {:.10}, ζ(2s)·E* = {:.10}, tail share {:.1e} ({:.1?})",
            e.corrected(),
            zeta * es.corrected(),
            e.tail / e.corrected(),
            start.elapsed()
        );
    }

    // E*(γz) = E*(z) for γ = [[1, 1], [1, 2]].
    let gz = (z + 1.0) / (z + 2.0);
    let a = estar_partial(&q, &tuple, 2.0, 1000)?.corrected();
    let b = estar_partial(&q, &UpperHalfTuple::rational(gz)?, 2.0, 1000)?.corrected();
    println!("modular invariance: E*(z) = {a:.10}, E*(γz) = {b:.10}");

    // The Siegel transform of x ↦ x^{s+2}, evaluated at ‖gv‖⁻¹, is E*(g⁻¹i, s/2 + 1).
    let g = section(z);
    let siegel = siegel_g_power(4.0, &g, 1000.0)?;
    println!("Siegel transform of x⁴: {:.10} vs E*(z, 2) = {a:.10}", siegel.corrected());

    for (name, k, point) in [
        ("Q(i)", NumberFieldSpec::quadratic(-1)?, UpperHalfTuple::new(vec![], vec![(Complex64::new(0.1, 0.2), 1.1)])?),
        (
            "Q(sqrt 2)",
            NumberFieldSpec::quadratic(2)?,
            UpperHalfTuple::new(vec![Complex64::new(0.1, 1.2), Complex64::new(-0.3, 0.9)], vec![])?,
        ),
    ] {
        let start = Instant::now();
        let e = e_partial(&k, &point, 2.0, 60)?;
        let es = estar_partial(&k, &point, 2.0, 60)?;
        let l = principal_l_values(&k, 2.0)?;
        let back = class_transform(&[Complex64::new(e.corrected(), 0.0)], &l, &ClassGroupData::trivial())?;
        println!(
            "{name}, s = 2: E = {:.8}, E* = {:.8}, E* from class inversion = {:.8} ({:.1?})",
            e.corrected(),
            es.corrected(),
            back[0].re,
            start.elapsed()
        );
    }
    Ok(())
}
