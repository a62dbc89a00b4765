//! Averages a smooth bump on the torus ℝ²/O_k, k = ℚ(√2), along expanding line
//! segments and watches the discrepancy decay like 1/T; then repeats for a
//! complex direction in ℚ(i), restricted to an arc of angles.

use quadric_lab::number_field::NumberFieldSpec;
use quadric_lab::torus_lines::{discrepancy_sweep, Direction, LineSpec, SweepOptions, TrigPolynomial};

fn main() -> quadric_lab::Result<()> {
    let ts = [1e2, 1e3, 1e4, 1e5];
    for (k, direction) in [
        (NumberFieldSpec::quadratic(2)?, Direction::Real { index: 0 }),
        (NumberFieldSpec::quadratic(-1)?, Direction::Complex { index: 0, interval: (0.1, 1.2) }),
    ] {
        let lattice = k.ok_lattice();
        let f = TrigPolynomial::smooth_bump(&lattice, 2, 0.5);
        let template = LineSpec { l1: k.l1, direction, offset: vec![0.123; lattice.dim()], t0: 0.0, t: 1.0 };
        let opts = SweepOptions { field: Some(k.clone()), ..SweepOptions::default() };
        let sweep = discrepancy_sweep(&f, &lattice, &template, &ts, &opts)?;
        println!("field of discriminant {}, direction {:?}", k.discriminant(), template.direction);
        sweep.write_csv(std::io::stdout())?;
        println!("decay exponent {:.3}, quadrature noise / smallest error {:.2e}\n", sweep.fit.decay_exponent(), sweep.noise_ratio());
    }
    Ok(())
}
