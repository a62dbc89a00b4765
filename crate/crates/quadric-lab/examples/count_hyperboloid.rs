//! Counts integer points on x² + y² − z² = 1 by Euclidean height, splits them
//! into SL₂(ℤ)-orbit classes, and fits the T·log T + T main term.

use std::time::Instant;

use quadric_lab::quadric_counting::{
    fit_main_term, orbit_count, CountSeries, NormChoice, TernaryQuadricProblem, DEFAULT_PLATEAU_BUDGET,
};

fn main() -> quadric_lab::Result<()> {
    let problem = TernaryQuadricProblem::hyperboloid(1, NormChoice::Euclidean)?;
    println!("{}", problem.validate()?.diagnostic);
    println!("N(5) = {}", problem.brute_force_count(5.0)?);

    for t in [100.0, 1000.0] {
        let start = Instant::now();
        let classes = orbit_count(&problem, t, DEFAULT_PLATEAU_BUDGET)?;
        let total: u64 = classes.values().sum();
        println!("T = {t}: {total} points in {} orbit classes ({:.2?})", classes.len(), start.elapsed());
        for (rep, n) in classes.iter().take(5) {
            println!("  {rep:?}: {n}");
        }
    }

    let start = Instant::now();
    let mut series = CountSeries::measure(&problem, &[1e3, 3e3, 1e4, 3e4, 1e5])?;
    let fit = fit_main_term(&series)?;
    println!("counts: {:?} ({:.2?})", series.samples, start.elapsed());
    println!("c1 = {:.5}, c2 = {:.5}, relative residuals = {:?}", fit.c1, fit.c2, fit.relative_residuals);
    println!("remainder exponent δ̂ = {:.3}", fit.remainder_delta());
    series.fit = Some(fit);
    Ok(())
}
