//! The explicit constants: norm equivalence under a perturbed connection and
//! the product estimate, against what random trials actually reach.

use nabla_calc::checks::{multiplication, perturbed_norms, skew_perturbation};
use nabla_calc::norms::{equivalence_constant, multiplication_constant, perturbed_norm_check, Exponent};
use nabla_calc::samples::random_section;
use nabla_calc::{BundleSpec, Chart, ChartGrid, Result};

fn main() -> Result<()> {
    let inf = Exponent::Infinite;
    let two = Exponent::Finite(2.0);
    for l in 0..=3 {
        println!(
            "l = {l}: product constant {:.3}, equivalence constant at |A| = 1: {:.3}",
            multiplication_constant(l, inf, two, two)?,
            equivalence_constant(l, 2.0, 1.0)?
        );
    }

    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 65)?)?;
    let e = chart.bundle(&BundleSpec::magnetic_example())?;
    let u = random_section(&chart, &e, 2, 0)?;
    for l in 0..=2 {
        let r = perturbed_norm_check(&u, skew_perturbation(2, 2, 1.0, 2, 0), l, 2.0)?;
        println!("l = {l}: ratio {:.4} within [1/{:.3}, {:.3}]", r.ratio, r.constant, r.constant);
    }
    println!("worst over 20 trials: {:.4} of the constant", perturbed_norms(&chart, &e, 20, 4)?.measured);
    println!("worst product / bound over 20 trials: {:.4}", multiplication(&chart, &e, 20, 4)?.measured);
    Ok(())
}
