//! Sobolev norms from the connection, a covering norm and a weighted norm.

use nabla_calc::checks::random_covering;
use nabla_calc::norms::{covering_norm, sobolev_norm, weighted_sobolev_norm, Exponent};
use nabla_calc::samples::random_section;
use nabla_calc::{BundleSpec, Chart, ChartGrid, Result, WeightPair};
use std::sync::Arc;

fn main() -> Result<()> {
    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 97)?)?;
    let flat = chart.bundle(&BundleSpec::flat(2, 2))?;
    let magnetic = chart.bundle(&BundleSpec::magnetic_example())?;
    let u = random_section(&chart, &magnetic, 5, 0)?;
    let same = random_section(&chart, &flat, 5, 0)?;

    println!(" s  p     magnetic     flat");
    for s in 0..=2 {
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinite] {
            println!(
                " {s}  {:<4}  {:<11.5e}  {:.5e}",
                p.value(),
                sobolev_norm(&u, s, p)?,
                sobolev_norm(&same, s, p)?
            );
        }
    }

    let two = Exponent::Finite(2.0);
    for n in 1..=4 {
        let cov = random_covering(chart.grid().lower(), chart.grid().upper(), n, 5, n as u64);
        let c = covering_norm(&u, &cov, 1, two)?;
        println!("covering with N = {}: {:.5e} (plain {:.5e})", c.multiplicity, c.value, sobolev_norm(&u, 1, two)?);
    }

    let w = WeightPair::new(Arc::new(|x: &[f64]| 1.5 + 0.5 * x[0]), Arc::new(|_| 1.0));
    println!("weighted W^(1,2): {:.5e}", weighted_sobolev_norm(&u, 1, two, &w)?);
    Ok(())
}
