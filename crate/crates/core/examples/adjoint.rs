//! Integration by parts for `nabla_X`: the formal adjoint is
//! `-(nabla_X + div X)` on compactly supported sections.

use nabla_calc::calculus::{adjoint_pairing_defect, integrate_inner};
use nabla_calc::checks::{adjoint_pairing, random_vector_field};
use nabla_calc::samples::{trial_rng, CompactBump};
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, Result, Section};

fn main() -> Result<()> {
    let chart = Chart::new(ChartGrid::cube(2, -1.0, 1.0, 129)?, MetricField::stereographic_sphere())?;
    let e = chart.bundle(&BundleSpec::magnetic_example())?;
    let mut rng = trial_rng(3, 0);
    let g = chart.grid();
    let a = CompactBump::in_box(&mut rng, g.lower(), g.upper(), 2, 0.05, (0.35, 0.4));
    let b = CompactBump::in_box(&mut rng, g.lower(), g.upper(), 2, 0.05, (0.35, 0.4));
    let u = Section::of_bundle(&chart, &e, |x| a.value(x))?;
    let v = Section::of_bundle(&chart, &e, |x| b.value(x))?;
    let x = random_vector_field(2, 1.0, 3, 0);
    println!("(u, v) = {:.6}", integrate_inner(&u, &v)?);
    println!("pairing defect / (|u| |v|) = {:.3e}", adjoint_pairing_defect(&u, &v, &x)?);

    for points in [65, 129, 257] {
        let c = Chart::new(ChartGrid::cube(2, -1.0, 1.0, points)?, MetricField::stereographic_sphere())?;
        let o = adjoint_pairing(&c, &c.bundle(&BundleSpec::magnetic_example())?, 5, 9, 1e-6)?;
        println!("{points:>4} points: worst defect {:.3e}", o.measured);
    }
    Ok(())
}
