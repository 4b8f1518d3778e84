//! Differential operators in nabla form and in mixed form over generators,
//! and the rewrite into sorted generator words.

use nabla_calc::generators::{build_generators, EmbeddingSpec};
use nabla_calc::operators::*;
use nabla_calc::samples::{random_coefficient, random_section};
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, Result, Section};

fn main() -> Result<()> {
    let grid = ChartGrid::cube(2, -1.0, 1.0, 97)?.with_support_tol(None);
    let chart = Chart::new(grid, MetricField::stereographic_sphere())?;
    let e = chart.bundle(&BundleSpec::magnetic_example())?;
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient())?;

    let a = random_coefficient(&chart, 0, 0, &e, &e, 1, 0)?;
    let p = compose(&NablaOpSpec::multiplication(&a, CoefficientClass::Smooth)?, &NablaOpSpec::laplacian(&chart, &e))?;
    println!("a * Laplacian: order {}, class {:?}", p.order(), p.class());

    let mut m = MixedOpSpec::over_generators(&gens, &e, &e, CoefficientClass::Smooth);
    m.push(Section::identity(&chart, &e), vec![2, 0, 1])?;
    m.push(a, vec![1, 0])?;
    let sorted = reorder_generators(&nabla_to_mixed(&mixed_to_nabla(&m)?, &gens)?, &gens)?;
    println!("Z3 Z1 Z2 + a Z2 Z1 rewritten as {} sorted words:", sorted.terms().len());
    for t in sorted.terms() {
        println!("  {:?}", t.fields);
    }

    let u = random_section(&chart, &e, 2, 0)?;
    let want = m.apply(&u)?;
    let got = sorted.apply(&u)?;
    println!("relative difference on a bump: {:.3e}", got.sub(&want)?.max_abs_interior(24) / want.max_abs_interior(24));
    Ok(())
}
