//! Generator systems from an embedding: the sphere in R^3 and a random
//! embedding in R^4 with its induced metric.

use nabla_calc::checks::{generator_identities, grid_divergence};
use nabla_calc::generators::{build_generators, structure_functions, EmbeddingSpec};
use nabla_calc::samples::trial_rng;
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, Result};

fn main() -> Result<()> {
    let grid = ChartGrid::cube(2, -1.0, 1.0, 65)?.with_support_tol(None);
    let sphere = Chart::new(grid.clone(), MetricField::stereographic_sphere())?;
    let gens = build_generators(&sphere, &EmbeddingSpec::sphere_ambient())?;
    println!("sphere: {} generators", gens.count());
    let p = sphere.grid().point_of(&[40, 20]);
    for j in 0..gens.count() {
        println!("  Z_{} at {:?} = {:?}", j + 1, sphere.grid().coords(p), gens.z_at(p, j));
    }
    let e = sphere.bundle(&BundleSpec::magnetic_example())?;
    println!("  identities: {}", generator_identities(&gens, &e, 3, 1, 1e-5)?.detail);
    println!("  grid divergence vs trace: {:.3e}", grid_divergence(&sphere, 3, 1, 1e-5)?.measured);
    let sf = structure_functions(&gens)?;
    println!("  G^3_12 = {:.5}, L^3_12 = {:.5}", sf.g_at(p, 0, 1, 2), sf.l_at(p, 0, 1, 2));

    let emb = EmbeddingSpec::random(&mut trial_rng(5, 0), 2, 4).with_isometric(true);
    let chart = Chart::new(grid, emb.induced_metric())?;
    let gens = build_generators(&chart, &emb)?;
    let e = chart.bundle(&BundleSpec::flat(2, 2))?;
    println!("random embedding: {}", generator_identities(&gens, &e, 3, 1, 1e-5)?.detail);
    Ok(())
}
