//! Generator systems `Z_1..Z_N`, `xi_1..xi_N` from an embedding
//! `Phi: TM -> M x R^N`.
//!
//! With `Psi = (Phi^T Phi)^{-1} Phi^T` we take `Z_j = Psi e_j` and
//! `xi_j = e_j^T Phi`, so `sum_j xi_j (x) Z_j` is the identity of `TM`.

use crate::error::{Error, Result};
use crate::geometry::{christoffel, MetricField, ScalarFn, VectorField};
use crate::grid::{partial_scalar, partial_vec, ANALYTIC_STEP};
use crate::norms::{lp_norm, Exponent};
use crate::section::{Chart, Section};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};

/// Singular values below this fraction of the largest are degenerate.
pub const SIGMA_FLOOR: f64 = 1e-12;

type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A fiberwise injective map `Phi(x): R^n -> R^N`.
#[derive(Clone)]
pub struct EmbeddingSpec {
    dim: usize,
    ambient: usize,
    phi: MatFn,
    isometric: bool,
    name: String,
}

impl std::fmt::Debug for EmbeddingSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EmbeddingSpec({}, n={}, N={})", self.name, self.dim, self.ambient)
    }
}

impl EmbeddingSpec {
    pub fn new(
        dim: usize,
        ambient: usize,
        name: &str,
        isometric: bool,
        phi: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        EmbeddingSpec { dim, ambient, phi: Arc::new(phi), isometric, name: name.into() }
    }

    /// `Phi = 1` on `R^n`.
    pub fn identity(n: usize) -> Self {
        Self::new(n, n, "identity", true, move |_| DMatrix::identity(n, n))
    }

    /// Differential of the inverse stereographic projection
    /// `x -> (2 x_1, 2 x_2, |x|^2 - 1) / (1 + |x|^2)`, isometric for
    /// [`MetricField::stereographic_sphere`].
    pub fn sphere_ambient() -> Self {
        let iota = |x: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let d = 1.0 + r2;
            vec![2.0 * x[0] / d, 2.0 * x[1] / d, (r2 - 1.0) / d]
        };
        Self::from_map(2, 3, "sphere-ambient", true, iota)
    }

    /// The graph `x -> (x, f(x))`, isometric for [`graph_metric`].
    pub fn graph(n: usize, f: ScalarFn) -> Self {
        Self::new(n, n + 1, "graph", true, move |x| {
            let mut m = DMatrix::zeros(n + 1, n);
            for k in 0..n {
                m[(k, k)] = 1.0;
                m[(n, k)] = partial_scalar(&*f, x, k, ANALYTIC_STEP);
            }
            m
        })
    }

    /// Differential of a closed-form map `iota: R^n -> R^N`.
    pub fn from_map(
        dim: usize,
        ambient: usize,
        name: &str,
        isometric: bool,
        iota: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        let f = VectorField::new(dim, iota);
        Self::new(dim, ambient, name, isometric, move |x| {
            let cols: Vec<Vec<f64>> = (0..dim).map(|k| f.derivative(x, k)).collect();
            DMatrix::from_fn(ambient, dim, |i, k| cols[k][i])
        })
    }

    /// `Phi(x) = M + eps * sin(x . w_j) B_j`-style smooth random embedding
    /// with `N` rows, built from `rng`. Not isometric for any fixed metric;
    /// pair it with [`EmbeddingSpec::induced_metric`].
    pub fn random(rng: &mut impl rand::Rng, n: usize, ambient: usize) -> Self {
        let base: Vec<f64> = (0..ambient * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wig: Vec<f64> = (0..ambient * n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let freq: Vec<f64> = (0..ambient * n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut m = DMatrix::from_row_slice(ambient, n, &base);
        for k in 0..n.min(ambient) {
            m[(k, k)] += 2.0;
        }
        Self::new(n, ambient, "random", false, move |x| {
            let s: f64 = x.iter().sum();
            DMatrix::from_fn(ambient, n, |i, k| {
                let e = i * n + k;
                m[(i, k)] + wig[e] * (freq[e] * s + e as f64).sin()
            })
        })
    }

    /// Declares whether `Phi^T Phi` equals the chart metric.
    pub fn with_isometric(mut self, isometric: bool) -> Self {
        self.isometric = isometric;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn ambient(&self) -> usize {
        self.ambient
    }
    pub fn is_isometric(&self) -> bool {
        self.isometric
    }
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        (self.phi)(x)
    }

    /// `Phi^T Phi`, the metric for which `Phi` is isometric.
    pub fn induced_metric(&self) -> MetricField {
        let e = self.clone();
        let n = self.dim;
        MetricField::from_fn(n, &format!("induced({})", self.name), move |x| {
            let p = e.at(x);
            let g = p.transpose() * p;
            (0..n * n).map(|i| g[(i / n, i % n)]).collect()
        })
    }

    /// `Psi(x) = (Phi^T Phi)^{-1} Phi^T`, an `n x N` matrix.
    pub fn psi(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.at(x);
        check_rank(&p, x)?;
        let gram = p.transpose() * &p;
        let inv = gram.try_inverse().ok_or(Error::DegenerateEmbedding { at: x.to_vec(), sigma: 0.0 })?;
        Ok(inv * p.transpose())
    }

    /// Isometric residual `max |Phi^T Phi - g|` over the grid.
    pub fn isometry_defect(&self, chart: &Chart) -> f64 {
        let n = self.dim;
        (0..chart.npts())
            .into_par_iter()
            .map(|q| {
                let p = self.at(&chart.grid().coords(q));
                let pp = p.transpose() * p;
                let g = chart.sampled().g_at(q);
                (0..n * n).map(|i| (pp[(i / n, i % n)] - g[i]).abs()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn check_rank(p: &DMatrix<f64>, x: &[f64]) -> Result<()> {
    let sv = p.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > SIGMA_FLOOR * max) {
        return Err(Error::DegenerateEmbedding { at: x.to_vec(), sigma: min });
    }
    Ok(())
}

/// `I + grad f grad f^T`, the metric induced on the graph of `f`.
pub fn graph_metric(n: usize, f: ScalarFn) -> MetricField {
    MetricField::from_fn(n, "graph", move |x| {
        let d: Vec<f64> = (0..n).map(|k| partial_scalar(&*f, x, k, ANALYTIC_STEP)).collect();
        (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 } + d[i / n] * d[i % n]).collect()
    })
}

fn sym_sqrt(m: &DMatrix<f64>, inverse: bool) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = e.eigenvalues.map(|v| if inverse { 1.0 / v.sqrt() } else { v.sqrt() });
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

/// `Phi' = Phi (Phi^T Phi)^{-1/2} g^{1/2}`, so that `Phi'^T Phi' = g`.
pub fn polar_isometrize(embedding: &EmbeddingSpec, metric: &MetricField) -> EmbeddingSpec {
    let e = embedding.clone();
    let g = metric.clone();
    EmbeddingSpec::new(
        embedding.dim,
        embedding.ambient,
        &format!("polar({})", embedding.name),
        true,
        move |x| {
            let p = e.at(x);
            let gram = p.transpose() * &p;
            &p * sym_sqrt(&gram, true) * sym_sqrt(&g.matrix(x), false)
        },
    )
}

/// Generators on a chart, with their values sampled at grid points.
#[derive(Clone)]
pub struct GeneratorSystem {
    chart: Arc<Chart>,
    embedding: EmbeddingSpec,
    count: usize,
    z: Vec<VectorField>,
    /// `[p][j][k]`: component `k` of `Z_j` at point `p`.
    z_sampled: Vec<f64>,
    /// `[p][j][k]`: component `k` of `xi_j`.
    xi_sampled: Vec<f64>,
    structure: OnceLock<StructureFunctions>,
}

impl std::fmt::Debug for GeneratorSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GeneratorSystem({:?}, N={})", self.embedding, self.count)
    }
}

/// Builds `Z_j = Psi e_j`, `xi_j = e_j^T Phi` and checks injectivity at
/// every grid point.
pub fn build_generators(chart: &Arc<Chart>, embedding: &EmbeddingSpec) -> Result<GeneratorSystem> {
    let n = chart.dim();
    if embedding.dim != n {
        return Err(Error::ChartMismatch(format!("embedding of dim {} on a {n}-dim chart", embedding.dim)));
    }
    let big = embedding.ambient;
    let per_point: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..chart.npts())
        .into_par_iter()
        .map(|q| {
            let x = chart.grid().coords(q);
            let psi = embedding.psi(&x)?;
            let phi = embedding.at(&x);
            let mut z = vec![0.0; big * n];
            let mut xi = vec![0.0; big * n];
            for j in 0..big {
                for k in 0..n {
                    z[j * n + k] = psi[(k, j)];
                    xi[j * n + k] = phi[(j, k)];
                }
            }
            Ok((z, xi))
        })
        .collect();
    let mut z_sampled = Vec::with_capacity(chart.npts() * big * n);
    let mut xi_sampled = Vec::with_capacity(chart.npts() * big * n);
    for r in per_point {
        let (z, xi) = r?;
        z_sampled.extend(z);
        xi_sampled.extend(xi);
    }
    let z = (0..big)
        .map(|j| {
            let e = embedding.clone();
            VectorField::new(n, move |x| {
                let psi = e.psi(x).unwrap_or_else(|_| DMatrix::from_element(n, e.ambient, f64::NAN));
                (0..n).map(|k| psi[(k, j)]).collect()
            })
        })
        .collect();
    Ok(GeneratorSystem { chart: chart.clone(), embedding: embedding.clone(), count: big, z, z_sampled, xi_sampled, structure: OnceLock::new() })
}

impl GeneratorSystem {
    pub fn count(&self) -> usize {
        self.count
    }
    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }
    pub fn embedding(&self) -> &EmbeddingSpec {
        &self.embedding
    }

    /// `Z_j` as a closed-form field.
    pub fn field(&self, j: usize) -> &VectorField {
        &self.z[j]
    }

    /// `Z_j` sampled, `n` reals per point.
    pub fn z_samples(&self, j: usize) -> Vec<f64> {
        let (n, big) = (self.chart.dim(), self.count);
        (0..self.chart.npts()).flat_map(|q| (0..n).map(move |k| (q, k))).map(|(q, k)| self.z_sampled[(q * big + j) * n + k]).collect()
    }

    /// `Z_j` and `xi_j` at point `p`.
    pub fn z_at(&self, p: usize, j: usize) -> &[f64] {
        let n = self.chart.dim();
        let off = (p * self.count + j) * n;
        &self.z_sampled[off..off + n]
    }
    pub fn xi_at(&self, p: usize, j: usize) -> &[f64] {
        let n = self.chart.dim();
        let off = (p * self.count + j) * n;
        &self.xi_sampled[off..off + n]
    }

    /// `max_p |Psi Phi - 1|`.
    pub fn left_inverse_residual(&self) -> f64 {
        let n = self.chart.dim();
        (0..self.chart.npts())
            .map(|p| {
                let mut worst = 0.0f64;
                for a in 0..n {
                    for b in 0..n {
                        let s: f64 = (0..self.count).map(|j| self.z_at(p, j)[a] * self.xi_at(p, j)[b]).sum();
                        worst = worst.max((s - if a == b { 1.0 } else { 0.0 }).abs());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    /// `X - sum_j xi_j(X) Z_j` for a vector field, max over the grid.
    pub fn vector_reconstruction_residual(&self, x: &VectorField) -> f64 {
        let n = self.chart.dim();
        (0..self.chart.npts())
            .map(|p| {
                let xv = x.at(&self.chart.grid().coords(p));
                let mut r = xv.clone();
                for j in 0..self.count {
                    let c: f64 = (0..n).map(|k| self.xi_at(p, j)[k] * xv[k]).sum();
                    for k in 0..n {
                        r[k] -= c * self.z_at(p, j)[k];
                    }
                }
                r.iter().map(|v| v.abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `omega - sum_j omega(Z_j) xi_j` for a covector field, max over the grid.
    pub fn covector_reconstruction_residual(&self, omega: &VectorField) -> f64 {
        let n = self.chart.dim();
        (0..self.chart.npts())
            .map(|p| {
                let w = omega.at(&self.chart.grid().coords(p));
                let mut r = w.clone();
                for j in 0..self.count {
                    let c: f64 = (0..n).map(|k| w[k] * self.z_at(p, j)[k]).sum();
                    for k in 0..n {
                        r[k] -= c * self.xi_at(p, j)[k];
                    }
                }
                r.iter().map(|v| v.abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `nabla_{Z_j} u`.
    pub fn directional(&self, u: &Section, j: usize) -> Result<Section> {
        u.directional(&self.z_samples(j))
    }

    /// `nabla_{Z_{k_1}} .. nabla_{Z_{k_r}} u`, rightmost first.
    pub fn chain(&self, u: &Section, ks: &[usize]) -> Result<Section> {
        let mut v = u.clone();
        for &k in ks.iter().rev() {
            v = self.directional(&v, k)?;
        }
        Ok(v)
    }

    /// `xi_j (x) v`: prepends a lower slot.
    pub fn tau(&self, v: &Section, j: usize) -> Result<Section> {
        let n = self.chart.dim();
        let mut out = Section::zeros(&self.chart, v.lower() + 1, v.upper(), v.out_bundle(), v.in_bundle())
            .with_compact(v.is_compact());
        let c = v.comps();
        let nc = n * c;
        out.data_mut().par_chunks_mut(nc).enumerate().for_each(|(p, o)| {
            let xi = self.xi_at(p, j);
            let src = v.at(p);
            for k in 0..n {
                if xi[k] == 0.0 {
                    continue;
                }
                for (a, b) in o[k * c..(k + 1) * c].iter_mut().zip(src) {
                    *a = b * xi[k];
                }
            }
        });
        Ok(out)
    }
}

/// `sum_j xi_j (x) nabla_{Z_j} u`.
pub fn nabla_via_generators(u: &Section, gens: &GeneratorSystem) -> Result<Section> {
    let mut acc: Option<Section> = None;
    for j in 0..gens.count {
        let t = gens.tau(&gens.directional(u, j)?, j)?;
        acc = Some(match acc {
            None => t,
            Some(a) => a.add(&t)?,
        });
    }
    acc.ok_or_else(|| Error::ShapeMismatch("empty generator system".into()))
}

/// `div X = sum_{k,l} (xi_k, xi_l) (nabla_{Z_k} X, Z_l)` at every grid
/// point; `Phi` must be isometric for the chart metric.
pub fn divergence_via_generators(x: &VectorField, gens: &GeneratorSystem) -> Result<Vec<f64>> {
    if !gens.embedding.isometric {
        return Err(Error::Config(format!("embedding `{}` is not isometric; use polar_isometrize", gens.embedding.name)));
    }
    let chart = gens.chart.clone();
    let n = chart.dim();
    let big = gens.count;
    (0..chart.npts())
        .into_par_iter()
        .map(|p| {
            let pt = chart.grid().coords(p);
            let g = chart.sampled().g_at(p);
            let gi = chart.sampled().ginv_at(p);
            let dz: Vec<Vec<f64>> = (0..big)
                .map(|k| x.covariant_along(chart.metric(), &pt, gens.z_at(p, k)))
                .collect::<Result<_>>()?;
            let mut s = 0.0;
            for k in 0..big {
                for l in 0..big {
                    let (xk, xl) = (gens.xi_at(p, k), gens.xi_at(p, l));
                    let mut xx = 0.0;
                    let mut yz = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            xx += xk[a] * gi[a * n + b] * xl[b];
                            yz += dz[k][a] * g[a * n + b] * gens.z_at(p, l)[b];
                        }
                    }
                    s += xx * yz;
                }
            }
            Ok(s)
        })
        .collect()
}

/// `div X` by the density formula `|g|^{-1/2} d_k (|g|^{1/2} X^k)`.
pub fn divergence_density(x: &VectorField, metric: &MetricField, pt: &[f64]) -> Result<f64> {
    let n = x.dim();
    let m = metric.clone();
    let xf = x.clone();
    let dens = move |y: &[f64]| -> Vec<f64> {
        let g = m.matrix(y);
        let s = g.determinant().sqrt();
        xf.at(y).into_iter().map(|v| v * s).collect()
    };
    let g0 = metric.check_spd(pt)?.determinant().sqrt();
    let mut acc = 0.0;
    for k in 0..n {
        acc += crate::grid::partial_vec(&dens, pt, k, ANALYTIC_STEP)[k];
    }
    Ok(acc / g0)
}

/// Structure functions `G_ij^k = xi_k(nabla_{Z_i} Z_j)` and
/// `L_ij^k = xi_k([Z_i, Z_j])`, stored `[p][i][j][k]`.
#[derive(Clone, Debug)]
pub struct StructureFunctions {
    pub count: usize,
    pub g: Vec<f64>,
    pub l: Vec<f64>,
    /// Largest residual of the two expansion identities.
    pub expansion_residual: f64,
}

impl StructureFunctions {
    pub fn g_at(&self, p: usize, i: usize, j: usize, k: usize) -> f64 {
        let c = self.count;
        self.g[((p * c + i) * c + j) * c + k]
    }
    pub fn l_at(&self, p: usize, i: usize, j: usize, k: usize) -> f64 {
        let c = self.count;
        self.l[((p * c + i) * c + j) * c + k]
    }
}

pub fn structure_functions(gens: &GeneratorSystem) -> Result<StructureFunctions> {
    if let Some(sf) = gens.structure.get() {
        return Ok(sf.clone());
    }
    let sf = compute_structure_functions(gens)?;
    Ok(gens.structure.get_or_init(|| sf).clone())
}

fn compute_structure_functions(gens: &GeneratorSystem) -> Result<StructureFunctions> {
    let chart = gens.chart.clone();
    let n = chart.dim();
    let c = gens.count;
    let emb = gens.embedding.clone();
    // All of Psi at once, `[k][j]` flattened, so each derivative costs one stencil.
    let psi_flat = move |x: &[f64]| -> Vec<f64> {
        match emb.psi(x) {
            Ok(m) => (0..n).flat_map(|k| (0..c).map(move |j| (k, j))).map(|(k, j)| m[(k, j)]).collect(),
            Err(_) => vec![f64::NAN; n * c],
        }
    };
    let blocks: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..chart.npts())
        .into_par_iter()
        .map(|p| {
            let x = chart.grid().coords(p);
            let gam = christoffel(chart.metric(), &x)?;
            // dz[a][k][j] = d_a Z_j^k
            let dz: Vec<Vec<f64>> = (0..n).map(|a| partial_vec(&psi_flat, &x, a, ANALYTIC_STEP)).collect();
            let mut g = vec![0.0; c * c * c];
            let mut l = vec![0.0; c * c * c];
            let mut worst = 0.0f64;
            for i in 0..c {
                let zi = gens.z_at(p, i);
                for j in 0..c {
                    let zj = gens.z_at(p, j);
                    let mut cov = vec![0.0; n];
                    let mut br = vec![0.0; n];
                    for m in 0..n {
                        for a in 0..n {
                            let mut s = dz[a][m * c + j];
                            for q in 0..n {
                                s += gam.get(m, a, q) * zj[q];
                            }
                            cov[m] += zi[a] * s;
                            br[m] += zi[a] * dz[a][m * c + j] - zj[a] * dz[a][m * c + i];
                        }
                    }
                    let mut rc = cov.clone();
                    let mut rb = br.clone();
                    for k in 0..c {
                        let xi = gens.xi_at(p, k);
                        let gk: f64 = (0..n).map(|a| xi[a] * cov[a]).sum();
                        let lk: f64 = (0..n).map(|a| xi[a] * br[a]).sum();
                        g[(i * c + j) * c + k] = gk;
                        l[(i * c + j) * c + k] = lk;
                        for a in 0..n {
                            rc[a] -= gk * gens.z_at(p, k)[a];
                            rb[a] -= lk * gens.z_at(p, k)[a];
                        }
                    }
                    let scale = 1.0 + cov.iter().chain(&br).map(|v| v.abs()).fold(0.0, f64::max);
                    let r = rc.iter().chain(&rb).map(|v| v.abs()).fold(0.0, f64::max) / scale;
                    worst = worst.max(r);
                }
            }
            Ok((g, l, worst))
        })
        .collect();
    let mut out = StructureFunctions { count: c, g: Vec::new(), l: Vec::new(), expansion_residual: 0.0 };
    for b in blocks {
        let (g, l, w) = b?;
        out.g.extend(g);
        out.l.extend(l);
        out.expansion_residual = out.expansion_residual.max(w);
    }
    Ok(out)
}

/// All index tuples of length `r` over `0..count`, lexicographic.
pub fn tuples(count: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..count).map(move |k| {
                    let mut t2 = t.clone();
                    t2.push(k);
                    t2
                })
            })
            .collect();
    }
    out
}

/// Non-decreasing tuples of length `r`.
pub fn ordered_tuples(count: usize, r: usize) -> Vec<Vec<usize>> {
    tuples(count, r).into_iter().filter(|t| t.windows(2).all(|w| w[0] <= w[1])).collect()
}

/// Components `w(Z_{k_1}, .., Z_{k_mu})` of a field with `mu` lower slots,
/// keyed by tuple.
pub fn decompose_tensor(w: &Section, gens: &GeneratorSystem) -> Result<Vec<(Vec<usize>, Section)>> {
    tuples(gens.count, w.lower())
        .into_iter()
        .map(|t| {
            let mut v = w.clone();
            for &k in &t {
                v = v.contract_first(&gens.z_samples(k))?;
            }
            Ok((t, v))
        })
        .collect()
}

/// `sum_k xi_{k_1} (x) .. (x) xi_{k_mu} (x) c_k`.
pub fn reassemble_tensor(parts: &[(Vec<usize>, Section)], gens: &GeneratorSystem) -> Result<Section> {
    let mut acc: Option<Section> = None;
    for (t, c) in parts {
        let mut v = c.clone();
        for &k in t.iter().rev() {
            v = gens.tau(&v, k)?;
        }
        acc = Some(match acc {
            None => v,
            Some(a) => a.add(&v)?,
        });
    }
    acc.ok_or_else(|| Error::ShapeMismatch("nothing to reassemble".into()))
}

/// `l^p` combination over `j <= s` and tuples `k` of
/// `||nabla_{Z_{k_1}} .. nabla_{Z_{k_j}} u||_{L^p}`; non-decreasing tuples
/// only when `ordered`.
pub fn generator_sobolev_norm(u: &Section, s: usize, p: Exponent, gens: &GeneratorSystem, ordered: bool) -> Result<f64> {
    let mut parts = Vec::new();
    for j in 0..=s {
        let ts = if ordered { ordered_tuples(gens.count, j) } else { tuples(gens.count, j) };
        for t in ts {
            parts.push(lp_norm(&gens.chain(u, &t)?, p)?);
        }
    }
    Ok(p.combine(&parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;

    #[test]
    fn identity_generators_are_coordinates() {
        let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 9).unwrap()).unwrap();
        let g = build_generators(&chart, &EmbeddingSpec::identity(2)).unwrap();
        assert_eq!(g.z_at(3, 1), &[0.0, 1.0]);
        assert_eq!(g.xi_at(3, 0), &[1.0, 0.0]);
        assert_eq!(g.left_inverse_residual(), 0.0);
        let sf = structure_functions(&g).unwrap();
        assert!(sf.g.iter().chain(&sf.l).all(|v| *v == 0.0));
    }

    #[test]
    fn polar_of_scaled_identity() {
        let e = EmbeddingSpec::new(2, 2, "2I", false, |_| DMatrix::identity(2, 2) * 2.0);
        let p = polar_isometrize(&e, &MetricField::euclidean(2));
        let m = p.at(&[0.3, 0.1]);
        assert!((m - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-15);
    }

    #[test]
    fn degenerate_embedding_is_rejected() {
        let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 5).unwrap()).unwrap();
        let e = EmbeddingSpec::new(2, 2, "rank1", false, |_| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(build_generators(&chart, &e), Err(Error::DegenerateEmbedding { .. })));
    }

    #[test]
    fn ordered_tuple_counts() {
        assert_eq!(tuples(3, 2).len(), 9);
        assert_eq!(ordered_tuples(3, 2).len(), 6);
        assert_eq!(ordered_tuples(3, 0), vec![Vec::<usize>::new()]);
    }
}
