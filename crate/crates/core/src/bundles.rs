//! Trivialized Hermitian bundles with connection potentials, and the
//! connections they induce on tensor products, duals and Hom bundles.
//!
//! A connection on `E = C^d` over the chart is `nabla_k = d_k + A_k` with
//! `A_k(x)` a complex `d x d` matrix.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{partial_cvec, ChartGrid, ANALYTIC_STEP};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

type CFn = Arc<dyn Fn(&[f64]) -> Vec<C64> + Send + Sync>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// A bundle `E = C^d` over an `n`-dimensional chart.
#[derive(Clone)]
pub struct BundleSpec {
    base_dim: usize,
    fiber_dim: usize,
    /// `x -> [A_1, .., A_n]`, each row-major `d x d`; `None` for the flat connection.
    potentials: Option<CFn>,
    /// `x -> H(x)` row-major; `None` for the identity.
    fiber_metric: Option<CFn>,
    name: String,
}

impl std::fmt::Debug for BundleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BundleSpec({}, n={}, d={})", self.name, self.base_dim, self.fiber_dim)
    }
}

impl BundleSpec {
    /// Flat connection on `C^d`.
    pub fn flat(base_dim: usize, fiber_dim: usize) -> Self {
        BundleSpec { base_dim, fiber_dim, potentials: None, fiber_metric: None, name: format!("flat{fiber_dim}") }
    }

    /// The trivial line bundle.
    pub fn trivial(base_dim: usize) -> Self {
        Self::flat(base_dim, 1)
    }

    /// Potentials given as `x -> [A_1, .., A_n]` flattened.
    pub fn from_fn(
        base_dim: usize,
        fiber_dim: usize,
        name: &str,
        f: impl Fn(&[f64]) -> Vec<C64> + Send + Sync + 'static,
    ) -> Self {
        BundleSpec { base_dim, fiber_dim, potentials: Some(Arc::new(f)), fiber_metric: None, name: name.into() }
    }

    /// Entries of each `A_k` as expressions; `entries[k]` has `d*d` strings.
    pub fn from_exprs(base_dim: usize, fiber_dim: usize, entries: &[Vec<String>]) -> Result<Self> {
        if entries.len() != base_dim || entries.iter().any(|e| e.len() != fiber_dim * fiber_dim) {
            return Err(Error::Config(format!(
                "potentials need {base_dim} matrices of {} entries",
                fiber_dim * fiber_dim
            )));
        }
        let exprs = entries
            .iter()
            .flatten()
            .map(|s| Expr::parse(s, base_dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_fn(base_dim, fiber_dim, "expr", move |x| exprs.iter().map(|e| e.eval(x)).collect()))
    }

    /// The magnetic bundle on `R^2` with fiber `C^2`, `A_1 = 0` and
    /// `A_2 = [[0, e^{i x1^3}], [-e^{-i x1^3}, 0]]`.
    pub fn magnetic_example() -> Self {
        Self::from_fn(2, 2, "magnetic-example", |x| {
            let e = C64::new(0.0, x[0].powi(3)).exp();
            vec![ZERO, ZERO, ZERO, ZERO, ZERO, e, -e.conj(), ZERO]
        })
    }

    pub fn with_fiber_metric(mut self, f: impl Fn(&[f64]) -> Vec<C64> + Send + Sync + 'static) -> Self {
        self.fiber_metric = Some(Arc::new(f));
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }
    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn is_flat(&self) -> bool {
        self.potentials.is_none()
    }
    pub fn has_identity_metric(&self) -> bool {
        self.fiber_metric.is_none()
    }

    /// `[A_1, .., A_n]` at `x`, each row-major.
    pub fn potentials_at(&self, x: &[f64]) -> Vec<C64> {
        match &self.potentials {
            Some(f) => f(x),
            None => vec![ZERO; self.base_dim * self.fiber_dim * self.fiber_dim],
        }
    }

    /// `A_k(x)` as a matrix.
    pub fn potential(&self, x: &[f64], k: usize) -> DMatrix<C64> {
        let d = self.fiber_dim;
        let all = self.potentials_at(x);
        DMatrix::from_row_slice(d, d, &all[k * d * d..(k + 1) * d * d])
    }

    /// `d_j A_k` at `x` for all `k`, flattened like [`BundleSpec::potentials_at`].
    pub fn potential_derivative(&self, x: &[f64], j: usize) -> Vec<C64> {
        match &self.potentials {
            Some(f) => partial_cvec(&**f, x, j, ANALYTIC_STEP),
            None => vec![ZERO; self.base_dim * self.fiber_dim * self.fiber_dim],
        }
    }

    pub fn fiber_metric_at(&self, x: &[f64]) -> DMatrix<C64> {
        let d = self.fiber_dim;
        match &self.fiber_metric {
            Some(f) => DMatrix::from_row_slice(d, d, &f(x)),
            None => DMatrix::identity(d, d),
        }
    }

    fn fiber_metric_derivative(&self, x: &[f64], j: usize) -> DMatrix<C64> {
        let d = self.fiber_dim;
        match &self.fiber_metric {
            Some(f) => DMatrix::from_row_slice(d, d, &partial_cvec(&**f, x, j, ANALYTIC_STEP)),
            None => DMatrix::zeros(d, d),
        }
    }
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

fn same_chart(e: &BundleSpec, f: &BundleSpec) -> Result<()> {
    if e.base_dim != f.base_dim {
        return Err(Error::ChartMismatch(format!("bundles over dims {} and {}", e.base_dim, f.base_dim)));
    }
    Ok(())
}

fn combine(
    e: &BundleSpec,
    f: &BundleSpec,
    dim: usize,
    name: String,
    pot: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64> + Send + Sync + 'static,
    metric: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64> + Send + Sync + 'static,
) -> BundleSpec {
    let n = e.base_dim;
    let potentials: Option<CFn> = if e.is_flat() && f.is_flat() {
        None
    } else {
        let (e, f) = (e.clone(), f.clone());
        Some(Arc::new(move |x: &[f64]| {
            let mut out = Vec::with_capacity(n * dim * dim);
            for k in 0..n {
                let m = pot(&e.potential(x, k), &f.potential(x, k));
                for r in 0..dim {
                    for c in 0..dim {
                        out.push(m[(r, c)]);
                    }
                }
            }
            out
        }))
    };
    let fiber_metric: Option<CFn> = if e.has_identity_metric() && f.has_identity_metric() {
        None
    } else {
        let (e, f) = (e.clone(), f.clone());
        Some(Arc::new(move |x: &[f64]| {
            let m = metric(&e.fiber_metric_at(x), &f.fiber_metric_at(x));
            (0..dim * dim).map(|i| m[(i / dim, i % dim)]).collect()
        }))
    };
    BundleSpec { base_dim: n, fiber_dim: dim, potentials, fiber_metric, name }
}

/// `E (x) F` with `A = A^E (x) 1 + 1 (x) A^F`; fiber index `e * d_F + f`.
pub fn induced_potential_tensor(e: &BundleSpec, f: &BundleSpec) -> Result<BundleSpec> {
    same_chart(e, f)?;
    let (de, df) = (e.fiber_dim, f.fiber_dim);
    Ok(combine(
        e,
        f,
        de * df,
        format!("({})x({})", e.name, f.name),
        move |a, b| kron(a, &DMatrix::identity(df, df)) + kron(&DMatrix::identity(de, de), b),
        |h, k| kron(h, k),
    ))
}

/// `E'` with `A' = -A^T`, so that `d<u', w> = <nabla u', w> + <u', nabla w>`
/// for the bilinear pairing `<u', w> = sum_a u'_a w_a`.
pub fn dual_potential(e: &BundleSpec) -> BundleSpec {
    let d = e.fiber_dim;
    let n = e.base_dim;
    let potentials: Option<CFn> = e.potentials.as_ref().map(|p| {
        let p = p.clone();
        let f: CFn = Arc::new(move |x: &[f64]| {
            let a = p(x);
            let mut out = vec![ZERO; n * d * d];
            for k in 0..n {
                for r in 0..d {
                    for c in 0..d {
                        out[k * d * d + r * d + c] = -a[k * d * d + c * d + r];
                    }
                }
            }
            out
        });
        f
    });
    let fiber_metric: Option<CFn> = e.fiber_metric.as_ref().map(|h| {
        let h = h.clone();
        let f: CFn = Arc::new(move |x: &[f64]| {
            let m = DMatrix::from_row_slice(d, d, &h(x));
            let inv = m.try_inverse().expect("fiber metric must be invertible").transpose();
            (0..d * d).map(|i| inv[(i / d, i % d)]).collect()
        });
        f
    });
    BundleSpec { base_dim: n, fiber_dim: d, potentials, fiber_metric, name: format!("({})'", e.name) }
}

/// `Hom(E, F)` with `a -> A^F a - a A^E`; fiber index `f * d_E + e`.
pub fn hom_potential(e: &BundleSpec, f: &BundleSpec) -> Result<BundleSpec> {
    same_chart(e, f)?;
    let (de, df) = (e.fiber_dim, f.fiber_dim);
    Ok(combine(
        e,
        f,
        de * df,
        format!("Hom({},{})", e.name, f.name),
        move |ae, af| kron(af, &DMatrix::identity(de, de)) - kron(&DMatrix::identity(df, df), &ae.transpose()),
        |he, hf| {
            let inv = he.clone().try_inverse().expect("fiber metric must be invertible").transpose();
            kron(hf, &inv)
        },
    ))
}

/// Largest `|X(xi, eta) - (nabla_X xi, eta) - (xi, nabla_X eta)|` over grid
/// points, coordinate directions and `trials` random unit fiber vectors.
/// The derivative terms of the sections cancel exactly, so the residual is
/// `|eta^* (d_k H + H A_k + A_k^* H) xi|`.
pub fn check_metric_compatibility(spec: &BundleSpec, grid: &ChartGrid, trials: usize, seed: u64) -> f64 {
    let d = spec.fiber_dim;
    let n = spec.base_dim;
    (0..grid.npts())
        .into_par_iter()
        .map(|p| {
            let x = grid.coords(p);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let h = spec.fiber_metric_at(&x);
            let mut worst = 0.0f64;
            for k in 0..n {
                let a = spec.potential(&x, k);
                let defect = spec.fiber_metric_derivative(&x, k) + &h * &a + a.adjoint() * &h;
                for _ in 0..trials {
                    let xi = random_unit(&mut rng, d);
                    let eta = random_unit(&mut rng, d);
                    let v = (eta.adjoint() * &defect * xi)[(0, 0)].norm();
                    worst = worst.max(v);
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<C64> {
    let v = DMatrix::from_fn(d, 1, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let nrm = v.norm();
    v / C64::new(nrm, 0.0)
}

/// Bundle data sampled on a grid: potentials `[p][k][a][b]` and the fiber metric.
#[derive(Clone, Debug)]
pub struct SampledBundle {
    pub dim: usize,
    pub n: usize,
    /// Number of grid points the bundle was sampled on.
    pub npts: usize,
    pub flat: bool,
    pub potentials: Vec<C64>,
    /// Per-point row-major fiber metric; `None` for the identity.
    pub metric: Option<Vec<C64>>,
    pub spec: BundleSpec,
}

impl SampledBundle {
    pub fn new(grid: &ChartGrid, spec: &BundleSpec) -> Result<Self> {
        if spec.base_dim != grid.dim() {
            return Err(Error::ChartMismatch(format!("bundle over dim {} on a {}-dim grid", spec.base_dim, grid.dim())));
        }
        let d = spec.fiber_dim;
        let n = spec.base_dim;
        let potentials = if spec.is_flat() {
            Vec::new()
        } else {
            let chunks: Vec<Vec<C64>> =
                (0..grid.npts()).into_par_iter().map(|p| spec.potentials_at(&grid.coords(p))).collect();
            chunks.concat()
        };
        let metric = if spec.has_identity_metric() {
            None
        } else {
            let chunks: Vec<Vec<C64>> = (0..grid.npts())
                .into_par_iter()
                .map(|p| {
                    let m = spec.fiber_metric_at(&grid.coords(p));
                    (0..d * d).map(|i| m[(i / d, i % d)]).collect()
                })
                .collect();
            Some(chunks.concat())
        };
        Ok(SampledBundle { dim: d, n, npts: grid.npts(), flat: spec.is_flat(), potentials, metric, spec: spec.clone() })
    }

    /// `A_k` at point `p`, row-major; empty slice for the flat connection.
    #[inline]
    pub fn potential_at(&self, p: usize, k: usize) -> &[C64] {
        if self.flat {
            return &[];
        }
        let dd = self.dim * self.dim;
        let off = (p * self.n + k) * dd;
        &self.potentials[off..off + dd]
    }

    #[inline]
    pub fn metric_at(&self, p: usize) -> Option<&[C64]> {
        self.metric.as_ref().map(|m| &m[p * self.dim * self.dim..(p + 1) * self.dim * self.dim])
    }
}

/// Identity matrix helper used by induced constructions.
pub fn identity(d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { ONE } else { ZERO })
}
