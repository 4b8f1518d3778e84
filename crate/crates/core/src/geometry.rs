//! Riemannian metrics on chart domains, Christoffel symbols, volume
//! densities, conformal rescaling and weights.
//!
//! Metrics, weights and vector fields are closed-form closures. Their
//! derivatives are taken with the eighth-order step in [`crate::grid::diff8`],
//! so geometric data is accurate far below grid truncation error and the
//! finite-difference error of a computation comes from the sections alone.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{partial_scalar, partial_vec, ChartGrid, ANALYTIC_STEP};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type MatFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Smallest admissible ratio of extreme metric eigenvalues.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// A symmetric positive-definite metric `x -> g(x)` in `n` coordinates.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    eval: MatFn,
    flat: bool,
    name: String,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MetricField({}, n={})", self.name, self.dim)
    }
}

impl MetricField {
    pub fn euclidean(n: usize) -> Self {
        let eval: MatFn = Arc::new(move |_x: &[f64]| {
            let mut m = vec![0.0; n * n];
            for k in 0..n {
                m[k * n + k] = 1.0;
            }
            m
        });
        MetricField { dim: n, eval, flat: true, name: "euclidean".into() }
    }

    /// `g(x)` given row-major as `n*n` entries.
    pub fn from_fn(n: usize, name: &str, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        MetricField { dim: n, eval: Arc::new(f), flat: false, name: name.into() }
    }

    /// `g = c(x) * I`.
    pub fn conformal_to_flat(n: usize, name: &str, c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_fn(n, name, move |x| {
            let s = c(x);
            let mut m = vec![0.0; n * n];
            for k in 0..n {
                m[k * n + k] = s;
            }
            m
        })
    }

    /// Round sphere of radius 1 in stereographic coordinates:
    /// `g = 4 / (1 + |x|^2)^2 * I`.
    pub fn stereographic_sphere() -> Self {
        Self::conformal_to_flat(2, "stereographic-sphere", |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            4.0 / ((1.0 + r2) * (1.0 + r2))
        })
    }

    /// Metric with entries given as expressions (real parts are used).
    pub fn from_exprs(n: usize, entries: &[String]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Config(format!("metric needs {} entries, got {}", n * n, entries.len())));
        }
        let exprs = entries.iter().map(|s| Expr::parse(s, n)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_fn(n, "expr", move |x| exprs.iter().map(|e| e.eval_real(x)).collect()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    /// True when the metric is the constant identity (Christoffel symbols vanish).
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Row-major entries of `g(x)`.
    pub fn at(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.at(x))
    }

    /// `d g / d x_k` at `x`.
    pub fn derivative(&self, x: &[f64], k: usize) -> Vec<f64> {
        partial_vec(&*self.eval, x, k, ANALYTIC_STEP)
    }

    /// Validates symmetry and positivity at `x`.
    pub fn check_spd(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.matrix(x);
        spd_check(&m, x)?;
        Ok(m)
    }
}

fn spd_check(m: &DMatrix<f64>, x: &[f64]) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularMetric { at: x.to_vec(), ratio: f64::NAN });
    }
    if (m - m.transpose()).amax() > 1e-13 * scale.max(1e-300) {
        return Err(Error::AsymmetricMetric { at: x.to_vec() });
    }
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > 0.0) || lo <= EIGEN_FLOOR * hi {
        return Err(Error::SingularMetric { at: x.to_vec(), ratio: lo / hi });
    }
    Ok(())
}

/// Levi-Civita Christoffel symbols at one point, stored as `gamma[m][k][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    #[inline]
    pub fn get(&self, m: usize, k: usize, l: usize) -> f64 {
        self.data[(m * self.n + k) * self.n + l]
    }
}

/// `Gamma^m_{kl} = 1/2 g^{mj} (d_k g_{jl} + d_l g_{jk} - d_j g_{kl})`.
pub fn christoffel(metric: &MetricField, x: &[f64]) -> Result<Christoffel> {
    let n = metric.dim;
    if metric.flat {
        return Ok(Christoffel { n, data: vec![0.0; n * n * n] });
    }
    let g = metric.check_spd(x)?;
    let ginv = g.try_inverse().ok_or(Error::SingularMetric { at: x.to_vec(), ratio: 0.0 })?;
    let dg: Vec<Vec<f64>> = (0..n).map(|k| metric.derivative(x, k)).collect();
    let mut data = vec![0.0; n * n * n];
    for m in 0..n {
        for k in 0..n {
            for l in k..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += ginv[(m, j)] * (dg[k][j * n + l] + dg[l][j * n + k] - dg[j][k * n + l]);
                }
                data[(m * n + k) * n + l] = 0.5 * s;
                data[(m * n + l) * n + k] = 0.5 * s;
            }
        }
    }
    Ok(Christoffel { n, data })
}

/// `sqrt(det g)` at `x`.
pub fn volume_density(metric: &MetricField, x: &[f64]) -> Result<f64> {
    let g = metric.check_spd(x)?;
    Ok(g.determinant().sqrt())
}

/// `g0 = rho^{-2} g`, validated on every grid point.
pub fn conformal_rescale(metric: &MetricField, rho: &ScalarFn, grid: &ChartGrid) -> Result<MetricField> {
    check_positive(rho, grid)?;
    let inner = metric.clone();
    let rho = rho.clone();
    let n = metric.dim;
    Ok(MetricField::from_fn(n, &format!("{}/rho^2", metric.name), move |x| {
        let r = rho(x);
        inner.at(x).into_iter().map(|v| v / (r * r)).collect()
    }))
}

fn check_positive(f: &ScalarFn, grid: &ChartGrid) -> Result<()> {
    for p in 0..grid.npts() {
        let x = grid.coords(p);
        let v = f(&x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonpositiveWeight { at: x });
        }
    }
    Ok(())
}

/// A smooth vector field `x -> X(x)`.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorField(n={})", self.dim)
    }
}

impl VectorField {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        VectorField { dim, eval: Arc::new(f) }
    }

    /// The coordinate field `e_k`.
    pub fn coordinate(dim: usize, k: usize) -> Self {
        Self::new(dim, move |_| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            v
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    /// `d X / d x_k`.
    pub fn derivative(&self, x: &[f64], k: usize) -> Vec<f64> {
        partial_vec(&*self.eval, x, k, ANALYTIC_STEP)
    }

    /// `f X` for a scalar function `f`.
    pub fn scaled(&self, f: ScalarFn) -> Self {
        let inner = self.clone();
        Self::new(self.dim, move |x| inner.at(x).into_iter().map(|v| v * f(x)).collect())
    }

    /// Levi-Civita derivative `(nabla_Y X)` at `x`.
    pub fn covariant_along(&self, metric: &MetricField, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let gam = christoffel(metric, x)?;
        let xv = self.at(x);
        let mut out = vec![0.0; n];
        for k in 0..n {
            if y[k] == 0.0 {
                continue;
            }
            let dk = self.derivative(x, k);
            for m in 0..n {
                let mut s = dk[m];
                for l in 0..n {
                    s += gam.get(m, k, l) * xv[l];
                }
                out[m] += y[k] * s;
            }
        }
        Ok(out)
    }

    /// Lie bracket `[X, Y]` at `x`.
    pub fn bracket(&self, other: &VectorField, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let (xv, yv) = (self.at(x), other.at(x));
        let mut out = vec![0.0; n];
        for k in 0..n {
            let dy = other.derivative(x, k);
            let dx = self.derivative(x, k);
            for m in 0..n {
                out[m] += xv[k] * dy[m] - yv[k] * dx[m];
            }
        }
        out
    }
}

/// `div X = d_k X^k + Gamma^k_{kl} X^l`, the trace of the Levi-Civita derivative.
pub fn divergence(x_field: &VectorField, metric: &MetricField, x: &[f64]) -> Result<f64> {
    let n = x_field.dim;
    let gam = christoffel(metric, x)?;
    let xv = x_field.at(x);
    let mut s = 0.0;
    for k in 0..n {
        s += x_field.derivative(x, k)[k];
        for l in 0..n {
            s += gam.get(k, k, l) * xv[l];
        }
    }
    Ok(s)
}

/// `X(phi) Y + Y(phi) X - g0(X, Y) grad_{g0} phi` at `x`: the difference of
/// the Levi-Civita connections of `e^{2 phi} g0` and `g0`.
pub fn levi_civita_difference(
    x: &[f64],
    xv: &[f64],
    yv: &[f64],
    phi: &ScalarFn,
    g0: &MetricField,
) -> Result<Vec<f64>> {
    let n = g0.dim;
    let dphi: Vec<f64> = (0..n)
        .map(|k| partial_scalar(&**phi, x, k, ANALYTIC_STEP))
        .collect();
    let g = g0.check_spd(x)?;
    let ginv = g.clone().try_inverse().ok_or(Error::SingularMetric { at: x.to_vec(), ratio: 0.0 })?;
    let xphi: f64 = (0..n).map(|k| xv[k] * dphi[k]).sum();
    let yphi: f64 = (0..n).map(|k| yv[k] * dphi[k]).sum();
    let gxy = (DVector::from_column_slice(xv).transpose() * &g * DVector::from_column_slice(yv))[(0, 0)];
    let grad = ginv * DVector::from_column_slice(&dphi);
    Ok((0..n).map(|m| xphi * yv[m] + yphi * xv[m] - gxy * grad[m]).collect())
}

/// Positive weights `rho`, `f0` with `phi = log rho`.
#[derive(Clone)]
pub struct WeightPair {
    pub rho: ScalarFn,
    pub f0: ScalarFn,
    pub phi: ScalarFn,
}

impl std::fmt::Debug for WeightPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("WeightPair")
    }
}

impl WeightPair {
    pub fn new(rho: ScalarFn, f0: ScalarFn) -> Self {
        let r = rho.clone();
        WeightPair { rho, f0, phi: Arc::new(move |x| r(x).ln()) }
    }

    pub fn unit() -> Self {
        Self::new(Arc::new(|_| 1.0), Arc::new(|_| 1.0))
    }

    /// Positivity of both weights on the grid.
    pub fn validate(&self, grid: &ChartGrid) -> Result<()> {
        check_positive(&self.rho, grid)?;
        check_positive(&self.f0, grid)
    }

    /// `sup_x |rho^{-1} d rho|_{g0} = sup_x |d rho|_g` over grid points.
    pub fn admissibility(&self, grid: &ChartGrid, metric: &MetricField) -> Result<f64> {
        self.validate(grid)?;
        let n = grid.dim();
        let mut sup = 0.0f64;
        for p in 0..grid.npts() {
            let x = grid.coords(p);
            let d: Vec<f64> = (0..n)
                .map(|k| partial_scalar(&*self.rho, &x, k, ANALYTIC_STEP))
                .collect();
            let ginv = metric.check_spd(&x)?.try_inverse().ok_or(Error::SingularMetric { at: x.clone(), ratio: 0.0 })?;
            let dv = DVector::from_column_slice(&d);
            let v = (dv.transpose() * ginv * &dv)[(0, 0)].sqrt();
            sup = sup.max(v);
        }
        Ok(sup)
    }

    pub fn ensure_admissible(&self, grid: &ChartGrid, metric: &MetricField, bound: f64) -> Result<f64> {
        let sup = self.admissibility(grid, metric)?;
        if !sup.is_finite() || sup > bound {
            return Err(Error::NonadmissibleWeight { sup, bound });
        }
        Ok(sup)
    }
}

/// Metric data sampled on every grid point.
#[derive(Clone, Debug)]
pub struct SampledMetric {
    pub n: usize,
    pub flat: bool,
    /// `g` row-major per point.
    pub g: Vec<f64>,
    pub ginv: Vec<f64>,
    /// `gamma[m][k][l]` per point.
    pub gamma: Vec<f64>,
    pub sqrt_det: Vec<f64>,
}

impl SampledMetric {
    pub fn new(grid: &ChartGrid, metric: &MetricField) -> Result<Self> {
        let n = grid.dim();
        if metric.dim != n {
            return Err(Error::ChartMismatch(format!("metric dim {} vs grid dim {}", metric.dim, n)));
        }
        let rows: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>, f64)>> = (0..grid.npts())
            .into_par_iter()
            .map(|p| {
                let x = grid.coords(p);
                let g = metric.check_spd(&x)?;
                let det = g.determinant();
                let ginv = g.clone().try_inverse().ok_or(Error::SingularMetric { at: x.clone(), ratio: 0.0 })?;
                let gam = christoffel(metric, &x)?;
                let gi: Vec<f64> = (0..n * n).map(|i| ginv[(i / n, i % n)]).collect();
                let gv: Vec<f64> = (0..n * n).map(|i| g[(i / n, i % n)]).collect();
                Ok((gv, gi, gam.data, det.sqrt()))
            })
            .collect();
        let mut out = SampledMetric {
            n,
            flat: metric.flat,
            g: Vec::with_capacity(grid.npts() * n * n),
            ginv: Vec::with_capacity(grid.npts() * n * n),
            gamma: Vec::with_capacity(grid.npts() * n * n * n),
            sqrt_det: Vec::with_capacity(grid.npts()),
        };
        for r in rows {
            let (g, gi, gam, sd) = r?;
            out.g.extend(g);
            out.ginv.extend(gi);
            out.gamma.extend(gam);
            out.sqrt_det.push(sd);
        }
        Ok(out)
    }

    #[inline]
    pub fn gamma_at(&self, p: usize) -> &[f64] {
        let s = self.n * self.n * self.n;
        &self.gamma[p * s..(p + 1) * s]
    }
    #[inline]
    pub fn g_at(&self, p: usize) -> &[f64] {
        &self.g[p * self.n * self.n..(p + 1) * self.n * self.n]
    }
    #[inline]
    pub fn ginv_at(&self, p: usize) -> &[f64] {
        &self.ginv[p * self.n * self.n..(p + 1) * self.n * self.n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_has_no_christoffel() {
        let g = MetricField::euclidean(3);
        let c = christoffel(&g, &[0.1, 0.2, 0.3]).unwrap();
        assert!(c.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn volume_of_diagonal_metric() {
        let g = MetricField::from_fn(2, "diag", |_| vec![4.0, 0.0, 0.0, 9.0]);
        assert!((volume_density(&g, &[0.0, 0.0]).unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn half_line_conformal_volume() {
        let grid = ChartGrid::new(&[0.5], &[3.0], &[11]).unwrap();
        let rho: ScalarFn = Arc::new(|x| x[0]);
        let g0 = conformal_rescale(&MetricField::euclidean(1), &rho, &grid).unwrap();
        for r in [0.5, 1.0, 2.5] {
            assert!((volume_density(&g0, &[r]).unwrap() - 1.0 / r).abs() < 1e-14);
            assert!((g0.at(&[r])[0] - 1.0 / (r * r)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_degenerate_metric() {
        let g = MetricField::from_fn(2, "bad", |_| vec![1.0, 0.0, 0.0, 1e-14]);
        assert!(matches!(g.check_spd(&[0.0, 0.0]), Err(Error::SingularMetric { .. })));
        let g = MetricField::from_fn(2, "asym", |_| vec![1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(g.check_spd(&[0.0, 0.0]), Err(Error::AsymmetricMetric { .. })));
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let grid = ChartGrid::new(&[-1.0], &[1.0], &[5]).unwrap();
        let rho: ScalarFn = Arc::new(|x| x[0]);
        assert!(matches!(
            conformal_rescale(&MetricField::euclidean(1), &rho, &grid),
            Err(Error::NonpositiveWeight { .. })
        ));
    }

    #[test]
    fn sphere_christoffel_matches_conformal_formula() {
        // For g = e^{2f} I: Gamma^m_{kl} = d_k f d^m_l + d_l f d^m_k - d_m f d_kl.
        let g = MetricField::stereographic_sphere();
        let x = [0.3, -0.4];
        let c = christoffel(&g, &x).unwrap();
        let r2 = x[0] * x[0] + x[1] * x[1];
        let df = [-2.0 * x[0] / (1.0 + r2), -2.0 * x[1] / (1.0 + r2)];
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for m in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let want = df[k] * d(m, l) + df[l] * d(m, k) - df[m] * d(k, l);
                    assert!((c.get(m, k, l) - want).abs() < 1e-11, "{m}{k}{l}");
                }
            }
        }
    }
}
