//! Uniform tensor-product grids over coordinate boxes.
//!
//! Points are stored row-major with the last axis fastest. Derivatives of
//! grid data use central first-derivative stencils; values beyond the box
//! are read as zero, which is exact for sections that vanish on the outer
//! layers and is what [`ChartGrid::check_support`] enforces.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Accuracy order of the central difference stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdOrder {
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "4")]
    Fourth,
}

impl FdOrder {
    pub fn from_u32(k: u32) -> Option<Self> {
        match k {
            2 => Some(FdOrder::Second),
            4 => Some(FdOrder::Fourth),
            _ => None,
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
        }
    }

    /// Half-width of the first-derivative stencil.
    pub fn radius(self) -> usize {
        match self {
            FdOrder::Second => 1,
            FdOrder::Fourth => 2,
        }
    }

    /// Weights `c_j` for offsets `j = 1..=radius`; the stencil is
    /// `sum_j c_j (f(x + j h) - f(x - j h)) / h`.
    pub fn weights(self) -> &'static [f64] {
        match self {
            FdOrder::Second => &[0.5],
            FdOrder::Fourth => &[2.0 / 3.0, -1.0 / 12.0],
        }
    }
}

impl Default for FdOrder {
    fn default() -> Self {
        FdOrder::Fourth
    }
}

/// A box `[lower, upper]` sampled at `shape[k]` equispaced points per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    margin: usize,
    fd_order: FdOrder,
    support_tol: Option<f64>,
}

impl ChartGrid {
    /// Default relative threshold below which edge values count as zero.
    pub const DEFAULT_SUPPORT_TOL: f64 = 1e-6;

    pub fn new(lower: &[f64], upper: &[f64], shape: &[usize]) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || shape.len() != n {
            return Err(Error::InvalidGrid("box and shape must share a nonzero dimension".into()));
        }
        let mut spacing = Vec::with_capacity(n);
        for k in 0..n {
            if !(upper[k] > lower[k]) || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::InvalidGrid(format!("empty interval on axis {k}")));
            }
            if shape[k] < 3 {
                return Err(Error::InvalidGrid(format!("axis {k} needs at least 3 points")));
            }
            spacing.push((upper[k] - lower[k]) / (shape[k] - 1) as f64);
        }
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let fd_order = FdOrder::default();
        Ok(ChartGrid {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            shape: shape.to_vec(),
            spacing,
            strides,
            margin: 2 * fd_order.radius(),
            fd_order,
            support_tol: Some(Self::DEFAULT_SUPPORT_TOL),
        })
    }

    /// Square grid with the same interval and point count on every axis.
    pub fn cube(n: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(&vec![lo; n], &vec![hi; n], &vec![points; n])
    }

    pub fn with_fd_order(mut self, order: FdOrder) -> Self {
        self.fd_order = order;
        self.margin = self.margin.max(order.radius());
        self
    }

    pub fn with_margin(mut self, margin: usize) -> Result<Self> {
        if margin < self.fd_order.radius() {
            return Err(Error::MarginTooSmall { margin, needed: self.fd_order.radius() });
        }
        self.margin = margin;
        Ok(self)
    }

    /// `None` disables support checks; results are then only trustworthy on
    /// points whose stencils stay inside the box (see [`ChartGrid::depth`]).
    pub fn with_support_tol(mut self, tol: Option<f64>) -> Self {
        self.support_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn margin(&self) -> usize {
        self.margin
    }
    pub fn fd_order(&self) -> FdOrder {
        self.fd_order
    }
    pub fn support_tol(&self) -> Option<f64> {
        self.support_tol
    }
    pub fn npts(&self) -> usize {
        self.shape.iter().product()
    }
    /// Largest spacing over all axes.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of point `p` along `axis`.
    #[inline]
    pub fn index_along(&self, p: usize, axis: usize) -> usize {
        (p / self.strides[axis]) % self.shape[axis]
    }

    #[inline]
    pub fn coord(&self, p: usize, axis: usize) -> f64 {
        self.lower[axis] + self.index_along(p, axis) as f64 * self.spacing[axis]
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        (0..self.dim()).map(|k| self.coord(p, k)).collect()
    }

    pub fn point_of(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Distance in grid layers from `p` to the nearest face of the box.
    pub fn depth(&self, p: usize) -> usize {
        (0..self.dim())
            .map(|k| {
                let i = self.index_along(p, k);
                i.min(self.shape[k] - 1 - i)
            })
            .min()
            .unwrap_or(0)
    }

    /// Tensor-product trapezoid weight of point `p` (coordinate measure).
    pub fn trapezoid_weight(&self, p: usize) -> f64 {
        let mut w = 1.0;
        for k in 0..self.dim() {
            let i = self.index_along(p, k);
            w *= self.spacing[k];
            if i == 0 || i == self.shape[k] - 1 {
                w *= 0.5;
            }
        }
        w
    }

    /// Same box and stencil settings with `factor` times finer spacing.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let shape: Vec<usize> = self.shape.iter().map(|&s| (s - 1) * factor + 1).collect();
        let mut g = ChartGrid::new(&self.lower, &self.upper, &shape)?;
        g.fd_order = self.fd_order;
        g.margin = self.margin * factor;
        g.support_tol = self.support_tol;
        Ok(g)
    }

    /// Checks that values of width `comps` per point vanish on the outer
    /// `layers` layers relative to their peak modulus.
    pub fn check_support<T: Modulus>(&self, data: &[T], comps: usize, layers: usize) -> Result<()> {
        let tol = match self.support_tol {
            None => return Ok(()),
            Some(t) => t,
        };
        if layers > self.margin {
            return Err(Error::MarginTooSmall { margin: self.margin, needed: layers });
        }
        let mut peak = 0.0f64;
        let mut edge = 0.0f64;
        for p in 0..self.npts() {
            let m = data[p * comps..(p + 1) * comps].iter().map(|v| v.modulus()).fold(0.0, f64::max);
            peak = peak.max(m);
            if self.depth(p) < layers {
                edge = edge.max(m);
            }
        }
        if edge > tol * peak {
            return Err(Error::SupportViolation { layers, ratio: edge / peak });
        }
        Ok(())
    }
}

/// Absolute value for real and complex grid data.
pub trait Modulus {
    fn modulus(&self) -> f64;
}

impl Modulus for f64 {
    fn modulus(&self) -> f64 {
        self.abs()
    }
}

impl Modulus for num_complex::Complex64 {
    fn modulus(&self) -> f64 {
        self.norm()
    }
}

/// Step used for derivatives of closed-form fields.
pub const ANALYTIC_STEP: f64 = 5e-3;

const D8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// Eighth-order central derivative of `f` at `t = 0` with step `delta`.
/// Used only for closed-form fields, never for grid data.
pub fn diff8<T, F>(f: F, delta: f64) -> T
where
    F: Fn(f64) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let mut acc = (f(delta) - f(-delta)) * D8[0];
    for (j, c) in D8.iter().enumerate().skip(1) {
        let s = (j + 1) as f64 * delta;
        acc = acc + (f(s) - f(-s)) * *c;
    }
    acc * (1.0 / delta)
}

/// Eighth-order derivative of a scalar closure along `axis`.
pub fn partial_scalar<F>(f: &F, x: &[f64], axis: usize, delta: f64) -> f64
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    partial_vec(&|y: &[f64]| vec![f(y)], x, axis, delta)[0]
}

/// Component-wise eighth-order derivative of a vector-valued closure along `axis`.
pub fn partial_vec<F>(f: &F, x: &[f64], axis: usize, delta: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let mut y = x.to_vec();
    let mut acc: Vec<f64> = Vec::new();
    for (j, c) in D8.iter().enumerate() {
        let s = (j + 1) as f64 * delta;
        y[axis] = x[axis] + s;
        let fp = f(&y);
        y[axis] = x[axis] - s;
        let fm = f(&y);
        if acc.is_empty() {
            acc = vec![0.0; fp.len()];
        }
        for i in 0..fp.len() {
            acc[i] += c * (fp[i] - fm[i]);
        }
    }
    acc.iter().map(|v| v / delta).collect()
}

/// Complex version of [`partial_vec`].
pub fn partial_cvec<F>(f: &F, x: &[f64], axis: usize, delta: f64) -> Vec<num_complex::Complex64>
where
    F: Fn(&[f64]) -> Vec<num_complex::Complex64> + ?Sized,
{
    let mut y = x.to_vec();
    let mut acc: Vec<num_complex::Complex64> = Vec::new();
    for (j, c) in D8.iter().enumerate() {
        let s = (j + 1) as f64 * delta;
        y[axis] = x[axis] + s;
        let fp = f(&y);
        y[axis] = x[axis] - s;
        let fm = f(&y);
        if acc.is_empty() {
            acc = vec![num_complex::Complex64::new(0.0, 0.0); fp.len()];
        }
        for i in 0..fp.len() {
            acc[i] += (fp[i] - fm[i]) * *c;
        }
    }
    acc.iter().map(|v| v / delta).collect()
}
