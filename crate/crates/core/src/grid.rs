//! Uniform configuration-space grids over the coordinates (q1, q2, x) and the
//! quadrature / finite-difference helpers built on them.

use crate::error::{CeError, Result};
use ndarray::{Array3, Axis as NdAxis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The three configuration-space coordinates: two quantum particles and the
/// classical mediator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Q1,
    Q2,
    X,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::Q1 => 0,
            Axis::Q2 => 1,
            Axis::X => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Q1 => "q1",
            Axis::Q2 => "q2",
            Axis::X => "x",
        }
    }
}

/// One uniform axis: inclusive bounds and point count (nodes at both ends).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn new(lower: f64, upper: f64, n: usize) -> Result<Self> {
        let spec = AxisSpec { lower, upper, n };
        spec.validate("axis")?;
        Ok(spec)
    }

    pub fn validate(&self, axis: &'static str) -> Result<()> {
        if self.n < 8 {
            return Err(CeError::InvalidGrid {
                axis,
                reason: format!("point count {} < 8", self.n),
            });
        }
        if !(self.upper - self.lower).is_finite() || self.upper <= self.lower {
            return Err(CeError::InvalidGrid {
                axis,
                reason: format!("bounds [{}, {}] not increasing", self.lower, self.upper),
            });
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.n - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    /// Index of the grid node nearest to `v`.
    pub fn nearest_index(&self, v: f64) -> usize {
        let idx = ((v - self.lower) / self.spacing()).round();
        idx.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// The full 3-D grid over (q1, q2, x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub q1: AxisSpec,
    pub q2: AxisSpec,
    pub x: AxisSpec,
}

impl Grid {
    pub fn new(q1: AxisSpec, q2: AxisSpec, x: AxisSpec) -> Result<Self> {
        q1.validate("q1")?;
        q2.validate("q2")?;
        x.validate("x")?;
        Ok(Grid { q1, q2, x })
    }

    /// Symmetric grid `[-half, half]` with `n` points on every axis.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        let ax = AxisSpec::new(-half, half, n)?;
        Grid::new(ax, ax, ax)
    }

    pub fn axis(&self, axis: Axis) -> &AxisSpec {
        match axis {
            Axis::Q1 => &self.q1,
            Axis::Q2 => &self.q2,
            Axis::X => &self.x,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.q1.n, self.q2.n, self.x.n)
    }

    /// Cell volume Δq1·Δq2·Δx of the midpoint quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.q1.spacing() * self.q2.spacing() * self.x.spacing()
    }

    /// Fill a real array from a function of the three coordinates.
    pub fn sample(&self, f: impl Fn(f64, f64, f64) -> f64 + Sync) -> Array3<f64> {
        let (dq1, dq2, dx) = (self.q1.spacing(), self.q2.spacing(), self.x.spacing());
        Array3::from_shape_fn(self.shape(), |(i, j, k)| {
            f(
                self.q1.lower + i as f64 * dq1,
                self.q2.lower + j as f64 * dq2,
                self.x.lower + k as f64 * dx,
            )
        })
    }

    /// Fill a complex array from a function of the three coordinates.
    pub fn sample_complex(&self, f: impl Fn(f64, f64, f64) -> Complex64 + Sync) -> Array3<Complex64> {
        let (dq1, dq2, dx) = (self.q1.spacing(), self.q2.spacing(), self.x.spacing());
        Array3::from_shape_fn(self.shape(), |(i, j, k)| {
            f(
                self.q1.lower + i as f64 * dq1,
                self.q2.lower + j as f64 * dq2,
                self.x.lower + k as f64 * dx,
            )
        })
    }

    /// Midpoint-rule integral of a sampled field over the whole grid.
    pub fn integrate(&self, field: &Array3<f64>) -> f64 {
        stable_sum(field.as_slice().expect("contiguous field")) * self.cell_volume()
    }

    pub fn integrate_complex(&self, field: &Array3<Complex64>) -> Complex64 {
        let slice = field.as_slice().expect("contiguous field");
        let re = stable_sum_by(slice, |c| c.re);
        let im = stable_sum_by(slice, |c| c.im);
        Complex64::new(re, im) * self.cell_volume()
    }
}

/// Pairwise summation; deterministic and accurate enough that stated
/// tolerances absorb re-association.
pub fn stable_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    stable_sum(&xs[..mid]) + stable_sum(&xs[mid..])
}

pub fn stable_sum_by<T, F: Fn(&T) -> f64 + Copy>(xs: &[T], f: F) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        return xs.iter().map(f).sum();
    }
    let mid = xs.len() / 2;
    stable_sum_by(&xs[..mid], f) + stable_sum_by(&xs[mid..], f)
}

/// 2nd-order first derivative of a line: central interior, one-sided ends.
fn diff_line(src: &[f64], dst: &mut [f64], h: f64) {
    let n = src.len();
    let inv2h = 1.0 / (2.0 * h);
    dst[0] = (-3.0 * src[0] + 4.0 * src[1] - src[2]) * inv2h;
    for i in 1..n - 1 {
        dst[i] = (src[i + 1] - src[i - 1]) * inv2h;
    }
    dst[n - 1] = (3.0 * src[n - 1] - 4.0 * src[n - 2] + src[n - 3]) * inv2h;
}

fn diff_line_c(src: &[Complex64], dst: &mut [Complex64], h: f64) {
    let n = src.len();
    let inv2h = 1.0 / (2.0 * h);
    dst[0] = (-src[2] + 4.0 * src[1] - 3.0 * src[0]) * inv2h;
    for i in 1..n - 1 {
        dst[i] = (src[i + 1] - src[i - 1]) * inv2h;
    }
    dst[n - 1] = (3.0 * src[n - 1] - 4.0 * src[n - 2] + src[n - 3]) * inv2h;
}

fn diff2_line_c(src: &[Complex64], dst: &mut [Complex64], h: f64) {
    let n = src.len();
    let invh2 = 1.0 / (h * h);
    dst[0] = (2.0 * src[0] - 5.0 * src[1] + 4.0 * src[2] - src[3]) * invh2;
    for i in 1..n - 1 {
        dst[i] = (src[i + 1] - 2.0 * src[i] + src[i - 1]) * invh2;
    }
    dst[n - 1] = (2.0 * src[n - 1] - 5.0 * src[n - 2] + 4.0 * src[n - 3] - src[n - 4]) * invh2;
}

/// Finite-difference gradient of a real field along `axis`.
pub fn gradient(grid: &Grid, field: &Array3<f64>, axis: Axis) -> Array3<f64> {
    let h = grid.axis(axis).spacing();
    let mut out = Array3::zeros(field.dim());
    let nd = NdAxis(axis.index());
    let mut buf_src = Vec::new();
    let mut buf_dst = Vec::new();
    for (src, mut dst) in field.lanes(nd).into_iter().zip(out.lanes_mut(nd)) {
        buf_src.clear();
        buf_src.extend(src.iter().copied());
        buf_dst.resize(buf_src.len(), 0.0);
        diff_line(&buf_src, &mut buf_dst, h);
        for (d, v) in dst.iter_mut().zip(&buf_dst) {
            *d = *v;
        }
    }
    out
}

/// Finite-difference gradient of a complex field along `axis`.
pub fn gradient_c(grid: &Grid, field: &Array3<Complex64>, axis: Axis) -> Array3<Complex64> {
    let h = grid.axis(axis).spacing();
    let mut out = Array3::zeros(field.dim());
    let nd = NdAxis(axis.index());
    let mut buf_src = Vec::new();
    let mut buf_dst = Vec::new();
    for (src, mut dst) in field.lanes(nd).into_iter().zip(out.lanes_mut(nd)) {
        buf_src.clear();
        buf_src.extend(src.iter().copied());
        buf_dst.resize(buf_src.len(), Complex64::default());
        diff_line_c(&buf_src, &mut buf_dst, h);
        for (d, v) in dst.iter_mut().zip(&buf_dst) {
            *d = *v;
        }
    }
    out
}

/// Finite-difference second derivative of a complex field along `axis`.
pub fn second_derivative_c(grid: &Grid, field: &Array3<Complex64>, axis: Axis) -> Array3<Complex64> {
    let h = grid.axis(axis).spacing();
    let mut out = Array3::zeros(field.dim());
    let nd = NdAxis(axis.index());
    let mut buf_src = Vec::new();
    let mut buf_dst = Vec::new();
    for (src, mut dst) in field.lanes(nd).into_iter().zip(out.lanes_mut(nd)) {
        buf_src.clear();
        buf_src.extend(src.iter().copied());
        buf_dst.resize(buf_src.len(), Complex64::default());
        diff2_line_c(&buf_src, &mut buf_dst, h);
        for (d, v) in dst.iter_mut().zip(&buf_dst) {
            *d = *v;
        }
    }
    out
}
