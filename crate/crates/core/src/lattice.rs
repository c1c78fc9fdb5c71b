//! Rectangular sampling lattices with per-axis step.
//!
//! `Grid` (isotropic, the user-facing carrier) and phase-space fields both
//! lower to a `Lattice`, which is what the FFT and norm kernels operate on.
//! Storage is row-major: the last axis varies fastest.

use std::f64::consts::PI;

/// One uniformly sampled axis: coordinates `offset + i * step`, `i < n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub step: f64,
    pub offset: f64,
}

impl Axis {
    pub fn new(n: usize, step: f64, offset: f64) -> Self {
        Axis { n, step, offset }
    }

    /// Axis of `n` samples centred so that index `n / 2` sits at `center`.
    pub fn centered(n: usize, step: f64, center: f64) -> Self {
        Axis { n, step, offset: center - (n / 2) as f64 * step }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.offset + i as f64 * self.step
    }

    /// Frequency axis paired with this one by the discrete Fourier transform.
    pub fn dual(&self) -> Axis {
        let step = 2.0 * PI / (self.n as f64 * self.step);
        Axis::centered(self.n, step, 0.0)
    }

    /// Index of the sample at coordinate 0, if the origin is a lattice point.
    pub fn origin_index(&self) -> Option<usize> {
        let k = -self.offset / self.step;
        let r = k.round();
        if (k - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.n {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Index of coordinate `x` if it is (within 1e-9 relative) a sample.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = (x - self.offset) / self.step;
        let r = k.round();
        if (k - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.n {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Length of the sampled interval `[offset, offset + n * step)`.
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.step
    }
}

/// Cartesian product of axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    axes: Vec<Axis>,
}

impl Lattice {
    pub fn new(axes: Vec<Axis>) -> Self {
        Lattice { axes }
    }

    /// Product lattice `self x other`, axes of `self` first.
    pub fn concat(&self, other: &Lattice) -> Lattice {
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().cloned());
        Lattice { axes }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    /// Quadrature weight of one sample.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    pub fn dual(&self) -> Lattice {
        Lattice { axes: self.axes.iter().map(Axis::dual).collect() }
    }

    /// Restriction to the axes `range`.
    pub fn sub(&self, range: std::ops::Range<usize>) -> Lattice {
        Lattice { axes: self.axes[range].to_vec() }
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape())
    }

    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = idx % a.n;
            idx /= a.n;
        }
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&m, a)| acc * a.n + m)
    }

    pub fn coords(&self, idx: usize, out: &mut [f64]) {
        let mut idx = idx;
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = a.coord(idx % a.n);
            idx /= a.n;
        }
    }

    pub fn coords_vec(&self, idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.coords(idx, &mut v);
        v
    }

    /// Per-axis origin indices; `None` unless every axis contains 0.
    pub fn origin(&self) -> Option<Vec<usize>> {
        self.axes.iter().map(Axis::origin_index).collect()
    }

    /// Index of `multi + delta`, or `None` when it leaves the lattice.
    pub fn offset_index(&self, multi: &[usize], delta: &[isize]) -> Option<usize> {
        let mut acc = 0usize;
        for ((&m, &d), a) in multi.iter().zip(delta).zip(&self.axes) {
            let j = m as isize + d;
            if j < 0 || j >= a.n as isize {
                return None;
            }
            acc = acc * a.n + j as usize;
        }
        Some(acc)
    }

    /// Whether two lattices coincide up to `tol` in step and offset.
    pub fn approx_eq(&self, other: &Lattice, tol: f64) -> bool {
        self.axes.len() == other.axes.len()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.n == b.n
                    && (a.step - b.step).abs() <= tol * a.step.abs().max(1.0)
                    && (a.offset - b.offset).abs() <= tol * a.offset.abs().max(1.0)
            })
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}
