//! Uniform grids on R^d, sampled signals, phase-space fields, and the
//! unitary (continuous-normalized) Fourier transform between a grid and its
//! dual.
//!
//! Integrals over R^d are Riemann sums over the grid box with weight `h^d`.
//! Phase-space fields live on `time grid x dual grid`, stored x-major.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{Axis, Lattice};

/// Uniform grid with `n` samples of step `h` per axis in `d <= 2` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    step: f64,
    offset: Vec<f64>,
}

/// Grid symmetric about `center`: `offset = center - (n/2) h` per axis.
pub fn make_grid(d: usize, n: usize, h: f64, center: &[f64]) -> Result<Grid> {
    if !(1..=2).contains(&d) {
        return Err(Error::InvalidGrid(format!("dimension {d} not in {{1, 2}}")));
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!("points per axis must be even and >= 2, got {n}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidGrid(format!("step must be positive, got {h}")));
    }
    if center.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: center.len() });
    }
    Ok(Grid {
        dim: d,
        n,
        step: h,
        offset: center.iter().map(|c| c - (n / 2) as f64 * h).collect(),
    })
}

impl Grid {
    /// Grid centred at the origin.
    pub fn centered(d: usize, n: usize, h: f64) -> Result<Grid> {
        make_grid(d, n, h, &vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn center(&self) -> Vec<f64> {
        self.offset.iter().map(|o| o + (self.n / 2) as f64 * self.step).collect()
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d` of one sample.
    pub fn quadrature_weight(&self) -> f64 {
        self.step.powi(self.dim as i32)
    }

    /// Frequency grid: step `2pi/(n h)`, origin-centred.
    pub fn dual(&self) -> Grid {
        Grid {
            dim: self.dim,
            n: self.n,
            step: 2.0 * PI / (self.n as f64 * self.step),
            offset: vec![-((self.n / 2) as f64) * 2.0 * PI / (self.n as f64 * self.step); self.dim],
        }
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.offset.iter().map(|&o| Axis::new(self.n, self.step, o)).collect())
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.offset[axis] + i as f64 * self.step
    }

    /// Coordinates of sample `idx` (row-major).
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.lattice().coords_vec(idx)
    }

    /// All sample coordinates in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let lat = self.lattice();
        (0..self.len()).map(|i| lat.coords_vec(i)).collect()
    }

    /// Index of the origin along each axis, if 0 is a sample coordinate.
    pub fn origin_index(&self) -> Option<Vec<usize>> {
        self.lattice().origin()
    }

    /// Half-width of the sampled box around its centre.
    pub fn half_width(&self) -> f64 {
        (self.n / 2) as f64 * self.step
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.dim != other.dim
            || self.n != other.n
            || (self.step - other.step).abs() > 1e-12 * self.step
            || self.offset.iter().zip(&other.offset).any(|(a, b)| (a - b).abs() > 1e-12 * self.step.max(1.0))
        {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }

    pub(crate) fn require_origin(&self) -> Result<Vec<usize>> {
        self.origin_index()
            .ok_or_else(|| Error::InvalidGrid("the origin must be a lattice point".into()))
    }
}

/// Complex samples on a [`Grid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl Signal {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Signal> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Precondition("signal values must be finite".into()));
        }
        Ok(Signal { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Signal {
        Signal { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples of `f` at the grid points.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Signal {
        let lat = grid.lattice();
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                lat.coords(i, &mut x);
                f(&x)
            })
            .collect();
        Signal { grid: grid.clone(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// L2 norm by quadrature.
    pub fn norm(&self) -> f64 {
        (self.grid.quadrature_weight() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn scale(&self, s: Complex64) -> Signal {
        Signal { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn conj(&self) -> Signal {
        Signal { grid: self.grid.clone(), values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// Pointwise product (same grid).
    pub fn mul(&self, other: &Signal) -> Result<Signal> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Signal {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Signal {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Relative L2 distance `||self - other|| / ||other||`.
    pub fn rel_distance(&self, other: &Signal) -> f64 {
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Complex samples on `time grid x dual grid`, indexed `(x-index, xi-index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub time_grid: Grid,
    pub freq_grid: Grid,
    pub values: Vec<Complex64>,
}

impl PhaseField {
    pub fn new(time_grid: Grid, values: Vec<Complex64>) -> Result<PhaseField> {
        let freq_grid = time_grid.dual();
        let len = time_grid.len() * freq_grid.len();
        if values.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: values.len() });
        }
        Ok(PhaseField { time_grid, freq_grid, values })
    }

    pub fn zeros(time_grid: &Grid) -> PhaseField {
        let freq_grid = time_grid.dual();
        let len = time_grid.len() * freq_grid.len();
        PhaseField { time_grid: time_grid.clone(), freq_grid, values: vec![Complex64::new(0.0, 0.0); len] }
    }

    /// Samples of `f(x, xi)` on the phase grid.
    pub fn from_fn(time_grid: &Grid, mut f: impl FnMut(&[f64], &[f64]) -> Complex64) -> PhaseField {
        let mut out = PhaseField::zeros(time_grid);
        let lat = out.lattice();
        let d = time_grid.dim();
        let mut c = vec![0.0; 2 * d];
        for (i, v) in out.values.iter_mut().enumerate() {
            lat.coords(i, &mut c);
            *v = f(&c[..d], &c[d..]);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.time_grid.dim()
    }

    /// The 2d-axis lattice, time axes first.
    pub fn lattice(&self) -> Lattice {
        self.time_grid.lattice().concat(&self.freq_grid.lattice())
    }

    /// Quadrature weight of one phase-space sample, `(h * dual step)^d`.
    pub fn cell_volume(&self) -> f64 {
        self.time_grid.quadrature_weight() * self.freq_grid.quadrature_weight()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row of xi-samples at time index `j`.
    pub fn row(&self, j: usize) -> &[Complex64] {
        let m = self.freq_grid.len();
        &self.values[j * m..(j + 1) * m]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> PhaseField {
        PhaseField {
            time_grid: self.time_grid.clone(),
            freq_grid: self.freq_grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product with a real function of `(x, xi)`.
    pub fn weighted(&self, w: impl Fn(&[f64]) -> f64) -> PhaseField {
        let lat = self.lattice();
        let mut c = vec![0.0; lat.dim()];
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                lat.coords(i, &mut c);
                v * w(&c)
            })
            .collect();
        PhaseField { time_grid: self.time_grid.clone(), freq_grid: self.freq_grid.clone(), values }
    }

    pub fn abs(&self) -> PhaseField {
        self.map(|v| Complex64::new(v.norm(), 0.0))
    }

    /// L2 pairing on phase space by quadrature.
    pub fn inner(&self, other: &PhaseField) -> Result<Complex64> {
        self.time_grid.ensure_same(&other.time_grid)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (self.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &PhaseField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn rel_distance(&self, other: &PhaseField) -> f64 {
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Samples of the continuous Fourier transform
/// `(2pi)^{-d/2} * integral f(x) e^{-i<x,xi>} dx` on the dual grid.
pub fn dft(f: &Signal) -> Signal {
    let lat = f.grid.lattice();
    let mut values = f.values.clone();
    let axes: Vec<usize> = (0..lat.dim()).collect();
    fft::forward(&mut values, &lat, &axes);
    Signal { grid: f.grid.dual(), values }
}

/// Inverse transform of a field on an origin-centred dual grid, returned on
/// the origin-centred grid whose dual it is.
pub fn inverse_dft(f: &Signal) -> Signal {
    let g = &f.grid;
    let target = Grid {
        dim: g.dim,
        n: g.n,
        step: 2.0 * PI / (g.n as f64 * g.step),
        offset: vec![-((g.n / 2) as f64) * 2.0 * PI / (g.n as f64 * g.step); g.dim],
    };
    inverse_dft_onto(f, &target).expect("centred target is compatible by construction")
}

/// Inverse transform onto `target`; `f` must live on `target.dual()`.
pub fn inverse_dft_onto(f: &Signal, target: &Grid) -> Result<Signal> {
    f.grid.ensure_same(&target.dual())?;
    let lat = target.lattice();
    let mut values = f.values.clone();
    let axes: Vec<usize> = (0..lat.dim()).collect();
    fft::inverse(&mut values, &lat, &axes);
    Ok(Signal { grid: target.clone(), values })
}

/// L2 pairing `h^d * sum f * conj(g)`.
pub fn inner(f: &Signal, g: &Signal) -> Result<Complex64> {
    f.grid.ensure_same(&g.grid)?;
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum();
    Ok(s * f.grid.quadrature_weight())
}

/// Normalized Gaussian `pi^{-d/4} e^{-|x|^2/2}`.
pub fn gaussian(grid: &Grid) -> Signal {
    shifted_gaussian(grid, &vec![0.0; grid.dim()], &vec![0.0; grid.dim()])
}

/// `e^{i<x, xi0>} phi0(x - x0)` evaluated pointwise (no lattice constraint).
pub fn shifted_gaussian(grid: &Grid, x0: &[f64], xi0: &[f64]) -> Signal {
    let d = grid.dim();
    let c = PI.powf(-(d as f64) / 4.0);
    Signal::from_fn(grid, |x| {
        let mut r2 = 0.0;
        let mut ph = 0.0;
        for k in 0..d {
            r2 += (x[k] - x0[k]).powi(2);
            ph += x[k] * xi0[k];
        }
        Complex64::from_polar(c * (-0.5 * r2).exp(), ph)
    })
}

/// Gaussian of width `s`: `pi^{-d/4} s^{-d/2} e^{-|x - x0|^2 / (2 s^2)}`,
/// unit L2 norm.
pub fn dilated_gaussian(grid: &Grid, s: f64, x0: &[f64]) -> Signal {
    let d = grid.dim();
    let c = PI.powf(-(d as f64) / 4.0) * s.powf(-(d as f64) / 2.0);
    Signal::from_fn(grid, |x| {
        let r2: f64 = (0..d).map(|k| (x[k] - x0[k]).powi(2)).sum();
        Complex64::new(c * (-0.5 * r2 / (s * s)).exp(), 0.0)
    })
}

/// `e^{i<., xi0>} f(. - x0)` with `x0` on the lattice; samples shifted in
/// from outside the grid are zero.
pub fn tf_shift(f: &Signal, x0: &[f64], xi0: &[f64]) -> Result<Signal> {
    let g = &f.grid;
    let d = g.dim();
    if x0.len() != d || xi0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len().min(xi0.len()) });
    }
    let mut shift = vec![0isize; d];
    for k in 0..d {
        let s = x0[k] / g.step;
        let r = s.round();
        if (s - r).abs() > 1e-9 {
            return Err(Error::OffLattice(x0[k]));
        }
        shift[k] = -(r as isize);
    }
    let lat = g.lattice();
    let mut multi = vec![0usize; d];
    let mut x = vec![0.0; d];
    let values = (0..g.len())
        .map(|i| {
            lat.unravel(i, &mut multi);
            lat.coords(i, &mut x);
            match lat.offset_index(&multi, &shift) {
                Some(src) => {
                    let ph: f64 = x.iter().zip(xi0).map(|(a, b)| a * b).sum();
                    f.values[src] * Complex64::from_polar(1.0, ph)
                }
                None => Complex64::new(0.0, 0.0),
            }
        })
        .collect();
    Ok(Signal { grid: g.clone(), values })
}

/// Relative L2 mass of `f` in the outermost two samples along every axis.
/// A small value means the grid box captures `f` and the Riemann sums over
/// the box approximate integrals over R^d.
pub fn mass_outside_estimate(f: &Signal) -> f64 {
    let g = &f.grid;
    let lat = g.lattice();
    let n = g.points_per_axis();
    let mut multi = vec![0usize; g.dim()];
    let mut edge = 0.0;
    let mut total = 0.0;
    for (i, v) in f.values.iter().enumerate() {
        lat.unravel(i, &mut multi);
        let m2 = v.norm_sqr();
        total += m2;
        if multi.iter().any(|&m| m < 2 || m + 2 >= n) {
            edge += m2;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (edge / total).sqrt()
    }
}
