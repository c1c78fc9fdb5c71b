//! Short-time Fourier transform on a grid, its adjoint, inversion, and the
//! identities that tie them together.
//!
//! `V_phi f(x, xi) = (2pi)^{-d/2} * integral f(y) conj(phi(y - x)) e^{-i<y,xi>} dy`
//! is sampled at every time-grid shift `x_j` and every dual-grid frequency.
//! The window is read at `y_m - x_j`, which is itself a grid point when the
//! origin is a sample, so no interpolation is involved. Window samples that
//! fall outside the grid are zero.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{gaussian, inner, Grid, PhaseField, Signal};
use crate::tfconv;

type C64 = Complex64;

/// Precomputed layout for transforms on one grid with one window.
#[derive(Debug, Clone)]
pub struct StftPlan {
    grid: Grid,
    window: Signal,
    origin: Vec<usize>,
}

impl StftPlan {
    pub fn new(grid: &Grid, window: &Signal) -> Result<StftPlan> {
        grid.ensure_same(&window.grid)?;
        if window.values.iter().all(|v| *v == C64::new(0.0, 0.0)) {
            return Err(Error::ZeroWindow);
        }
        let origin = grid.require_origin()?;
        Ok(StftPlan { grid: grid.clone(), window: window.clone(), origin })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn window(&self) -> &Signal {
        &self.window
    }

    /// Index offsets `origin - j` mapping signal index `m` to window index
    /// `m - j + origin`.
    fn delta(&self, j: usize) -> Vec<isize> {
        let lat = self.grid.lattice();
        let mut mj = vec![0usize; lat.dim()];
        lat.unravel(j, &mut mj);
        mj.iter().zip(&self.origin).map(|(&a, &o)| o as isize - a as isize).collect()
    }

    /// `phi(x_m - x_j)` for every `m`, zero where it leaves the grid.
    fn shifted_window(&self, j: usize) -> Vec<C64> {
        let lat = self.grid.lattice();
        let delta = self.delta(j);
        let mut multi = vec![0usize; lat.dim()];
        (0..lat.len())
            .map(|m| {
                lat.unravel(m, &mut multi);
                lat.offset_index(&multi, &delta)
                    .map(|w| self.window.values[w])
                    .unwrap_or_default()
            })
            .collect()
    }

    pub fn forward(&self, f: &Signal) -> Result<PhaseField> {
        self.grid.ensure_same(&f.grid)?;
        let lat = self.grid.lattice();
        let axes: Vec<usize> = (0..lat.dim()).collect();
        let rows: Vec<Vec<C64>> = (0..lat.len())
            .into_par_iter()
            .map(|j| {
                let w = self.shifted_window(j);
                let mut row: Vec<C64> = f.values.iter().zip(&w).map(|(a, b)| a * b.conj()).collect();
                fft::forward(&mut row, &lat, &axes);
                row
            })
            .collect();
        PhaseField::new(self.grid.clone(), rows.concat())
    }

    /// `(V* F)(x) = (2pi)^{-d/2} * double integral F(y,eta) phi(x-y) e^{i<x,eta>} dy deta`.
    pub fn adjoint(&self, big_f: &PhaseField) -> Result<Signal> {
        self.grid.ensure_same(&big_f.time_grid)?;
        let lat = self.grid.lattice();
        let axes: Vec<usize> = (0..lat.dim()).collect();
        let m_len = lat.len();
        let hd = self.grid.quadrature_weight();
        let rows: Vec<Vec<C64>> = (0..m_len)
            .into_par_iter()
            .map(|j| {
                let mut row = big_f.row(j).to_vec();
                fft::inverse(&mut row, &lat, &axes);
                let w = self.shifted_window(j);
                row.iter_mut().zip(&w).for_each(|(r, w)| *r *= w * hd);
                row
            })
            .collect();
        let values: Vec<C64> = (0..m_len)
            .into_par_iter()
            .map(|m| rows.iter().map(|r| r[m]).sum())
            .collect();
        Ok(Signal { grid: self.grid.clone(), values })
    }
}

pub fn stft(f: &Signal, window: &Signal) -> Result<PhaseField> {
    StftPlan::new(&f.grid, window)?.forward(f)
}

pub fn stft_adjoint(big_f: &PhaseField, window: &Signal) -> Result<Signal> {
    StftPlan::new(&big_f.time_grid, window)?.adjoint(big_f)
}

/// `||phi||^{-2} V_phi^* V_phi f`.
pub fn reconstruct(f: &Signal, window: &Signal) -> Result<Signal> {
    let plan = StftPlan::new(&f.grid, window)?;
    let back = plan.adjoint(&plan.forward(f)?)?;
    let n2 = window.norm().powi(2);
    Ok(back.scale(C64::new(1.0 / n2, 0.0)))
}

/// Relative L2 distance between `f` and its reconstruction.
pub fn reconstruction_defect(f: &Signal, window: &Signal) -> Result<f64> {
    Ok(reconstruct(f, window)?.rel_distance(f))
}

/// `|(V_{phi1} f, V_{phi2} g) - (phi2, phi1)(f, g)|` relative to the product
/// of the four norms.
pub fn moyal_defect(f: &Signal, g: &Signal, phi1: &Signal, phi2: &Signal) -> Result<f64> {
    let lhs = stft(f, phi1)?.inner(&stft(g, phi2)?)?;
    let rhs = inner(phi2, phi1)? * inner(f, g)?;
    let scale = f.norm() * g.norm() * phi1.norm() * phi2.norm();
    if scale == 0.0 {
        return Ok((lhs - rhs).norm());
    }
    Ok((lhs - rhs).norm() / scale)
}

/// Index of the phase point `-X` for every sample `X` (or `None` when the
/// reflection is not a sample).
fn reflection_map(field: &PhaseField) -> Vec<Option<usize>> {
    let lat = field.lattice();
    let mut c = vec![0.0; lat.dim()];
    (0..lat.len())
        .map(|i| {
            lat.coords(i, &mut c);
            let mut acc = 0usize;
            for (k, a) in lat.axes().iter().enumerate() {
                acc = acc * a.n + a.index_of(-c[k])?;
            }
            Some(acc)
        })
        .collect()
}

/// Max over phase points `X` with `-X` on the grid of
/// `|V_phi f(X) - e^{-i<x,xi>} conj(V_f phi(-X))|`.
pub fn swap_window_defect(f: &Signal, window: &Signal) -> Result<f64> {
    let a = stft(f, window)?;
    let b = stft(window, f)?;
    let d = f.grid.dim();
    let lat = a.lattice();
    let refl = reflection_map(&a);
    let mut c = vec![0.0; lat.dim()];
    let mut worst: f64 = 0.0;
    for (i, r) in refl.iter().enumerate() {
        if let Some(r) = r {
            lat.coords(i, &mut c);
            let ph: f64 = (0..d).map(|k| c[k] * c[d + k]).sum();
            let rhs = C64::from_polar(1.0, -ph) * b.values[*r].conj();
            worst = worst.max((a.values[i] - rhs).norm());
        }
    }
    Ok(worst)
}

/// Modulus form `| |V_phi f(X)| - |V_f phi(-X)| |`, maximised.
pub fn swap_window_modulus_defect(f: &Signal, window: &Signal) -> Result<f64> {
    let a = stft(f, window)?;
    let b = stft(window, f)?;
    let refl = reflection_map(&a);
    Ok(refl
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (a.values[i].norm() - b.values[r].norm()).abs()))
        .fold(0.0, f64::max))
}

/// Ordinary convolution of two phase fields with zero fill,
/// `(A * B)(X) = integral A(X - Y) B(Y) dY`.
pub fn phase_convolve(a: &PhaseField, b: &PhaseField) -> Result<PhaseField> {
    a.time_grid.ensure_same(&b.time_grid)?;
    let lat = a.lattice();
    let origin = lat
        .origin()
        .ok_or_else(|| Error::InvalidGrid("the origin must be a lattice point".into()))?;
    let axes: Vec<usize> = (0..lat.dim()).collect();
    let mut values = fft::convolve_axes(&a.values, &b.values, &lat.shape(), &axes, &origin);
    let vol = a.cell_volume();
    values.iter_mut().for_each(|v| *v *= vol);
    PhaseField::new(a.time_grid.clone(), values)
}

/// Outcome of [`change_window_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeWindowReport {
    /// `max(|V_{phi1} f| - ||phi2||^{-2} (|V_{phi2} f| * |V_{phi1} phi2|))`.
    pub max_excess: f64,
    /// Largest value of the left-hand side, for scale.
    pub lhs_max: f64,
}

pub fn change_window_check(f: &Signal, phi1: &Signal, phi2: &Signal) -> Result<ChangeWindowReport> {
    let lhs = stft(f, phi1)?;
    let a = stft(f, phi2)?.abs();
    let b = stft(phi2, phi1)?.abs();
    let conv = phase_convolve(&a, &b)?;
    let s = phi2.norm().powi(-2);
    let max_excess = lhs
        .values
        .iter()
        .zip(&conv.values)
        .map(|(l, r)| l.norm() - s * r.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let lhs_max = lhs.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(ChangeWindowReport { max_excess, lhs_max })
}

/// Empirical constant of `|V_{phi0} f(X0)| <= C ||V_{phi0} f||_{L^p(B_R(X0))}`
/// over the ensemble. `X0` ranges over phase samples whose ball lies inside
/// the grid and where `|V f(X0)|` is at least `1e-6` of its maximum.
pub fn local_sup_constant(ensemble: &[Signal], p: f64, radius: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidExponent(p));
    }
    if !(radius > 0.0) {
        return Err(Error::Precondition(format!("ball radius must be positive, got {radius}")));
    }
    let mut best: f64 = 0.0;
    for f in ensemble {
        let v = stft(f, &gaussian(&f.grid))?;
        let lat = v.lattice();
        let shape = lat.shape();
        let steps: Vec<f64> = lat.axes().iter().map(|a| a.step).collect();
        let reach: Vec<isize> = steps.iter().map(|s| (radius / s).ceil() as isize).collect();
        let vol = lat.cell_volume();
        let vmax = v.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let dim = lat.dim();
        // ball stencil as index offsets
        let mut stencil: Vec<Vec<isize>> = Vec::new();
        let mut off = vec![0isize; dim];
        fn walk(k: usize, off: &mut Vec<isize>, reach: &[isize], steps: &[f64], r: f64, out: &mut Vec<Vec<isize>>) {
            if k == off.len() {
                let d2: f64 = off.iter().zip(steps).map(|(&o, s)| (o as f64 * s).powi(2)).sum();
                if d2.sqrt() < r * (1.0 - 1e-12) {
                    out.push(off.clone());
                }
                return;
            }
            for o in -reach[k]..=reach[k] {
                off[k] = o;
                walk(k + 1, off, reach, steps, r, out);
            }
        }
        walk(0, &mut off, &reach, &steps, radius, &mut stencil);
        let local = (0..lat.len())
            .into_par_iter()
            .map(|i| {
                let mut multi = vec![0usize; dim];
                lat.unravel(i, &mut multi);
                let here = v.values[i].norm();
                if here < 1e-6 * vmax {
                    return 0.0;
                }
                if multi.iter().zip(&shape).zip(&reach).any(|((&m, &n), &r)| (m as isize) < r || m as isize + r >= n as isize) {
                    return 0.0;
                }
                let mut acc = 0.0;
                for o in &stencil {
                    let z = v.values[lat.offset_index(&multi, o).expect("ball inside grid")].norm();
                    if p.is_infinite() {
                        acc = f64::max(acc, z);
                    } else {
                        acc += z.powf(p);
                    }
                }
                let norm = if p.is_infinite() { acc } else { (acc * vol).powf(1.0 / p) };
                here / norm
            })
            .reduce(|| 0.0, f64::max);
        best = best.max(local);
    }
    Ok(best)
}

/// `(||phi1|| ||phi2||)^{-1} V_{phi2} V_{phi1}^* F`, the operator route.
pub fn window_projection(big_f: &PhaseField, phi1: &Signal, phi2: &Signal) -> Result<PhaseField> {
    let s = 1.0 / (phi1.norm() * phi2.norm());
    let g = stft_adjoint(big_f, phi1)?;
    Ok(stft(&g, phi2)?.map(|v| v * s))
}

/// The same projection as the twisted convolution
/// `(||phi1|| ||phi2||)^{-1} V_{phi2} phi1 *_V F`.
pub fn window_projection_conv(big_f: &PhaseField, phi1: &Signal, phi2: &Signal) -> Result<PhaseField> {
    let s = 1.0 / (phi1.norm() * phi2.norm());
    let k = stft(phi1, phi2)?;
    Ok(tfconv::twisted_conv(&k, big_f)?.map(|v| v * s))
}
