//! Pseudo-differential operators `Op_A(a)` on a grid, their dense kernels,
//! Wigner distributions, conversion between quantizations, Toeplitz
//! operators, and boundedness certificates.
//!
//! The kernel of `Op_A(a)` is
//! `K(x, y) = (2pi)^{-d} * integral a(x - A(x - y), xi) e^{i<x - y, xi>} dxi`.
//! For half-integer `A` the point `x - A(x - y)` lies on the half-step
//! lattice; symbol values there come from trigonometric interpolation in `x`.
//! Sampling `xi` with step `2pi/(n h)` resolves offsets `x - y` only within
//! one period, so kernel entries with `x - y` outside the centred box vanish.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::ensemble::Recipe;
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{gaussian, Grid, PhaseField, Signal};
use crate::modspace::{modulation_norm, ModSpec};
use crate::spaces::{mixed_norm, BlockField, Order, QbfSpec};
use crate::stft::{phase_convolve, stft, StftPlan};
use crate::weights::{parse_weight, weight_product, weight_reciprocal, ModerateScan, ScanBox, Weight};

type C64 = Complex64;

/// Real `d x d` matrix `A` with half-integer entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    dim: usize,
    entries: Vec<f64>,
}

impl Quantization {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Quantization> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        for &e in &entries {
            if !e.is_finite() || (2.0 * e - (2.0 * e).round()).abs() > 1e-12 {
                return Err(Error::IncompatibleQuantization(format!("entry {e}")));
            }
        }
        Ok(Quantization { dim, entries })
    }

    /// `t I`.
    pub fn scalar(dim: usize, t: f64) -> Result<Quantization> {
        let mut e = vec![0.0; dim * dim];
        for k in 0..dim {
            e[k * dim + k] = t;
        }
        Quantization::new(dim, e)
    }

    pub fn kohn_nirenberg(dim: usize) -> Quantization {
        Quantization { dim, entries: vec![0.0; dim * dim] }
    }

    pub fn weyl(dim: usize) -> Quantization {
        Quantization::scalar(dim, 0.5).expect("1/2 is a half-integer")
    }

    pub fn identity(dim: usize) -> Quantization {
        Quantization::scalar(dim, 1.0).expect("1 is a half-integer")
    }

    /// `kn`, `weyl`, `I`, or a number `t` for `t I`.
    pub fn parse(s: &str, dim: usize) -> Result<Quantization> {
        match s.trim() {
            "kn" | "0" => Ok(Quantization::kohn_nirenberg(dim)),
            "weyl" => Ok(Quantization::weyl(dim)),
            "I" => Ok(Quantization::identity(dim)),
            t => {
                let v: f64 = t.parse().map_err(|_| Error::Parse(format!("unknown quantization {t:?}")))?;
                Quantization::scalar(dim, v)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.dim + b]
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|a| (0..self.dim).map(|b| self.entry(a, b) * v[b]).sum()).collect()
    }

    /// `A^T v`.
    pub fn apply_t(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|a| (0..self.dim).map(|b| self.entry(b, a) * v[b]).sum()).collect()
    }

    fn twice(&self) -> Vec<i64> {
        self.entries.iter().map(|e| (2.0 * e).round() as i64).collect()
    }

    fn minus(&self, other: &Quantization) -> Vec<f64> {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect()
    }
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Quantization::kohn_nirenberg(self.dim) {
            write!(f, "kn")
        } else if *self == Quantization::weyl(self.dim) {
            write!(f, "weyl")
        } else if *self == Quantization::identity(self.dim) {
            write!(f, "I")
        } else {
            let e: Vec<String> = self.entries.iter().map(|v| v.to_string()).collect();
            write!(f, "[{}]", e.join(","))
        }
    }
}

/// Samples of a symbol on the phase grid together with its quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolField {
    pub field: PhaseField,
    pub quant: Quantization,
}

impl SymbolField {
    pub fn new(field: PhaseField, quant: Quantization) -> Result<SymbolField> {
        if field.dim() != quant.dim() {
            return Err(Error::DimensionMismatch { expected: field.dim(), got: quant.dim() });
        }
        Ok(SymbolField { field, quant })
    }
}

/// Dense matrix `K(x_j, y_m) h^d` acting on samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub grid: Grid,
    pub matrix: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn identity(grid: &Grid) -> OperatorMatrix {
        OperatorMatrix { grid: grid.clone(), matrix: DMatrix::identity(grid.len(), grid.len()) }
    }

    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        self.grid.ensure_same(&f.grid)?;
        let v = nalgebra::DVector::from_column_slice(&f.values);
        let out = &self.matrix * v;
        Signal::new(self.grid.clone(), out.iter().copied().collect())
    }

    /// `||A - B||_F / ||B||_F`.
    pub fn rel_distance(&self, other: &OperatorMatrix) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let den = other.matrix.norm();
        let num = (&self.matrix - &other.matrix).norm();
        Ok(if den == 0.0 { num } else { num / den })
    }
}

/// Index of `2 j - 2A (j - m)` on the half-step lattice. `None` when the
/// point leaves the lattice or when `j - m` leaves the centred window
/// `[-n/2, n/2)` resolved by the dual grid.
fn half_index(j: &[usize], m: &[usize], twice_a: &[i64], n: usize) -> Option<Vec<usize>> {
    let d = j.len();
    let half = (n / 2) as i64;
    if j.iter().zip(m).any(|(&a, &b)| !(-half..half).contains(&(a as i64 - b as i64))) {
        return None;
    }
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let mut p = 2 * j[a] as i64;
        for b in 0..d {
            p -= twice_a[a * d + b] * (j[b] as i64 - m[b] as i64);
        }
        if p < 0 || p >= 2 * n as i64 {
            return None;
        }
        out.push(p as usize);
    }
    Some(out)
}

fn ravel(multi: &[usize], n: usize) -> usize {
    multi.iter().fold(0, |acc, &i| acc * n + i)
}

fn time_axes(d: usize) -> Vec<usize> {
    (0..d).collect()
}

pub fn kernel_from_symbol(a: &SymbolField) -> Result<OperatorMatrix> {
    let g = a.field.time_grid.clone();
    let d = g.dim();
    let n = g.points_per_axis();
    let len = g.len();
    let shape = a.field.lattice().shape();
    let (up, _) = fft::upsample2(&a.field.values, &shape, &time_axes(d));
    let dual = g.dual();
    let xi: Vec<Vec<f64>> = (0..len).map(|k| dual.point(k)).collect();
    let lat = g.lattice();
    let twice = a.quant.twice();
    let scale = (n as f64).powi(-(d as i32));
    let rows: Vec<Vec<C64>> = (0..len)
        .into_par_iter()
        .map(|j| {
            let mut mj = vec![0usize; d];
            let mut mm = vec![0usize; d];
            lat.unravel(j, &mut mj);
            let xj = g.point(j);
            (0..len)
                .map(|m| {
                    lat.unravel(m, &mut mm);
                    let Some(p) = half_index(&mj, &mm, &twice, n) else {
                        return C64::new(0.0, 0.0);
                    };
                    let base = ravel(&p, 2 * n) * len;
                    let ym = g.point(m);
                    let u: Vec<f64> = xj.iter().zip(&ym).map(|(a, b)| a - b).collect();
                    let s: C64 = (0..len)
                        .map(|k| {
                            let ph: f64 = u.iter().zip(&xi[k]).map(|(a, b)| a * b).sum();
                            up[base + k] * C64::from_polar(1.0, ph)
                        })
                        .sum();
                    s * scale
                })
                .collect()
        })
        .collect();
    Ok(OperatorMatrix { grid: g, matrix: DMatrix::from_fn(len, len, |j, m| rows[j][m]) })
}

pub fn apply_op(a: &SymbolField, f: &Signal) -> Result<Signal> {
    kernel_from_symbol(a)?.apply(f)
}

/// Symbol of the same operator in the quantization `target`:
/// `a_2 = F^{-1}[ e^{i<(A_1 - A_2) t, eta>} F a_1 ]` with `eta` dual to `x`
/// and `t` dual to `xi`.
pub fn quantization_convert(a: &SymbolField, target: &Quantization) -> Result<SymbolField> {
    if target.dim() != a.quant.dim() {
        return Err(Error::DimensionMismatch { expected: a.quant.dim(), got: target.dim() });
    }
    if *target == a.quant {
        return Ok(a.clone());
    }
    let d = target.dim();
    let lat = a.field.lattice();
    let axes: Vec<usize> = (0..2 * d).collect();
    let mut data = a.field.values.clone();
    fft::forward(&mut data, &lat, &axes);
    let dual = lat.dual();
    let diff = a.quant.minus(target);
    data.par_iter_mut().enumerate().for_each(|(i, v)| {
        let c = dual.coords_vec(i);
        let (eta, t) = c.split_at(d);
        let mut ph = 0.0;
        for r in 0..d {
            let at: f64 = (0..d).map(|s| diff[r * d + s] * t[s]).sum();
            ph += at * eta[r];
        }
        *v *= C64::from_polar(1.0, ph);
    });
    fft::inverse(&mut data, &lat, &axes);
    SymbolField::new(PhaseField::new(a.field.time_grid.clone(), data)?, target.clone())
}

/// `W^A_{f1,f2}(x, xi) = (2pi)^{-d/2} * integral f1(x + A y) conj(f2(x - (I - A) y)) e^{-i<y, xi>} dy`.
pub fn wigner(f1: &Signal, f2: &Signal, q: &Quantization) -> Result<PhaseField> {
    f1.grid.ensure_same(&f2.grid)?;
    let g = f1.grid.clone();
    let d = g.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
    }
    let n = g.points_per_axis();
    let len = g.len();
    let shape = vec![n; d];
    let axes = time_axes(d);
    let (u1, _) = fft::upsample2(&f1.values, &shape, &axes);
    let (u2, _) = fft::upsample2(&f2.values, &shape, &axes);
    let ylat = Grid::centered(d, n, g.step())?.lattice();
    let lat = g.lattice();
    let twice = q.twice();
    let rows: Vec<Vec<C64>> = (0..len)
        .into_par_iter()
        .map(|j| {
            let mut mj = vec![0usize; d];
            let mut ml = vec![0usize; d];
            lat.unravel(j, &mut mj);
            let mut row: Vec<C64> = (0..len)
                .map(|l| {
                    ylat.unravel(l, &mut ml);
                    let y: Vec<i64> = ml.iter().map(|&v| v as i64 - (n / 2) as i64).collect();
                    let mut p1 = Vec::with_capacity(d);
                    let mut p2 = Vec::with_capacity(d);
                    for a in 0..d {
                        let ay: i64 = (0..d).map(|b| twice[a * d + b] * y[b]).sum();
                        p1.push(2 * mj[a] as i64 + ay);
                        p2.push(2 * mj[a] as i64 - (2 * y[a] - ay));
                    }
                    let inside = |p: &[i64]| p.iter().all(|&v| v >= 0 && v < 2 * n as i64);
                    if !inside(&p1) || !inside(&p2) {
                        return C64::new(0.0, 0.0);
                    }
                    let i1 = p1.iter().fold(0usize, |acc, &v| acc * 2 * n + v as usize);
                    let i2 = p2.iter().fold(0usize, |acc, &v| acc * 2 * n + v as usize);
                    u1[i1] * u2[i2].conj()
                })
                .collect();
            fft::forward(&mut row, &ylat, &axes);
            row
        })
        .collect();
    PhaseField::new(g, rows.concat())
}

/// Frobenius-relative distance between the kernel of `Op_A(W^A_{f1,f2})`
/// and the rank-one matrix of `f -> (2pi)^{-d/2} (f, f2) f1`.
pub fn rank_one_defect(f1: &Signal, f2: &Signal, q: &Quantization) -> Result<f64> {
    let w = wigner(f1, f2, q)?;
    let k = kernel_from_symbol(&SymbolField::new(w, q.clone())?)?;
    let g = &f1.grid;
    let s = (2.0 * PI).powf(-(g.dim() as f64) / 2.0) * g.quadrature_weight();
    let r = DMatrix::from_fn(g.len(), g.len(), |j, m| f1.values[j] * f2.values[m].conj() * s);
    k.rel_distance(&OperatorMatrix { grid: g.clone(), matrix: r })
}

/// `Tp_{phi1,phi2}(a) f = V_{phi2}^*(a V_{phi1} f)`.
pub fn toeplitz_direct(a: &PhaseField, phi1: &Signal, phi2: &Signal, f: &Signal) -> Result<Signal> {
    let p1 = StftPlan::new(&f.grid, phi1)?;
    let p2 = StftPlan::new(&f.grid, phi2)?;
    toeplitz_with(a, &p1, &p2, f)
}

fn toeplitz_with(a: &PhaseField, p1: &StftPlan, p2: &StftPlan, f: &Signal) -> Result<Signal> {
    let mut v = p1.forward(f)?;
    a.time_grid.ensure_same(&v.time_grid)?;
    v.values.iter_mut().zip(&a.values).for_each(|(x, s)| *x *= s);
    p2.adjoint(&v)
}

/// Dense matrix of `Tp_{phi1,phi2}(a)`.
pub fn toeplitz_matrix(a: &PhaseField, phi1: &Signal, phi2: &Signal) -> Result<OperatorMatrix> {
    let g = a.time_grid.clone();
    let p1 = StftPlan::new(&g, phi1)?;
    let p2 = StftPlan::new(&g, phi2)?;
    let len = g.len();
    let cols: Vec<Signal> = (0..len)
        .into_par_iter()
        .map(|m| {
            let mut e = Signal::zeros(&g);
            e.values[m] = C64::new(1.0, 0.0);
            toeplitz_with(a, &p1, &p2, &e)
        })
        .collect::<Result<_>>()?;
    Ok(OperatorMatrix { grid: g, matrix: DMatrix::from_fn(len, len, |j, m| cols[m].values[j]) })
}

/// Weyl symbol `a * u` of `Tp_{phi1,phi2}(a)` with `u = (2pi)^{-d/2} W_{phi2,phi1}`.
pub fn toeplitz_weyl_symbol(a: &PhaseField, phi1: &Signal, phi2: &Signal) -> Result<SymbolField> {
    let d = a.dim();
    let s = (2.0 * PI).powf(-(d as f64) / 2.0);
    let u = wigner(phi2, phi1, &Quantization::weyl(d))?.map(|v| v * s);
    SymbolField::new(phase_convolve(a, &u)?, Quantization::weyl(d))
}

/// `W^A_{phi1,phi2}(z, zeta)` by quadrature from the closed-form windows
/// (one dimension).
fn kernel_window_symbol(phi1: &Recipe, phi2: &Recipe, a: f64, z: f64, zeta: f64) -> C64 {
    const DU: f64 = 0.02;
    const U: f64 = 14.0;
    let steps = (U / DU) as i64;
    let mut s = C64::new(0.0, 0.0);
    for k in -steps..=steps {
        let u = k as f64 * DU;
        let v = eval_recipe(phi1, z + a * u) * eval_recipe(phi2, z - (1.0 - a) * u).conj();
        s += v * C64::from_polar(1.0, -u * zeta);
    }
    s * (DU / (2.0 * PI).sqrt())
}

fn eval_recipe(r: &Recipe, x: f64) -> C64 {
    r.atoms.iter().map(|a| a.eval(&[x])).sum()
}

/// Largest defect of
/// `(V_Phi K)(x, y, xi, eta) = (2pi)^{-d/2} e^{i<y - x, A^T(xi + eta) - eta>} (V_Psi a)(T_A(x, xi, eta, y))`
/// with `Phi = phi1 (x) conj(phi2)` and `Psi = W^A_{phi1,phi2}`, over `probes` seeded points with `x, y`
/// on the grid near the origin. One dimension only.
pub fn kernel_stft_relation_defect(a: &SymbolField, phi1: &Recipe, phi2: &Recipe, probes: usize, seed: u64) -> Result<f64> {
    let g = a.field.time_grid.clone();
    if g.dim() != 1 || phi1.dim != 1 || phi2.dim != 1 {
        return Err(Error::Precondition("the kernel relation check is implemented for d = 1".into()));
    }
    let at = a.quant.entry(0, 0);
    let k = kernel_from_symbol(a)?;
    let h = g.step();
    let n = g.len();
    let dual = g.dual();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let origin = n / 2;
    let reach = ((2.0 / h).floor() as i64).max(1);
    let pts: Vec<[f64; 4]> = (0..probes)
        .map(|_| {
            let x = g.point((origin as i64 + rng.gen_range(-reach..=reach)) as usize)[0];
            let y = g.point((origin as i64 + rng.gen_range(-reach..=reach)) as usize)[0];
            [x, y, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]
        })
        .collect();
    let xs: Vec<f64> = (0..n).map(|j| g.point(j)[0]).collect();
    let xis: Vec<f64> = (0..n).map(|k| dual.point(k)[0]).collect();
    let defects: Vec<f64> = pts
        .par_iter()
        .map(|&[x, y, xi, eta]| {
            // left side: STFT of the kernel on the product grid
            let mut lhs = C64::new(0.0, 0.0);
            for j in 0..n {
                let w1 = eval_recipe(phi1, xs[j] - x);
                for m in 0..n {
                    let kv = k.matrix[(j, m)] / h;
                    if kv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let w = w1 * eval_recipe(phi2, xs[m] - y).conj();
                    lhs += kv * w.conj() * C64::from_polar(1.0, -(xs[j] * xi + xs[m] * eta));
                }
            }
            lhs *= h * h / (2.0 * PI);
            // right side
            let z0 = x + at * (y - x);
            let zeta0 = at * (xi + eta) - eta;
            let (t0, u0) = (xi + eta, y - x);
            let mut v = C64::new(0.0, 0.0);
            for i in 0..n {
                for kk in 0..n {
                    let s = a.field.values[i * n + kk];
                    if s == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let psi = kernel_window_symbol(phi1, phi2, at, xs[i] - z0, xis[kk] - zeta0);
                    v += s * psi.conj() * C64::from_polar(1.0, -(xs[i] * t0 + xis[kk] * u0));
                }
            }
            v *= h * dual.step() / (2.0 * PI);
            let rhs = v * C64::from_polar((2.0 * PI).powf(-0.5), (y - x) * (at * (xi + eta) - eta));
            (lhs - rhs).norm()
        })
        .collect();
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// `||a||_{M^{p,q}_{(w)}}` of a symbol with the Gaussian window on `R^{2d}`:
/// inner `L^p` over phase-space shifts, outer `L^q` over their duals.
pub fn symbol_norm(a: &PhaseField, w: &Weight, p: f64, q: f64) -> Result<f64> {
    let d2 = 2 * a.dim();
    if w.dim() != 2 * d2 {
        return Err(Error::DimensionMismatch { expected: 2 * d2, got: w.dim() });
    }
    symbol_norm_with(a, |x| w.eval(x), p, q)
}

/// [`symbol_norm`] with the weight given as a function of `(X, Xi)`.
pub fn symbol_norm_with(a: &PhaseField, w: impl Fn(&[f64]) -> f64 + Sync, p: f64, q: f64) -> Result<f64> {
    let lat = a.lattice();
    let d2 = lat.dim();
    for e in [p, q] {
        if !(e > 0.0) {
            return Err(Error::InvalidExponent(e));
        }
    }
    let dual = lat.dual();
    let len = lat.len();
    let axes: Vec<usize> = (0..d2).collect();
    let c = PI.powf(-(d2 as f64) / 4.0);
    let cell = lat.cell_volume();
    let dcell = dual.cell_volume();
    let dual_coords: Vec<Vec<f64>> = (0..len).map(|k| dual.coords_vec(k)).collect();
    let coords: Vec<Vec<f64>> = (0..len).map(|i| lat.coords_vec(i)).collect();
    let row = |j: usize| -> Vec<f64> {
        let xj = &coords[j];
        let mut data: Vec<C64> = (0..len)
            .map(|i| {
                let r2: f64 = coords[i].iter().zip(xj).map(|(a, b)| (a - b).powi(2)).sum();
                a.values[i] * (c * (-0.5 * r2).exp())
            })
            .collect();
        fft::forward(&mut data, &lat, &axes);
        let mut x = xj.clone();
        x.resize(2 * d2, 0.0);
        data.iter()
            .zip(&dual_coords)
            .map(|(v, xi)| {
                x[d2..].copy_from_slice(xi);
                v.norm() * w(&x)
            })
            .collect()
    };
    // fixed chunks keep the reduction order independent of scheduling
    const CHUNKS: usize = 16;
    let size = len.div_ceil(CHUNKS);
    let partial: Vec<Vec<f64>> = (0..CHUNKS)
        .into_par_iter()
        .map(|ch| {
            let mut acc = vec![0.0; len];
            for j in ch * size..((ch + 1) * size).min(len) {
                for (a, v) in acc.iter_mut().zip(row(j)) {
                    if p.is_infinite() {
                        *a = f64::max(*a, v);
                    } else {
                        *a += v.powf(p) * cell;
                    }
                }
            }
            acc
        })
        .collect();
    let mut inner = vec![0.0; len];
    for part in partial {
        for (a, v) in inner.iter_mut().zip(part) {
            if p.is_infinite() {
                *a = f64::max(*a, v);
            } else {
                *a += v;
            }
        }
    }
    if !p.is_infinite() {
        inner.iter_mut().for_each(|v| *v = v.powf(1.0 / p));
    }
    Ok(if q.is_infinite() {
        inner.into_iter().fold(0.0, f64::max)
    } else {
        inner.iter().map(|v| v.powf(q) * dcell).sum::<f64>().powf(1.0 / q)
    })
}

/// `||W^A_{phi2,phi1}||_{M^p_{(w)}} / (||phi1||_{M^p_{(theta1)}} ||phi2||_{M^p_{(theta2)}})` with
/// `w(x, xi, eta, y) = theta1(x + (I - A) y, xi - A^T eta) theta2(x - A y, xi + (I - A^T) eta)`.
pub fn wigner_norm_ratio(phi1: &Signal, phi2: &Signal, q: &Quantization, p: f64, theta1: &Weight, theta2: &Weight) -> Result<f64> {
    let d = q.dim();
    if theta1.dim() != 2 * d || theta2.dim() != 2 * d {
        return Err(Error::DimensionMismatch { expected: 2 * d, got: theta1.dim() });
    }
    let big = wigner(phi2, phi1, q)?;
    let w = |v: &[f64]| -> f64 {
        let (x, rest) = v.split_at(d);
        let (xi, rest) = rest.split_at(d);
        let (eta, y) = rest.split_at(d);
        let ay = q.apply(y);
        let ate = q.apply_t(eta);
        let p1: Vec<f64> = (0..d).map(|k| x[k] + y[k] - ay[k]).chain((0..d).map(|k| xi[k] - ate[k])).collect();
        let p2: Vec<f64> = (0..d).map(|k| x[k] - ay[k]).chain((0..d).map(|k| xi[k] + eta[k] - ate[k])).collect();
        theta1.eval(&p1) * theta2.eval(&p2)
    };
    let num = symbol_norm_with(&big, w, p, p)?;
    Ok(num / (window_norm(phi1, theta1, p)? * window_norm(phi2, theta2, p)?))
}

/// Grid-independent symbol descriptions.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolRecipe {
    One,
    /// `a(x, xi) = m(x)`.
    Multiplier(Weight),
    /// `a(x, xi) = m(xi)`.
    FourierMultiplier(Weight),
    /// `a(X) = w(X)` for a weight on `R^{2d}`.
    PhaseWeight(Weight),
    /// `a(X) = e^{-|X|^2 / (2 s^2)}`.
    Gaussian(f64),
}

impl SymbolRecipe {
    /// `one`, `mult:<weight>`, `fmult:<weight>`, `weight:<weight>`, `gauss:width=s`.
    pub fn parse(s: &str, d: usize) -> Result<SymbolRecipe> {
        let s = s.trim();
        if s == "one" {
            return Ok(SymbolRecipe::One);
        }
        let (head, body) = s.split_once(':').ok_or_else(|| Error::Parse(format!("unknown symbol {s:?}")))?;
        match head {
            "mult" => Ok(SymbolRecipe::Multiplier(parse_weight(body, d)?)),
            "fmult" => Ok(SymbolRecipe::FourierMultiplier(parse_weight(body, d)?)),
            "weight" => Ok(SymbolRecipe::PhaseWeight(parse_weight(body, 2 * d)?)),
            "gauss" => {
                let w = body
                    .strip_prefix("width=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| *v > 0.0)
                    .ok_or_else(|| Error::Parse(format!("bad gaussian symbol {s:?}")))?;
                Ok(SymbolRecipe::Gaussian(w))
            }
            _ => Err(Error::Parse(format!("unknown symbol {s:?}"))),
        }
    }

    pub fn realize(&self, grid: &Grid) -> PhaseField {
        PhaseField::from_fn(grid, |x, xi| {
            let v = match self {
                SymbolRecipe::One => 1.0,
                SymbolRecipe::Multiplier(w) => w.eval(x),
                SymbolRecipe::FourierMultiplier(w) => w.eval(xi),
                SymbolRecipe::PhaseWeight(w) => w.eval(&[x, xi].concat()),
                SymbolRecipe::Gaussian(s) => {
                    let r2: f64 = x.iter().chain(xi).map(|v| v * v).sum();
                    (-0.5 * r2 / (s * s)).exp()
                }
            };
            C64::new(v, 0.0)
        })
    }
}

fn mod_norm(f: &Signal, w: &Weight, backend: &QbfSpec) -> Result<f64> {
    modulation_norm(f, &ModSpec::gaussian(&f.grid, w.clone(), backend.clone())?)
}

/// `max ||T f||_{M(w2,B)} / ||f||_{M(w1,B)}` in ensemble order.
fn op_ratio(t: &OperatorMatrix, ensemble: &[Signal], w1: &Weight, w2: &Weight, backend: &QbfSpec) -> Result<f64> {
    let r: Vec<f64> = ensemble
        .par_iter()
        .map(|f| -> Result<f64> {
            let den = mod_norm(f, w1, backend)?;
            if den == 0.0 {
                return Ok(0.0);
            }
            Ok(mod_norm(&t.apply(f)?, w2, backend)? / den)
        })
        .collect::<Result<_>>()?;
    Ok(r.into_iter().fold(0.0, f64::max))
}

fn scan_max(bx: &ScanBox, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    (0..bx.len())
        .into_par_iter()
        .map(|i| {
            let mut p = vec![0.0; bx.dim];
            bx.point(i, &mut p);
            f(&p)
        })
        .reduce(|| 0.0, f64::max)
}

/// Weights for the pseudo-differential estimate; `w0` lives on `R^{4d}`.
#[derive(Debug, Clone)]
pub struct PsidoSetup {
    pub w0: Weight,
    pub w1: Weight,
    pub w2: Weight,
    pub backend: QbfSpec,
    /// Box in `(x, y, xi, eta)`, dimension `4d`.
    pub scan: ScanBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsidoCertificate {
    /// Constant of the weight hypothesis on the box and on its doubling.
    pub weight: ModerateScan,
    /// `||a||_{M^{inf,r0}_{(w0)}}`.
    pub symbol_norm: f64,
    /// `max ||Op f||_{M(w2,B)} / ||f||_{M(w1,B)}`.
    pub op_ratio: f64,
    /// `op_ratio / symbol_norm`.
    pub op_constant: f64,
    pub supported: bool,
}

/// Sup of `w2(x,xi) v0(x-y, xi-eta) / (w1(y,eta) w0(x + A(y-x), eta + A^T(xi-eta), xi-eta, y-x))`.
pub fn psido_weight_scan(q: &Quantization, s: &PsidoSetup) -> Result<ModerateScan> {
    let d = q.dim();
    if s.scan.dim != 4 * d || s.w0.dim() != 4 * d || s.w1.dim() != 2 * d || s.w2.dim() != 2 * d {
        return Err(Error::DimensionMismatch { expected: 4 * d, got: s.scan.dim });
    }
    let v0 = s.backend.v0();
    let f = |p: &[f64]| -> f64 {
        let (x, rest) = p.split_at(d);
        let (y, rest) = rest.split_at(d);
        let (xi, eta) = rest.split_at(d);
        let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u - v).collect() };
        let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + v).collect() };
        let ymx = sub(y, x);
        let ximeta = sub(xi, eta);
        let z0 = add(x, &q.apply(&ymx));
        let z1 = add(eta, &q.apply_t(&ximeta));
        let num = s.w2.eval(&[x, xi].concat()) * v0.eval(&[sub(x, y), ximeta.clone()].concat());
        let den = s.w1.eval(&[y, eta].concat()) * s.w0.eval(&[z0, z1, ximeta, ymx].concat());
        num / den
    };
    Ok(ModerateScan { constant: scan_max(&s.scan, f), doubled_constant: scan_max(&s.scan.doubled(), f) })
}

pub fn psido_bound_certificate(a: &SymbolField, s: &PsidoSetup, ensemble: &[Signal]) -> Result<PsidoCertificate> {
    let weight = psido_weight_scan(&a.quant, s)?;
    let symbol_norm = symbol_norm(&a.field, &s.w0, f64::INFINITY, s.backend.r0())?;
    let t = kernel_from_symbol(a)?;
    let op_ratio = op_ratio(&t, ensemble, &s.w1, &s.w2, &s.backend)?;
    Ok(PsidoCertificate {
        supported: !weight.is_unbounded(),
        weight,
        symbol_norm,
        op_ratio,
        op_constant: op_ratio / symbol_norm,
    })
}

/// Exponents and weights for the Toeplitz estimate. `w` lives on `R^{4d}`.
#[derive(Debug, Clone)]
pub struct ToeplitzSetup {
    pub w: Weight,
    pub w1: Weight,
    pub w2: Weight,
    pub theta1: Weight,
    pub theta2: Weight,
    pub backend: QbfSpec,
    pub q: f64,
    pub r: f64,
    /// Box in `(x, y, z, xi, eta, zeta)`, dimension `6d`.
    pub scan: ScanBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCertificate {
    pub weight: ModerateScan,
    /// `||a||_{M^{inf,q}_{(w)}}`.
    pub symbol_norm: f64,
    /// `||phi_j||_{M^r_{(theta_j)}}`.
    pub window_norms: (f64, f64),
    pub op_ratio: f64,
    /// `op_ratio` divided by the symbol and window norms.
    pub op_constant: f64,
    pub supported: bool,
}

/// Accepts `1 <= 1/r <= 1/r0 = 1/q + 1/r` or `1/2 <= 1/r = 1/r0 = 1 - 1/(2q)`.
pub fn toeplitz_exponents_ok(q: f64, r: f64, r0: f64) -> bool {
    let (iq, ir, ir0) = (1.0 / q, 1.0 / r, 1.0 / r0);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    (1.0 <= ir && ir <= ir0 + 1e-12 && close(ir0, iq + ir)) || (0.5 <= ir && close(ir, ir0) && close(ir0, 1.0 - iq / 2.0))
}

pub fn toeplitz_weight_scan(s: &ToeplitzSetup) -> Result<ModerateScan> {
    let d = s.w1.dim() / 2;
    if s.scan.dim != 6 * d || s.w.dim() != 4 * d {
        return Err(Error::DimensionMismatch { expected: 6 * d, got: s.scan.dim });
    }
    let v0 = s.backend.v0();
    let f = |p: &[f64]| -> f64 {
        let c: Vec<&[f64]> = p.chunks(d).collect();
        let (x, y, z, xi, eta, zeta) = (c[0], c[1], c[2], c[3], c[4], c[5]);
        let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u - v).collect() };
        let num = s.w2.eval(&[sub(x, z), sub(xi, zeta)].concat()) * v0.eval(&[sub(y, z), sub(eta, zeta)].concat());
        let den = s.w1.eval(&[sub(x, y), sub(xi, eta)].concat())
            * s.w.eval(&[x.to_vec(), xi.to_vec(), sub(eta, zeta), sub(z, y)].concat())
            * s.theta1.eval(&[y, eta].concat())
            * s.theta2.eval(&[z, zeta].concat());
        num / den
    };
    Ok(ModerateScan { constant: scan_max(&s.scan, f), doubled_constant: scan_max(&s.scan.doubled(), f) })
}

/// `||phi||_{M^r_{(theta)}}` with the Gaussian window.
pub fn window_norm(phi: &Signal, theta: &Weight, r: f64) -> Result<f64> {
    let v = BlockField::from_phase(&stft(phi, &gaussian(&phi.grid))?);
    mixed_norm(&v, &QbfSpec::new(r, r, Order::FirstInner, theta.clone())?)
}

pub fn toeplitz_bound_certificate(a: &PhaseField, phi1: &Signal, phi2: &Signal, s: &ToeplitzSetup, ensemble: &[Signal]) -> Result<ToeplitzCertificate> {
    let r0 = s.backend.r0();
    if !toeplitz_exponents_ok(s.q, s.r, r0) {
        return Err(Error::Precondition(format!("exponents q={}, r={}, r0={r0} violate the Toeplitz relations", s.q, s.r)));
    }
    let weight = toeplitz_weight_scan(s)?;
    let symbol_norm = symbol_norm(a, &s.w, f64::INFINITY, s.q)?;
    let window_norms = (window_norm(phi1, &s.theta1, s.r)?, window_norm(phi2, &s.theta2, s.r)?);
    let t = toeplitz_matrix(a, phi1, phi2)?;
    let op_ratio = op_ratio(&t, ensemble, &s.w1, &s.w2, &s.backend)?;
    Ok(ToeplitzCertificate {
        supported: !weight.is_unbounded(),
        weight,
        symbol_norm,
        window_norms,
        op_ratio,
        op_constant: op_ratio / (symbol_norm * window_norms.0 * window_norms.1),
    })
}

/// Largest condition number accepted by [`lifting_check`].
pub const SINGULAR_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftingReport {
    /// Spectral condition number of the Toeplitz matrix.
    pub condition: f64,
    /// `max ||T f||_{M(w/theta,B)} / ||f||_{M(theta w,B)}`.
    pub forward_norm: f64,
    /// `max ||T^{-1} g||_{M(theta w,B)} / ||g||_{M(w/theta,B)}`.
    pub inverse_norm: f64,
    /// Advisory: `||w0||_{M^{inf,inf}_{(1/w0)}}`, finite under the lifting
    /// hypothesis with `q0 = inf`, `t = 1`.
    pub symbol_norm: f64,
    /// Advisory: `||phi||_{M^1_{(v)}}` with `v` the moderator of `w0`.
    pub window_norm: f64,
}

/// Assemble `Tp_phi(w0)` densely, invert it, and measure it and its inverse
/// between `M(theta w, B)` and `M(w / theta, B)`, `theta = w0^{1/2}`.
pub fn lifting_check(w0: &Weight, phi: &Signal, w: &Weight, backend: &QbfSpec, ensemble: &[Signal]) -> Result<LiftingReport> {
    let g = phi.grid.clone();
    let d = g.dim();
    if w0.dim() != 2 * d || w.dim() != 2 * d {
        return Err(Error::DimensionMismatch { expected: 2 * d, got: w0.dim() });
    }
    w0.check_positive(&ScanBox::new(2 * d, g.half_width().max(g.dual().half_width()), 16)?)?;
    let sym = PhaseField::from_fn(&g, |x, xi| C64::new(w0.eval(&[x, xi].concat()), 0.0));
    let t = toeplitz_matrix(&sym, phi, phi)?;
    let sv = t.matrix.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = smax / smin;
    if !(condition < SINGULAR_THRESHOLD) {
        return Err(Error::Singular(condition));
    }
    let theta = w0.powf(0.5);
    let dom = weight_product(&theta, w)?;
    let cod = weight_product(w, &weight_reciprocal(&theta))?;
    let forward_norm = op_ratio(&t, ensemble, &dom, &cod, backend)?;
    let lu = t.matrix.clone().lu();
    let inv: Vec<f64> = ensemble
        .par_iter()
        .map(|gsig| -> Result<f64> {
            let den = mod_norm(gsig, &cod, backend)?;
            if den == 0.0 {
                return Ok(0.0);
            }
            let b = nalgebra::DVector::from_column_slice(&gsig.values);
            let x = lu.solve(&b).ok_or(Error::Singular(condition))?;
            let f = Signal::new(g.clone(), x.iter().copied().collect())?;
            Ok(mod_norm(&f, &dom, backend)? / den)
        })
        .collect::<Result<_>>()?;
    let inverse_norm = inv.into_iter().fold(0.0, f64::max);
    let v = w0.moderator().unwrap_or_else(|| Weight::one(2 * d));
    let sym_w = Weight::tensor(&weight_reciprocal(w0), &Weight::one(2 * d));
    Ok(LiftingReport {
        condition,
        forward_norm,
        inverse_norm,
        symbol_norm: symbol_norm(&sym, &sym_w, f64::INFINITY, f64::INFINITY)?,
        window_norm: window_norm(phi, &v, 1.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::parse_window;
    use crate::grid::{dft, inverse_dft_onto, shifted_gaussian};
    use crate::weights::polynomial_weight;

    fn grid() -> Grid {
        Grid::centered(1, 32, 0.5).unwrap()
    }

    fn gauss_symbol(g: &Grid, s: f64) -> PhaseField {
        SymbolRecipe::Gaussian(s).realize(g)
    }

    #[test]
    fn quantizations_validate() {
        assert!(Quantization::scalar(1, 0.3).is_err());
        assert!(Quantization::new(2, vec![0.5, 0.0, 1.0]).is_err());
        assert_eq!(Quantization::parse("weyl", 2).unwrap(), Quantization::weyl(2));
        assert_eq!(Quantization::parse("-1.5", 1).unwrap().entry(0, 0), -1.5);
        assert_eq!(Quantization::weyl(1).to_string(), "weyl");
        assert!(Quantization::parse("half", 1).is_err());
    }

    #[test]
    fn symbol_one_is_identity() {
        let g = grid();
        for t in [0.0, 0.5, 1.0, -0.5] {
            let a = SymbolField::new(SymbolRecipe::One.realize(&g), Quantization::scalar(1, t).unwrap()).unwrap();
            let k = kernel_from_symbol(&a).unwrap();
            assert!(k.rel_distance(&OperatorMatrix::identity(&g)).unwrap() < 1e-12, "A = {t}");
        }
    }

    #[test]
    fn multipliers() {
        let g = grid();
        let m = polynomial_weight(1.0, 1);
        let a = SymbolField::new(SymbolRecipe::Multiplier(m.clone()).realize(&g), Quantization::kohn_nirenberg(1)).unwrap();
        let k = kernel_from_symbol(&a).unwrap();
        for j in 0..g.len() {
            for l in 0..g.len() {
                let want = if j == l { m.eval(&g.point(j)) } else { 0.0 };
                assert!((k.matrix[(j, l)] - want).norm() < 1e-12);
            }
        }
        // a smooth Fourier multiplier acts through the DFT in every quantization
        // once its kernel decays inside the box
        let g = Grid::centered(1, 64, 0.4).unwrap();
        let mx = |xi: f64| C64::new(1.0, xi) * (-0.5 * xi * xi).exp();
        let f = shifted_gaussian(&g, &[1.0], &[0.5]);
        let mut hat = dft(&f);
        let fg = hat.grid.clone();
        hat.values.iter_mut().enumerate().for_each(|(k, v)| *v *= mx(fg.point(k)[0]));
        let want = inverse_dft_onto(&hat, &g).unwrap();
        let sym = PhaseField::from_fn(&g, |_, xi| mx(xi[0]));
        for q in [Quantization::kohn_nirenberg(1), Quantization::weyl(1), Quantization::identity(1)] {
            let a = SymbolField::new(sym.clone(), q).unwrap();
            let d = apply_op(&a, &f).unwrap().rel_distance(&want);
            assert!(d < 1e-12, "{d:e}");
        }
    }

    /// Direct triple sum with the symbol evaluated in closed form.
    fn apply_oracle(sym: impl Fn(f64, f64) -> f64, t: f64, f: &Signal) -> Signal {
        let g = &f.grid;
        let dual = g.dual();
        let (h, dx) = (g.step(), dual.step());
        Signal::from_fn(g, |x| {
            let x = x[0];
            let mut s = C64::new(0.0, 0.0);
            for m in 0..g.len() {
                let y = g.point(m)[0];
                for k in 0..g.len() {
                    let xi = dual.point(k)[0];
                    s += sym(x - t * (x - y), xi) * C64::from_polar(1.0, (x - y) * xi) * f.values[m];
                }
            }
            s * h * dx / (2.0 * PI)
        })
    }

    #[test]
    fn kernel_matches_triple_sum() {
        let g = grid();
        let f = shifted_gaussian(&g, &[-1.0], &[1.0]);
        let sym = |x: f64, xi: f64| (-(x * x + xi * xi) / 2.0).exp();
        for (t, tol) in [(0.0, 1e-9), (0.5, 1e-6), (1.0, 1e-9)] {
            let a = SymbolField::new(gauss_symbol(&g, 1.0), Quantization::scalar(1, t).unwrap()).unwrap();
            let d = apply_op(&a, &f).unwrap().rel_distance(&apply_oracle(sym, t, &f));
            assert!(d < tol, "A = {t}: {d:e}");
        }
    }

    #[test]
    fn conversion_preserves_the_operator() {
        let g = grid();
        let a = SymbolField::new(gauss_symbol(&g, 1.0), Quantization::kohn_nirenberg(1)).unwrap();
        let k0 = kernel_from_symbol(&a).unwrap();
        for q in [Quantization::weyl(1), Quantization::identity(1)] {
            let b = quantization_convert(&a, &q).unwrap();
            let d = kernel_from_symbol(&b).unwrap().rel_distance(&k0).unwrap();
            assert!(d < 1e-6, "{q}: {d:e}");
            let back = quantization_convert(&b, &a.quant).unwrap();
            assert!(back.field.rel_distance(&a.field) < 1e-12);
        }
    }

    #[test]
    fn conversion_maps_wigner_to_wigner() {
        let g = Grid::centered(1, 64, 0.25).unwrap();
        let f1 = shifted_gaussian(&g, &[1.0], &[-0.5]);
        let f2 = shifted_gaussian(&g, &[-0.5], &[1.0]);
        let kn = Quantization::kohn_nirenberg(1);
        let w0 = SymbolField::new(wigner(&f1, &f2, &kn).unwrap(), kn).unwrap();
        for t in [0.5, 1.0] {
            let q = Quantization::scalar(1, t).unwrap();
            let want = wigner(&f1, &f2, &q).unwrap();
            let d = quantization_convert(&w0, &q).unwrap().field.rel_distance(&want);
            assert!(d < 1e-9, "A = {t}: {d:e}");
        }
    }

    #[test]
    fn wigner_gives_rank_one_operators() {
        let g = Grid::centered(1, 128, 0.2).unwrap();
        let f1 = shifted_gaussian(&g, &[1.0], &[-0.5]);
        let f2 = shifted_gaussian(&g, &[-0.5], &[1.0]);
        for t in [0.0, 0.5, 1.0] {
            let d = rank_one_defect(&f1, &f2, &Quantization::scalar(1, t).unwrap()).unwrap();
            assert!(d < 1e-6, "A = {t}: {d:e}");
        }
    }

    #[test]
    fn weyl_wigner_of_the_gaussian() {
        let g = Grid::centered(1, 128, 0.25).unwrap();
        let phi = gaussian(&g);
        let w = wigner(&phi, &phi, &Quantization::weyl(1)).unwrap();
        // direct quadrature at the origin on a fine independent grid
        let dy = 1e-3;
        let origin: f64 = (-20_000..=20_000)
            .map(|k| {
                let y = k as f64 * dy;
                PI.powf(-0.5) * (-y * y / 4.0).exp()
            })
            .sum::<f64>()
            * dy
            / (2.0 * PI).sqrt();
        let lat = w.lattice();
        let o = lat.ravel(&lat.origin().unwrap());
        assert!((w.values[o].re - origin).abs() < 1e-10, "{} vs {origin}", w.values[o]);
        let want = PhaseField::from_fn(&g, |x, xi| C64::new(origin * (-(x[0] * x[0] + xi[0] * xi[0])).exp(), 0.0));
        assert!(w.max_abs_diff(&want) < 1e-10);
        let zero = wigner(&phi, &Signal::zeros(&g), &Quantization::kohn_nirenberg(1)).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn wigner_norm_product_is_stable() {
        let g = Grid::centered(1, 32, 0.5).unwrap();
        let theta = polynomial_weight(1.0, 2);
        let ratios: Vec<f64> = ["gauss", "gauss:dilate=1.5", "gauss:shift=1,freq=-1"]
            .iter()
            .map(|w| {
                let phi2 = parse_window(w, 1).unwrap().realize(&g).unwrap();
                wigner_norm_ratio(&gaussian(&g), &phi2, &Quantization::weyl(1), 1.0, &theta, &theta).unwrap()
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(lo > 0.0 && hi / lo < 10.0, "{ratios:?}");
    }

    #[test]
    fn wigner_marginal() {
        let g = Grid::centered(1, 64, 0.25).unwrap();
        let f = shifted_gaussian(&g, &[0.5], &[1.0]);
        let w = wigner(&f, &f, &Quantization::weyl(1)).unwrap();
        let total: C64 = w.values.iter().sum::<C64>() * w.cell_volume();
        let want = (2.0 * PI).sqrt() * f.norm().powi(2);
        assert!((total.re - want).abs() < 1e-10 && total.im.abs() < 1e-10);
    }

    #[test]
    fn toeplitz_routes_agree() {
        let g = grid();
        let phi1 = gaussian(&g);
        let phi2 = parse_window("gauss:shift=0.5,freq=0.5", 1).unwrap().realize(&g).unwrap();
        let a = gauss_symbol(&g, 1.0);
        let t = toeplitz_matrix(&a, &phi1, &phi2).unwrap();
        let w = kernel_from_symbol(&toeplitz_weyl_symbol(&a, &phi1, &phi2).unwrap()).unwrap();
        let d = w.rel_distance(&t).unwrap();
        assert!(d < 1e-5, "{d:e}");
        let f = shifted_gaussian(&g, &[1.0], &[0.0]);
        assert!(toeplitz_direct(&a, &phi1, &phi2, &f).unwrap().rel_distance(&t.apply(&f).unwrap()) < 1e-12);
        // symbol one gives a multiple of the identity
        let g = Grid::centered(1, 64, 0.5).unwrap();
        let phi1 = gaussian(&g);
        let phi2 = parse_window("gauss:shift=0.5,freq=0.5", 1).unwrap().realize(&g).unwrap();
        let one = toeplitz_matrix(&SymbolRecipe::One.realize(&g), &phi1, &phi2).unwrap();
        // away from the edges, where shifted windows are truncated
        let c = crate::grid::inner(&phi2, &phi1).unwrap();
        let inner: Vec<usize> = (0..g.len()).filter(|&j| g.point(j)[0].abs() <= 4.0).collect();
        for &j in &inner {
            for &m in &inner {
                let want = if j == m { c } else { C64::new(0.0, 0.0) };
                assert!((one.matrix[(j, m)] - want).norm() < 1e-10, "{j} {m}");
            }
        }
    }

    #[test]
    fn kernel_relation() {
        let g = grid();
        let phi1 = Recipe::gaussian(1);
        let phi2 = parse_window("gauss:shift=0.5,freq=0.5", 1).unwrap();
        for t in [0.0, 0.5] {
            let a = SymbolField::new(gauss_symbol(&g, 1.5), Quantization::scalar(1, t).unwrap()).unwrap();
            let d = kernel_stft_relation_defect(&a, &phi1, &phi2, 8, 3).unwrap();
            assert!(d < 1e-6, "A = {t}: {d:e}");
        }
    }

    #[test]
    fn symbol_norm_of_one() {
        let g = grid();
        let n = symbol_norm(&SymbolRecipe::One.realize(&g), &Weight::one(4), f64::INFINITY, f64::INFINITY).unwrap();
        assert!((n - PI.powf(-0.5)).abs() < 1e-8, "{n}");
        let w = polynomial_weight(1.0, 4);
        let a = gauss_symbol(&g, 1.0);
        let n1 = symbol_norm(&a, &Weight::one(4), f64::INFINITY, 1.0).unwrap();
        let n2 = symbol_norm(&a, &w, f64::INFINITY, 1.0).unwrap();
        assert!(n2 >= n1 && n1 > 0.0);
        assert_eq!(n1, symbol_norm(&a, &Weight::one(4), f64::INFINITY, 1.0).unwrap());
    }

    #[test]
    fn certificates() {
        let g = grid();
        let ens: Vec<Signal> = [(0.0, 0.0), (1.0, -1.0), (-1.5, 0.5)]
            .iter()
            .map(|&(x, xi)| shifted_gaussian(&g, &[x], &[xi]))
            .collect();
        let backend = QbfSpec::lebesgue(2.0, 2.0, 2).unwrap();
        let s = PsidoSetup {
            w0: Weight::one(4),
            w1: Weight::one(2),
            w2: Weight::one(2),
            backend: backend.clone(),
            scan: ScanBox::new(4, 2.0, 5).unwrap(),
        };
        let a = SymbolField::new(gauss_symbol(&g, 2.0), Quantization::weyl(1)).unwrap();
        let c = psido_bound_certificate(&a, &s, &ens).unwrap();
        assert!(c.supported && (c.weight.constant - 1.0).abs() < 1e-12);
        let one = SymbolField::new(SymbolRecipe::One.realize(&g), Quantization::weyl(1)).unwrap();
        let c1 = psido_bound_certificate(&one, &s, &ens).unwrap();
        assert!((c1.op_ratio - 1.0).abs() < 1e-12, "{}", c1.op_ratio);
        assert!(c.op_constant.is_finite() && c.op_constant > 0.0);

        assert!(toeplitz_exponents_ok(f64::INFINITY, 1.0, 1.0));
        assert!(!toeplitz_exponents_ok(2.0, 1.0, 1.0));
        assert!(toeplitz_exponents_ok(1.0, 2.0, 2.0));
        let ts = ToeplitzSetup {
            w: Weight::one(4),
            w1: Weight::one(2),
            w2: Weight::one(2),
            theta1: Weight::one(2),
            theta2: Weight::one(2),
            backend,
            q: f64::INFINITY,
            r: 1.0,
            scan: ScanBox::new(6, 1.0, 3).unwrap(),
        };
        let phi = gaussian(&g);
        let c = toeplitz_bound_certificate(&a.field, &phi, &phi, &ts, &ens).unwrap();
        assert!(c.supported && c.op_constant <= 1.0 + 1e-9, "{c:?}");
        let bad = ToeplitzSetup { q: 2.0, ..ts };
        assert!(matches!(toeplitz_bound_certificate(&a.field, &phi, &phi, &bad, &ens), Err(Error::Precondition(_))));
    }

    #[test]
    fn lifting() {
        let g = grid();
        let ens: Vec<Signal> = [(0.0, 0.0), (1.0, 1.0)].iter().map(|&(x, xi)| shifted_gaussian(&g, &[x], &[xi])).collect();
        let backend = QbfSpec::lebesgue(2.0, 2.0, 2).unwrap();
        let r = lifting_check(&polynomial_weight(1.0, 2), &gaussian(&g), &Weight::one(2), &backend, &ens).unwrap();
        assert!(r.condition.is_finite() && r.condition > 1.0);
        assert!(r.forward_norm.is_finite() && r.inverse_norm.is_finite());
        assert!(r.symbol_norm.is_finite() && r.window_norm.is_finite());
        let flat = lifting_check(&Weight::one(2), &gaussian(&g), &Weight::one(2), &backend, &ens).unwrap();
        assert!((flat.forward_norm - 1.0).abs() < 1e-6 && (flat.inverse_norm - 1.0).abs() < 1e-6, "{flat:?}");
        let zero = Weight::constant(1e-300, 2).unwrap();
        assert!(lifting_check(&zero, &gaussian(&g), &Weight::one(2), &backend, &ens).is_err());
    }
}
