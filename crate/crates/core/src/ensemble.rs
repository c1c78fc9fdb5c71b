//! Grid-independent signal descriptions: sums of time-frequency shifted
//! Gaussians. A recipe can be sampled on any grid, which is what refinement
//! experiments need.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, Signal};
use crate::weights::Weight;

/// `coeff * pi^{-d/4} s^{-d/2} e^{i<x,xi0>} e^{-|x - x0|^2 / (2 s^2)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub width: f64,
    pub coeff: Complex64,
}

impl Atom {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let d = x.len() as f64;
        let mut r2 = 0.0;
        let mut ph = 0.0;
        for k in 0..x.len() {
            r2 += (x[k] - self.x0[k]).powi(2);
            ph += x[k] * self.xi0[k];
        }
        let amp = PI.powf(-d / 4.0) * self.width.powf(-d / 2.0) * (-0.5 * r2 / (self.width * self.width)).exp();
        self.coeff * Complex64::from_polar(amp, ph)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub dim: usize,
    pub atoms: Vec<Atom>,
}

impl Recipe {
    pub fn atom(x0: &[f64], xi0: &[f64], width: f64, coeff: Complex64) -> Recipe {
        Recipe {
            dim: x0.len(),
            atoms: vec![Atom { x0: x0.to_vec(), xi0: xi0.to_vec(), width, coeff }],
        }
    }

    /// The normalized Gaussian `phi0`.
    pub fn gaussian(dim: usize) -> Recipe {
        Recipe::atom(&vec![0.0; dim], &vec![0.0; dim], 1.0, Complex64::new(1.0, 0.0))
    }

    pub fn scaled(&self, c: Complex64) -> Recipe {
        let mut r = self.clone();
        r.atoms.iter_mut().for_each(|a| a.coeff *= c);
        r
    }

    pub fn realize(&self, grid: &Grid) -> Result<Signal> {
        if grid.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: self.dim });
        }
        Ok(Signal::from_fn(grid, |x| self.atoms.iter().map(|a| a.eval(x)).sum()))
    }
}

pub fn realize_all(recipes: &[Recipe], grid: &Grid) -> Result<Vec<Signal>> {
    recipes.iter().map(|r| r.realize(grid)).collect()
}

/// Window names: `gauss`, `gauss:dilate=2`, `gauss:shift=1`,
/// `gauss:shift=1,freq=0.5`.
pub fn parse_window(spec: &str, dim: usize) -> Result<Recipe> {
    let (head, body) = spec.trim().split_once(':').unwrap_or((spec.trim(), ""));
    if head != "gauss" {
        return Err(Error::Parse(format!("unknown window {head:?}")));
    }
    let (mut width, mut shift, mut freq) = (1.0, 0.0, 0.0);
    for kv in body.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value in {spec:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number in {spec:?}")))?;
        match k.trim() {
            "dilate" if v > 0.0 => width = v,
            "shift" => shift = v,
            "freq" => freq = v,
            _ => return Err(Error::Parse(format!("bad window parameter {kv:?}"))),
        }
    }
    Ok(Recipe::atom(&vec![shift; dim], &vec![freq; dim], width, Complex64::new(1.0, 0.0)))
}

/// Seeded ensemble: the Gaussian first, then sums of one to three atoms
/// with positions and frequencies in `[-radius, radius]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub dim: usize,
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
}

pub fn generate_ensemble(spec: &EnsembleSpec) -> Vec<Recipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let mut out = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        if k == 0 {
            out.push(Recipe::gaussian(d));
            continue;
        }
        let n_atoms = rng.gen_range(1..=3);
        let coord = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| if spec.radius > 0.0 { rng.gen_range(-spec.radius..=spec.radius) } else { 0.0 }).collect()
        };
        let atoms = (0..n_atoms)
            .map(|_| {
                let x0 = coord(&mut rng);
                let xi0 = coord(&mut rng);
                Atom {
                    x0,
                    xi0,
                    width: rng.gen_range(0.7..1.4),
                    coeff: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                }
            })
            .collect();
        out.push(Recipe { dim: d, atoms });
    }
    out
}

/// Up to `m` phase-space points on a uniform lattice over
/// `[-half_width, half_width]^{2d}`, nearest to the origin first.
pub fn box_centers(dim: usize, half_width: f64, m: usize) -> Vec<Vec<f64>> {
    if m == 0 {
        return Vec::new();
    }
    let n = 2 * dim;
    let mut c = 1usize;
    while c.pow(n as u32) < m {
        c += 1;
    }
    let coord = |i: usize| if c == 1 { 0.0 } else { -half_width + 2.0 * half_width * i as f64 / (c - 1) as f64 };
    let mut pts: Vec<Vec<f64>> = (0..c.pow(n as u32))
        .map(|mut i| {
            let mut p = vec![0.0; n];
            for a in (0..n).rev() {
                p[a] = coord(i % c);
                i /= c;
            }
            p
        })
        .collect();
    pts.sort_by(|a, b| {
        let ra: f64 = a.iter().map(|v| v * v).sum();
        let rb: f64 = b.iter().map(|v| v * v).sum();
        ra.total_cmp(&rb)
    });
    pts.truncate(m);
    pts
}

/// Probes `f_k = w(X_k)^{-1} e^{i<., xi_k>} phi(. - x_k)` for `X_k = (x_k, xi_k)`
/// and `phi = phi0`.
pub fn probe_family(w: &Weight, centers: &[Vec<f64>]) -> Result<Vec<Recipe>> {
    centers
        .iter()
        .map(|c| {
            if c.len() != w.dim() || c.len() % 2 != 0 {
                return Err(Error::DimensionMismatch { expected: w.dim(), got: c.len() });
            }
            let d = c.len() / 2;
            Ok(Recipe::atom(&c[..d], &c[d..], 1.0, Complex64::new(1.0 / w.eval(c), 0.0)))
        })
        .collect()
}
