//! Phase-space convolutions: theta-convolutions over one block of
//! variables, the twisted convolution, and the STFT convolution and
//! multiplication identities.
//!
//! A theta-convolution over the block `x` with parameter block `y` is
//! `(F *_theta G)(x, y) = integral F(x - z, y) G(z, y) e^{i theta(x, y, z)} dz`,
//! evaluated by quadrature with zero fill outside the sampled box.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{dft, gaussian, inverse_dft_onto, PhaseField, Signal};
use crate::lattice::Lattice;
use crate::spaces::{mixed_norm, wiener_norm, BlockField, Order, QbfSpec, WienerSpec};
use crate::stft::stft;
use crate::weights::{weight_product, ModerateScan, ScanBox, Weight};

type C64 = Complex64;

/// Which variables of a phase field are convolved; the rest are parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvBlock {
    /// Convolve in `x`, parameter `xi`.
    Time,
    /// Convolve in `xi`, parameter `x`.
    Freq,
    /// Convolve over all of phase space.
    All,
}

impl ConvBlock {
    fn axes(self, d: usize) -> Vec<usize> {
        match self {
            ConvBlock::Time => (0..d).collect(),
            ConvBlock::Freq => (d..2 * d).collect(),
            ConvBlock::All => (0..2 * d).collect(),
        }
    }
}

type Alpha = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type Beta = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type Theta = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// Real phase `theta(x, y, z)`: `x` and `z` in the convolved block, `y` in
/// the parameter block.
#[derive(Clone)]
pub enum PhaseKernel {
    Zero,
    /// `theta = beta(x, y) + <alpha(y), z>`, evaluated with FFTs.
    Affine { alpha: Alpha, beta: Beta },
    /// Arbitrary phase, evaluated by direct summation.
    General(Theta),
}

impl std::fmt::Debug for PhaseKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhaseKernel::Zero => write!(f, "Zero"),
            PhaseKernel::Affine { .. } => write!(f, "Affine"),
            PhaseKernel::General(_) => write!(f, "General"),
        }
    }
}

impl PhaseKernel {
    pub fn affine(
        alpha: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        beta: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhaseKernel::Affine { alpha: Arc::new(alpha), beta: Arc::new(beta) }
    }

    pub fn general(theta: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PhaseKernel::General(Arc::new(theta))
    }

    pub fn eval(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        match self {
            PhaseKernel::Zero => 0.0,
            PhaseKernel::Affine { alpha, beta } => {
                beta(x, y) + alpha(y).iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            }
            PhaseKernel::General(t) => t(x, y, z),
        }
    }
}

fn split_coords(c: &[f64], axes: &[usize], conv: &mut Vec<f64>, param: &mut Vec<f64>) {
    conv.clear();
    param.clear();
    for (k, v) in c.iter().enumerate() {
        if axes.contains(&k) {
            conv.push(*v);
        } else {
            param.push(*v);
        }
    }
}

fn conv_origin(lat: &Lattice, axes: &[usize]) -> Result<Vec<usize>> {
    axes.iter()
        .map(|&k| {
            lat.axis(k)
                .origin_index()
                .ok_or_else(|| Error::InvalidGrid("the origin must be a lattice point".into()))
        })
        .collect()
}

/// `F *_theta G` over the variables in `block`.
pub fn theta_conv(f: &PhaseField, g: &PhaseField, ker: &PhaseKernel, block: ConvBlock) -> Result<PhaseField> {
    f.time_grid.ensure_same(&g.time_grid)?;
    let lat = f.lattice();
    let axes = block.axes(f.dim());
    let origin = conv_origin(&lat, &axes)?;
    let vol: f64 = axes.iter().map(|&k| lat.axis(k).step).product();
    let values = match ker {
        PhaseKernel::General(_) => theta_conv_direct(&f.values, &g.values, &lat, &axes, &origin, ker),
        PhaseKernel::Zero => {
            let mut v = fft::convolve_axes(&f.values, &g.values, &lat.shape(), &axes, &origin);
            v.iter_mut().for_each(|z| *z *= vol);
            v
        }
        PhaseKernel::Affine { alpha, beta } => {
            let mut c = vec![0.0; lat.dim()];
            let (mut xc, mut yp) = (Vec::new(), Vec::new());
            let gt: Vec<C64> = g
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    lat.coords(i, &mut c);
                    split_coords(&c, &axes, &mut xc, &mut yp);
                    let ph: f64 = alpha(&yp).iter().zip(&xc).map(|(a, z)| a * z).sum();
                    v * C64::from_polar(1.0, ph)
                })
                .collect();
            let mut v = fft::convolve_axes(&f.values, &gt, &lat.shape(), &axes, &origin);
            for (i, z) in v.iter_mut().enumerate() {
                lat.coords(i, &mut c);
                split_coords(&c, &axes, &mut xc, &mut yp);
                *z *= C64::from_polar(vol, beta(&xc, &yp));
            }
            v
        }
    };
    PhaseField::new(f.time_grid.clone(), values)
}

fn theta_conv_direct(
    f: &[C64],
    g: &[C64],
    lat: &Lattice,
    axes: &[usize],
    origin: &[usize],
    ker: &PhaseKernel,
) -> Vec<C64> {
    let dim = lat.dim();
    let shape = lat.shape();
    let vol: f64 = axes.iter().map(|&k| lat.axis(k).step).product();
    let conv_len: usize = axes.iter().map(|&k| shape[k]).product();
    (0..lat.len())
        .into_par_iter()
        .map(|i| {
            let mut mi = vec![0usize; dim];
            lat.unravel(i, &mut mi);
            let ci = lat.coords_vec(i);
            let (mut xc, mut yp) = (Vec::new(), Vec::new());
            split_coords(&ci, axes, &mut xc, &mut yp);
            let mut mz = mi.clone();
            let mut zc = vec![0.0; axes.len()];
            let mut src = mi.clone();
            let mut acc = C64::new(0.0, 0.0);
            'z: for t in 0..conv_len {
                let mut rem = t;
                for (a, &k) in axes.iter().enumerate().rev() {
                    mz[k] = rem % shape[k];
                    rem /= shape[k];
                    zc[a] = lat.axis(k).coord(mz[k]);
                }
                for (a, &k) in axes.iter().enumerate() {
                    let s = mi[k] as isize - mz[k] as isize + origin[a] as isize;
                    if s < 0 || s >= shape[k] as isize {
                        continue 'z;
                    }
                    src[k] = s as usize;
                }
                let fv = f[lat.ravel(&src)];
                let gv = g[lat.ravel(&mz)];
                acc += fv * gv * C64::from_polar(1.0, ker.eval(&xc, &yp, &zc));
            }
            acc * vol
        })
        .collect()
}

/// Number of fixed summation chunks; chunk sums are added in order so the
/// result does not depend on the thread count.
const CHUNKS: usize = 16;

/// `(F *_V G)(X) = (2pi)^{-d/2} integral F(X - Y) G(Y) e^{i<y, eta - xi>} dY`,
/// computed as an FFT convolution in the frequency block for every time
/// shift `y`.
pub fn twisted_conv(f: &PhaseField, g: &PhaseField) -> Result<PhaseField> {
    f.time_grid.ensure_same(&g.time_grid)?;
    let d = f.dim();
    let lat = f.lattice();
    let tlat = f.time_grid.lattice();
    let flat = f.freq_grid.lattice();
    let t_origin = tlat
        .origin()
        .ok_or_else(|| Error::InvalidGrid("the origin must be a lattice point".into()))?;
    let f_origin = flat.origin().expect("dual grids are centred");
    let shape = lat.shape();
    let (nt, nf) = (tlat.len(), flat.len());
    let freq_axes: Vec<usize> = (d..2 * d).collect();
    let hd = f.time_grid.quadrature_weight();
    let dd = f.freq_grid.quadrature_weight();
    let pref = (2.0 * PI).powf(-(d as f64) / 2.0) * hd * dd;
    let t_coords: Vec<Vec<f64>> = (0..nt).map(|j| tlat.coords_vec(j)).collect();
    let f_coords: Vec<Vec<f64>> = (0..nf).map(|k| flat.coords_vec(k)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();

    let contribution = |jy: usize| -> Vec<C64> {
        let y = &t_coords[jy];
        let mut my = vec![0usize; d];
        tlat.unravel(jy, &mut my);
        let delta: Vec<isize> = my.iter().zip(&t_origin).map(|(&a, &o)| o as isize - a as isize).collect();
        // A(x, .) = F(x - y, .), B(x, eta) = G(y, eta) e^{i<y, eta>}
        let mut a = vec![C64::new(0.0, 0.0); lat.len()];
        let mut mx = vec![0usize; d];
        for jx in 0..nt {
            tlat.unravel(jx, &mut mx);
            if let Some(src) = tlat.offset_index(&mx, &delta) {
                a[jx * nf..(jx + 1) * nf].copy_from_slice(f.row(src));
            }
        }
        let brow: Vec<C64> = g
            .row(jy)
            .iter()
            .zip(&f_coords)
            .map(|(v, eta)| v * C64::from_polar(1.0, dot(y, eta)))
            .collect();
        let b: Vec<C64> = (0..nt).flat_map(|_| brow.iter().copied()).collect();
        let mut c = fft::convolve_axes(&a, &b, &shape, &freq_axes, &f_origin);
        let phase: Vec<C64> = f_coords.iter().map(|xi| C64::from_polar(pref, -dot(y, xi))).collect();
        for row in c.chunks_mut(nf) {
            row.iter_mut().zip(&phase).for_each(|(v, p)| *v *= p);
        }
        c
    };

    let chunk = nt.div_ceil(CHUNKS);
    let partial: Vec<Vec<C64>> = (0..nt.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![C64::new(0.0, 0.0); lat.len()];
            for jy in c * chunk..((c + 1) * chunk).min(nt) {
                acc.iter_mut().zip(contribution(jy)).for_each(|(a, v)| *a += v);
            }
            acc
        })
        .collect();
    let mut values = vec![C64::new(0.0, 0.0); lat.len()];
    for p in partial {
        values.iter_mut().zip(p).for_each(|(a, v)| *a += v);
    }
    PhaseField::new(f.time_grid.clone(), values)
}

/// The second integral form
/// `(2pi)^{-d/2} integral F(Y) G(X - Y) e^{i<y - x, eta>} dY` by direct summation.
pub fn twisted_conv_kappa2(f: &PhaseField, g: &PhaseField) -> Result<PhaseField> {
    f.time_grid.ensure_same(&g.time_grid)?;
    let d = f.dim();
    let lat = f.lattice();
    let origin = lat
        .origin()
        .ok_or_else(|| Error::InvalidGrid("the origin must be a lattice point".into()))?;
    let tlat = f.time_grid.lattice();
    let flat = f.freq_grid.lattice();
    let (nt, nf) = (tlat.len(), flat.len());
    let pref = (2.0 * PI).powf(-(d as f64) / 2.0) * f.cell_volume();
    let t_coords: Vec<Vec<f64>> = (0..nt).map(|j| tlat.coords_vec(j)).collect();
    let f_coords: Vec<Vec<f64>> = (0..nf).map(|k| flat.coords_vec(k)).collect();
    // cis[j * nf + k] = e^{i<y_j, eta_k>}
    let cis: Vec<C64> = (0..nt * nf)
        .map(|i| {
            let ph: f64 = t_coords[i / nf].iter().zip(&f_coords[i % nf]).map(|(a, b)| a * b).sum();
            C64::from_polar(1.0, ph)
        })
        .collect();
    let ft: Vec<C64> = f.values.iter().zip(&cis).map(|(a, b)| a * b).collect();
    let shape = lat.shape();
    let values: Vec<C64> = (0..lat.len())
        .into_par_iter()
        .map(|i| {
            let mut mi = vec![0usize; 2 * d];
            lat.unravel(i, &mut mi);
            let jx = i / nf;
            let mut my = vec![0usize; 2 * d];
            let mut src = vec![0usize; 2 * d];
            let mut acc = C64::new(0.0, 0.0);
            'y: for iy in 0..lat.len() {
                lat.unravel(iy, &mut my);
                for k in 0..2 * d {
                    let s = mi[k] as isize - my[k] as isize + origin[k] as isize;
                    if s < 0 || s >= shape[k] as isize {
                        continue 'y;
                    }
                    src[k] = s as usize;
                }
                let ky = iy % nf;
                acc += ft[iy] * g.values[lat.ravel(&src)] * cis[jx * nf + ky].conj();
            }
            acc * pref
        })
        .collect();
    PhaseField::new(f.time_grid.clone(), values)
}

/// Ordinary convolution `f * g` on the grid via the transform rule
/// `F(f * g) = (2pi)^{d/2} F(f) F(g)` (the grid box is treated as a period).
pub fn signal_convolve(f: &Signal, g: &Signal) -> Result<Signal> {
    f.grid.ensure_same(&g.grid)?;
    let d = f.grid.dim();
    let s = (2.0 * PI).powf(d as f64 / 2.0);
    let fh = dft(f);
    let gh = dft(g);
    let prod = Signal {
        grid: fh.grid.clone(),
        values: fh.values.iter().zip(&gh.values).map(|(a, b)| a * b * s).collect(),
    };
    inverse_dft_onto(&prod, &f.grid)
}

/// Max over the phase grid of
/// `|V_{phi * psi}(f * g) - (2pi)^{d/2} (V_phi f(., xi) * V_psi g(., xi))|`.
pub fn conv_identity_defect(f: &Signal, g: &Signal, phi: &Signal, psi: &Signal) -> Result<f64> {
    let d = f.grid.dim();
    let lhs = stft(&signal_convolve(f, g)?, &signal_convolve(phi, psi)?)?;
    let rhs = theta_conv(&stft(f, phi)?, &stft(g, psi)?, &PhaseKernel::Zero, ConvBlock::Time)?;
    let s = (2.0 * PI).powf(d as f64 / 2.0);
    Ok(lhs.values.iter().zip(&rhs.values).map(|(a, b)| (a - b * s).norm()).fold(0.0, f64::max))
}

/// Max over the phase grid of
/// `|V_{phi psi}(f g) - (2pi)^{-d/2} (V_phi f(x, .) * V_psi g(x, .))|`.
pub fn mult_identity_defect(f: &Signal, g: &Signal, phi: &Signal, psi: &Signal) -> Result<f64> {
    let d = f.grid.dim();
    let lhs = stft(&f.mul(g)?, &phi.mul(psi)?)?;
    let rhs = theta_conv(&stft(f, phi)?, &stft(g, psi)?, &PhaseKernel::Zero, ConvBlock::Freq)?;
    let s = (2.0 * PI).powf(-(d as f64) / 2.0);
    Ok(lhs.values.iter().zip(&rhs.values).map(|(a, b)| (a - b * s).norm()).fold(0.0, f64::max))
}

/// Smallest `C` with `w0(a + b, y) <= C w1(a, y) w2(b, y)` over a scan box,
/// with `a, b` in the convolved block (`Time` or `Freq`) and `y` in the
/// other one. Weights live on `R^{2d}`; `bx` has dimension `3d`.
pub fn split_weight_scan(w0: &Weight, w1: &Weight, w2: &Weight, block: ConvBlock, bx: &ScanBox) -> Result<ModerateScan> {
    let d2 = w0.dim();
    if !d2.is_multiple_of(2) || w1.dim() != d2 || w2.dim() != d2 || bx.dim != 3 * d2 / 2 {
        return Err(Error::DimensionMismatch { expected: d2, got: bx.dim });
    }
    if block == ConvBlock::All {
        return Err(Error::Precondition("weight splitting needs a single block".into()));
    }
    let d = d2 / 2;
    let scan = |bx: &ScanBox| -> f64 {
        (0..bx.len())
            .into_par_iter()
            .map(|i| {
                let mut p = vec![0.0; 3 * d];
                bx.point(i, &mut p);
                let (a, rest) = p.split_at(d);
                let (b, y) = rest.split_at(d);
                let s: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + v).collect();
                let join = |u: &[f64]| -> Vec<f64> {
                    match block {
                        ConvBlock::Time => [u, y].concat(),
                        _ => [y, u].concat(),
                    }
                };
                w0.eval(&join(&s)) / (w1.eval(&join(a)) * w2.eval(&join(b)))
            })
            .reduce(|| 0.0, f64::max)
    };
    Ok(ModerateScan { constant: scan(bx), doubled_constant: scan(&bx.doubled()) })
}

/// Empirical constant of a bilinear estimate over an ensemble, with the
/// weight hypothesis scan it rests on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvCertificate {
    pub weight: ModerateScan,
    pub constant: f64,
    /// False when the weight scan suggests an unbounded constant.
    pub supported: bool,
}

fn check_exponents(ps: &[f64], lo: f64) -> Result<()> {
    for &p in ps {
        if !(p >= lo) {
            return Err(Error::InvalidExponent(p));
        }
    }
    Ok(())
}

fn recip(p: f64) -> f64 {
    1.0 / p
}

fn max_ratio<T: Sync, U: Sync>(fs: &[T], gs: &[U], ratio: impl Fn(&T, &U) -> Result<Option<f64>> + Sync) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..fs.len()).flat_map(|i| (0..gs.len()).map(move |j| (i, j))).collect();
    let vals: Vec<Option<f64>> = pairs.par_iter().map(|&(i, j)| ratio(&fs[i], &gs[j])).collect::<Result<_>>()?;
    Ok(vals.into_iter().flatten().fold(0.0, f64::max))
}

/// Exponents and weights of a Wiener amalgam Young estimate.
#[derive(Debug, Clone)]
pub struct YoungSetup {
    pub p: [f64; 3],
    pub w: [Weight; 3],
    /// Moderator paired with `w2` on the second factor.
    pub v: Weight,
    /// Unweighted global backend `B`.
    pub backend: QbfSpec,
    pub sides: (f64, f64),
    pub kernel: PhaseKernel,
    pub scan: ScanBox,
}

/// Best `C` in
/// `||F *_theta G||_{W^{p0,r0}(w0,B)} <= C ||F||_{W^{p1,r0}(w1,B)} ||G||_{W^{p2,inf}_*(w2 v, l^{r0,inf}_*)}`
/// with the convolution over the time block.
pub fn wiener_young_certificate(fs: &[PhaseField], gs: &[PhaseField], s: &YoungSetup) -> Result<ConvCertificate> {
    let [p0, p1, p2] = s.p;
    check_exponents(&s.p, 1.0)?;
    if (recip(p1) + recip(p2) - 1.0 - recip(p0)).abs() > 1e-12 {
        return Err(Error::Precondition(format!("1/{p1} + 1/{p2} != 1 + 1/{p0}")));
    }
    let weight = split_weight_scan(&s.w[0], &s.w[1], &s.w[2], ConvBlock::Time, &s.scan)?;
    let r0 = s.backend.r0();
    let dim = s.backend.weight.dim();
    let lhs = WienerSpec::new(p0, r0, s.sides, s.w[0].clone(), s.backend.clone())?;
    let n1 = WienerSpec::new(p1, r0, s.sides, s.w[1].clone(), s.backend.clone())?;
    let star = QbfSpec::new(r0, f64::INFINITY, Order::SecondInner, Weight::one(dim))?;
    let mut n2 = WienerSpec::new(p2, f64::INFINITY, s.sides, weight_product(&s.w[2], &s.v)?, star)?;
    n2.local_order = Order::SecondInner;
    let constant = max_ratio(fs, gs, |f, g| {
        let a = wiener_norm(&BlockField::from_phase(f), &n1)?;
        let b = wiener_norm(&BlockField::from_phase(g), &n2)?;
        if a == 0.0 || b == 0.0 {
            return Ok(None);
        }
        let c = theta_conv(f, g, &s.kernel, ConvBlock::Time)?;
        Ok(Some(wiener_norm(&BlockField::from_phase(&c), &lhs)? / (a * b)))
    })?;
    Ok(ConvCertificate { supported: !weight.is_unbounded(), weight, constant })
}

/// Weights and backend of a modulation space product estimate.
#[derive(Debug, Clone)]
pub struct ModSetup {
    pub w: [Weight; 3],
    pub v: Weight,
    pub backend: QbfSpec,
    pub scan: ScanBox,
}

fn stft_norm(f: &Signal, w: &Weight, spec: &QbfSpec) -> Result<f64> {
    let v = stft(f, &gaussian(&f.grid))?;
    let b = BlockField::from_phase(&v);
    let vals = b.weighted(w)?;
    mixed_norm(&BlockField::new(b.lattice, b.split, vals)?, spec)
}

/// Best `C` in `||f * g||_{M(w0,B)} <= C ||f||_{M(w1,B)} ||g||_{W^{r0,inf}_{(w2 v)}}`.
pub fn mod_conv_certificate(fs: &[Signal], gs: &[Signal], s: &ModSetup) -> Result<ConvCertificate> {
    let weight = split_weight_scan(&s.w[0], &s.w[1], &s.w[2], ConvBlock::Time, &s.scan)?;
    let r0 = s.backend.r0();
    let wiener = QbfSpec::new(r0, f64::INFINITY, Order::SecondInner, Weight::one(s.backend.weight.dim()))?;
    let gw = weight_product(&s.w[2], &s.v)?;
    let constant = max_ratio(fs, gs, |f, g| {
        let a = stft_norm(f, &s.w[1], &s.backend)?;
        let b = stft_norm(g, &gw, &wiener)?;
        if a == 0.0 || b == 0.0 {
            return Ok(None);
        }
        Ok(Some(stft_norm(&signal_convolve(f, g)?, &s.w[0], &s.backend)? / (a * b)))
    })?;
    Ok(ConvCertificate { supported: !weight.is_unbounded(), weight, constant })
}

/// Best `C` in `||f g||_{M(w0,B)} <= C ||f||_{M(w1,B)} ||g||_{M^{inf,r0}_{(w2 v)}}`.
pub fn mod_mult_certificate(fs: &[Signal], gs: &[Signal], s: &ModSetup) -> Result<ConvCertificate> {
    let weight = split_weight_scan(&s.w[0], &s.w[1], &s.w[2], ConvBlock::Freq, &s.scan)?;
    let r0 = s.backend.r0();
    let symbol = QbfSpec::new(f64::INFINITY, r0, Order::FirstInner, Weight::one(s.backend.weight.dim()))?;
    let gw = weight_product(&s.w[2], &s.v)?;
    let constant = max_ratio(fs, gs, |f, g| {
        let a = stft_norm(f, &s.w[1], &s.backend)?;
        let b = stft_norm(g, &gw, &symbol)?;
        if a == 0.0 || b == 0.0 {
            return Ok(None);
        }
        Ok(Some(stft_norm(&f.mul(g)?, &s.w[0], &s.backend)? / (a * b)))
    })?;
    Ok(ConvCertificate { supported: !weight.is_unbounded(), weight, constant })
}

/// Exponent pairs `(p_j, q_j)` and weights of a classical modulation space
/// convolution estimate.
#[derive(Debug, Clone)]
pub struct ClassicalSetup {
    pub pq: [(f64, f64); 3],
    pub w: [Weight; 3],
    pub scan: ScanBox,
}

/// Best `C` in `||f * g||_{M^{p0,q0}_{(w0)}} <= C ||f||_{M^{p1,q1}_{(w1)}} ||g||_{M^{p2,q2}_{(w2)}}`.
pub fn classical_conv_certificate(fs: &[Signal], gs: &[Signal], s: &ClassicalSetup) -> Result<ConvCertificate> {
    let [(p0, q0), (p1, q1), (p2, q2)] = s.pq;
    check_exponents(&[p0, q0, p1, q1, p2, q2], f64::MIN_POSITIVE)?;
    let dp = recip(p1) + recip(p2) - 1f64.max(recip(p1)).max(recip(p2)) - recip(p0);
    let dq = recip(q1) + recip(q2) - recip(q0);
    if dp.abs() > 1e-12 || dq.abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "exponents ({p0},{q0}), ({p1},{q1}), ({p2},{q2}) violate the Hoelder-Young relations"
        )));
    }
    let weight = split_weight_scan(&s.w[0], &s.w[1], &s.w[2], ConvBlock::Time, &s.scan)?;
    let one = Weight::one(s.w[0].dim());
    let spec = |p: f64, q: f64| QbfSpec::new(p, q, Order::FirstInner, one.clone());
    let (b0, b1, b2) = (spec(p0, q0)?, spec(p1, q1)?, spec(p2, q2)?);
    let constant = max_ratio(fs, gs, |f, g| {
        let a = stft_norm(f, &s.w[1], &b1)?;
        let b = stft_norm(g, &s.w[2], &b2)?;
        if a == 0.0 || b == 0.0 {
            return Ok(None);
        }
        Ok(Some(stft_norm(&signal_convolve(f, g)?, &s.w[0], &b0)? / (a * b)))
    })?;
    Ok(ConvCertificate { supported: !weight.is_unbounded(), weight, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian, make_grid, shifted_gaussian, Grid};
    use rand::{Rng, SeedableRng};

    fn rnd_field(g: &Grid, seed: u64) -> PhaseField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = g.len() * g.len();
        PhaseField::new(g.clone(), (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .unwrap()
    }

    // Nested loops over (x, xi) and the convolved variable, with explicit
    // bounds checks; block = Time.
    fn time_conv_oracle(f: &PhaseField, g: &PhaseField, theta: impl Fn(f64, f64, f64) -> f64) -> Vec<C64> {
        let n = f.time_grid.points_per_axis();
        let o = n / 2;
        let h = f.time_grid.step();
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..n {
                    let src = i as isize - j as isize + o as isize;
                    if !(0..n as isize).contains(&src) {
                        continue;
                    }
                    let ph = theta(
                        f.time_grid.axis_coord(0, i),
                        f.freq_grid.axis_coord(0, k),
                        f.time_grid.axis_coord(0, j),
                    );
                    s += f.values[src as usize * n + k] * g.values[j * n + k] * C64::from_polar(1.0, ph);
                }
                out[i * n + k] = s * h;
            }
        }
        out
    }

    #[test]
    fn zero_phase_matches_oracle_and_point_mass_is_identity() {
        let g = make_grid(1, 16, 0.5, &[0.0]).unwrap();
        let f = rnd_field(&g, 1);
        let gg = rnd_field(&g, 2);
        let got = theta_conv(&f, &gg, &PhaseKernel::Zero, ConvBlock::Time).unwrap();
        let want = time_conv_oracle(&f, &gg, |_, _, _| 0.0);
        for (a, b) in got.values.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut delta = PhaseField::zeros(&g);
        for k in 0..16 {
            delta.values[8 * 16 + k] = C64::new(1.0 / g.step(), 0.0);
        }
        let id = theta_conv(&f, &delta, &PhaseKernel::Zero, ConvBlock::Time).unwrap();
        assert!(id.max_abs_diff(&f) < 1e-12);
    }

    #[test]
    fn affine_and_general_routes_match_oracle() {
        let g = make_grid(1, 16, 0.5, &[0.0]).unwrap();
        let f = rnd_field(&g, 3);
        let gg = rnd_field(&g, 4);
        let th = |x: f64, y: f64, z: f64| 0.3 * x * y + 0.7 * y * z;
        let want = time_conv_oracle(&f, &gg, th);
        let aff = PhaseKernel::affine(|y| vec![0.7 * y[0]], |x, y| 0.3 * x[0] * y[0]);
        let gen = PhaseKernel::general(move |x, y, z| th(x[0], y[0], z[0]));
        for ker in [aff, gen] {
            let got = theta_conv(&f, &gg, &ker, ConvBlock::Time).unwrap();
            for (a, b) in got.values.iter().zip(&want) {
                assert!((a - b).norm() < 1e-12, "{ker:?}");
            }
        }
    }

    #[test]
    fn modulus_bound() {
        let g = make_grid(1, 16, 0.5, &[0.0]).unwrap();
        let f = rnd_field(&g, 5);
        let gg = rnd_field(&g, 6);
        let ker = PhaseKernel::general(|x, y, z| (x[0] * z[0]).sin() * 5.0 + y[0]);
        let a = theta_conv(&f, &gg, &ker, ConvBlock::Freq).unwrap();
        let b = theta_conv(&f.abs(), &gg.abs(), &PhaseKernel::Zero, ConvBlock::Freq).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(x.norm() <= y.re + 1e-12);
        }
    }

    #[test]
    fn twisted_forms_agree() {
        let g = make_grid(1, 16, 0.5, &[0.0]).unwrap();
        let f = rnd_field(&g, 7);
        let gg = rnd_field(&g, 8);
        let a = twisted_conv(&f, &gg).unwrap();
        let b = twisted_conv_kappa2(&f, &gg).unwrap();
        let scale = b.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(a.max_abs_diff(&b) <= 1e-10 * scale);
        // general-theta route over the whole phase space
        let ker = PhaseKernel::general(|x, _y, z| z[0] * (z[1] - x[1]));
        let c = theta_conv(&f, &gg, &ker, ConvBlock::All).unwrap().map(|v| v / (2.0 * PI).sqrt());
        assert!(a.max_abs_diff(&c) <= 1e-10 * scale);
        let lam = C64::new(2.0, -1.0);
        let al = twisted_conv(&f.map(|v| v * lam), &gg).unwrap();
        assert!(al.max_abs_diff(&a.map(|v| v * lam)) <= 1e-12 * scale);
    }

    #[test]
    fn stft_identities_for_gaussians() {
        let g = make_grid(1, 128, 0.25, &[0.0]).unwrap();
        let phi = gaussian(&g);
        assert!(conv_identity_defect(&phi, &phi, &phi, &phi).unwrap() <= 1e-6);
        assert!(mult_identity_defect(&phi, &phi, &phi, &phi).unwrap() <= 1e-6);
        let f = shifted_gaussian(&g, &[1.0], &[0.5]);
        let h = shifted_gaussian(&g, &[-2.0], &[-1.0]);
        assert!(conv_identity_defect(&f, &h, &phi, &phi).unwrap() <= 1e-6);
        assert!(mult_identity_defect(&f, &h, &phi, &phi).unwrap() <= 1e-6);
        let z = Signal::zeros(&g);
        assert_eq!(conv_identity_defect(&f, &z, &phi, &phi).unwrap(), 0.0);
    }

    fn young_setup(p: [f64; 3]) -> YoungSetup {
        YoungSetup {
            p,
            w: [Weight::one(2), Weight::one(2), Weight::one(2)],
            v: Weight::one(2),
            backend: QbfSpec::lebesgue(0.5, 0.5, 2).unwrap(),
            sides: (1.0, 1.0),
            kernel: PhaseKernel::Zero,
            scan: ScanBox::new(3, 2.0, 4).unwrap(),
        }
    }

    #[test]
    fn young_certificate_with_point_mass() {
        let g = make_grid(1, 32, 0.25, &[0.0]).unwrap();
        let fs: Vec<PhaseField> = (0..3).map(|s| rnd_field(&g, 40 + s)).collect();
        let h = g.step();
        let delta = PhaseField::from_fn(&g, |x, _| C64::new(if x[0] == 0.0 { 1.0 / h } else { 0.0 }, 0.0));
        let c = wiener_young_certificate(&fs, &[delta], &young_setup([1.0, 1.0, 1.0])).unwrap();
        assert!((c.constant - 1.0).abs() < 1e-12, "{}", c.constant);
        assert!(c.supported && (c.weight.constant - 1.0).abs() < 1e-15);
        assert!(matches!(
            wiener_young_certificate(&fs, &fs, &young_setup([1.0, 2.0, 1.0])),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            wiener_young_certificate(&fs, &fs, &young_setup([0.5, 1.0, 1.0])),
            Err(Error::InvalidExponent(_))
        ));
    }

    fn mod_setup() -> ModSetup {
        ModSetup {
            w: [Weight::one(2), Weight::one(2), Weight::one(2)],
            v: Weight::one(2),
            backend: QbfSpec::lebesgue(2.0, 1.0, 2).unwrap(),
            scan: ScanBox::new(3, 2.0, 4).unwrap(),
        }
    }

    #[test]
    fn modulation_certificates_scale_invariant() {
        let g = make_grid(1, 128, 0.25, &[0.0]).unwrap();
        let fs = vec![gaussian(&g), shifted_gaussian(&g, &[1.0], &[-1.0])];
        let gs = vec![shifted_gaussian(&g, &[-0.5], &[0.5])];
        let s = mod_setup();
        for cert in [mod_conv_certificate, mod_mult_certificate] {
            let a = cert(&fs, &gs, &s).unwrap();
            let gs2: Vec<Signal> = gs.iter().map(|g| g.scale(C64::new(0.0, 4.0))).collect();
            let b = cert(&fs, &gs2, &s).unwrap();
            assert!(a.constant.is_finite() && a.constant > 0.0);
            assert!((a.constant - b.constant).abs() <= 1e-12 * a.constant);
        }
    }

    #[test]
    fn mod_conv_with_discrete_delta() {
        let g = make_grid(1, 128, 0.25, &[0.0]).unwrap();
        let f = shifted_gaussian(&g, &[1.0], &[2.0]);
        let h = g.step();
        let delta = Signal::from_fn(&g, |x| C64::new(if x[0] == 0.0 { 1.0 / h } else { 0.0 }, 0.0));
        assert!(signal_convolve(&f, &delta).unwrap().rel_distance(&f) < 1e-12);
        let s = mod_setup();
        let c = mod_conv_certificate(&[f], std::slice::from_ref(&delta), &s).unwrap();
        let r0 = 1.0;
        let wn = stft_norm(&delta, &Weight::one(2), &QbfSpec::new(r0, f64::INFINITY, Order::SecondInner, Weight::one(2)).unwrap()).unwrap();
        assert!((c.constant * wn - 1.0).abs() < 1e-10, "{}", c.constant * wn);
    }

    #[test]
    fn classical_certificate_guards_exponents() {
        let g = make_grid(1, 128, 0.25, &[0.0]).unwrap();
        let fs = vec![gaussian(&g)];
        let gs = vec![shifted_gaussian(&g, &[1.0], &[0.0])];
        let mk = |pq| ClassicalSetup { pq, w: [Weight::one(2), Weight::one(2), Weight::one(2)], scan: ScanBox::new(3, 2.0, 4).unwrap() };
        let c = classical_conv_certificate(&fs, &gs, &mk([(1.0, 1.0), (1.0, 1.0), (1.0, f64::INFINITY)])).unwrap();
        assert!(c.constant.is_finite() && c.constant > 0.0);
        assert!(matches!(
            classical_conv_certificate(&fs, &gs, &mk([(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn split_weight_scan_detects_growth() {
        let bx = ScanBox::new(3, 2.0, 4).unwrap();
        let p = crate::weights::polynomial_weight(1.0, 2);
        let one = Weight::one(2);
        // <X> is moderate with respect to itself
        let ok = split_weight_scan(&p, &p, &p, ConvBlock::Time, &bx).unwrap();
        assert!(!ok.is_unbounded());
        // w0 = <X>, w1 = w2 = 1: unbounded
        let bad = split_weight_scan(&p, &one, &one, ConvBlock::Freq, &bx).unwrap();
        assert!(bad.doubled_constant > 1.5 * bad.constant);
    }
}

