//! Quasi-norm backends: weighted mixed Lebesgue norms, their sequence-space
//! counterparts, and Wiener amalgam norms built from local norms on cells.
//!
//! Norms act on nonnegative samples over a product lattice split into a
//! first block (`split` leading axes) and a second block. Integrals are
//! Riemann sums with the per-axis steps as weights.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PhaseField;
use crate::lattice::{Axis, Lattice};
use crate::weights::{parse_weight, Weight};

/// Which block is integrated first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// `L^{p,q}`: inner `L^p` over the first block, outer `L^q`.
    FirstInner,
    /// `L^{p,q}_*`: inner `L^q` over the second block, outer `L^p`.
    SecondInner,
}

/// Weighted mixed Lebesgue backend `L^{p,q}_{(w)}` or its starred variant.
#[derive(Debug, Clone, PartialEq)]
pub struct QbfSpec {
    pub p: f64,
    pub q: f64,
    pub order: Order,
    pub weight: Weight,
}

fn check_exponent(p: f64) -> Result<()> {
    if p > 0.0 && !p.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

impl QbfSpec {
    pub fn new(p: f64, q: f64, order: Order, weight: Weight) -> Result<QbfSpec> {
        check_exponent(p)?;
        check_exponent(q)?;
        Ok(QbfSpec { p, q, order, weight })
    }

    /// Unweighted `L^{p,q}` on `R^dim`.
    pub fn lebesgue(p: f64, q: f64, dim: usize) -> Result<QbfSpec> {
        QbfSpec::new(p, q, Order::FirstInner, Weight::one(dim))
    }

    pub fn with_weight(&self, weight: Weight) -> QbfSpec {
        QbfSpec { weight, ..self.clone() }
    }

    /// Order of the quasi-norm, `min(1, p, q)`.
    pub fn r0(&self) -> f64 {
        1f64.min(self.p).min(self.q)
    }

    /// Submultiplicative weight governing translations.
    pub fn v0(&self) -> Weight {
        self.weight.moderator().unwrap_or_else(|| Weight::one(self.weight.dim()))
    }

    /// Banach backend `B_0` with `||F|| = || |F|^{r0} ||_{B_0}^{1/r0}`.
    pub fn witness(&self) -> QbfSpec {
        let r0 = self.r0();
        QbfSpec {
            p: self.p / r0,
            q: self.q / r0,
            order: self.order,
            weight: self.weight.powf(r0),
        }
    }
}

/// Nonnegative samples on a product lattice with a block split.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockField {
    pub lattice: Lattice,
    pub split: usize,
    pub values: Vec<f64>,
}

impl BlockField {
    pub fn new(lattice: Lattice, split: usize, values: Vec<f64>) -> Result<BlockField> {
        if values.len() != lattice.len() {
            return Err(Error::DimensionMismatch { expected: lattice.len(), got: values.len() });
        }
        if split > lattice.dim() {
            return Err(Error::InvalidPartition(format!("split {split} exceeds dimension {}", lattice.dim())));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Precondition("block field values must be finite and nonnegative".into()));
        }
        Ok(BlockField { lattice, split, values })
    }

    pub fn from_complex(lattice: Lattice, split: usize, values: &[Complex64]) -> Result<BlockField> {
        BlockField::new(lattice, split, values.iter().map(|v| v.norm()).collect())
    }

    /// `|F|` with the time block first.
    pub fn from_phase(f: &PhaseField) -> BlockField {
        BlockField {
            lattice: f.lattice(),
            split: f.dim(),
            values: f.values.iter().map(|v| v.norm()).collect(),
        }
    }

    pub fn zeros_like(&self) -> BlockField {
        BlockField { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BlockField {
        BlockField { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    fn block_lens(&self) -> (usize, usize) {
        let n1: usize = self.lattice.axes()[..self.split].iter().map(|a| a.n).product();
        (n1, self.lattice.len() / n1.max(1))
    }

    fn block_steps(&self) -> (f64, f64) {
        let axes = self.lattice.axes();
        (
            axes[..self.split].iter().map(|a| a.step).product(),
            axes[self.split..].iter().map(|a| a.step).product(),
        )
    }

    /// `|F| w` at every sample.
    pub fn weighted(&self, w: &Weight) -> Result<Vec<f64>> {
        if w.dim() != self.lattice.dim() {
            return Err(Error::DimensionMismatch { expected: self.lattice.dim(), got: w.dim() });
        }
        if w.is_trivial() {
            return Ok(self.values.clone());
        }
        let lat = &self.lattice;
        Ok(self
            .values
            .par_iter()
            .enumerate()
            .map(|(i, v)| {
                let c = lat.coords_vec(i);
                v * w.eval(&c)
            })
            .collect())
    }
}

/// Running `L^p` accumulator: power sum, or max for `p = inf`.
#[derive(Clone, Copy)]
struct Acc {
    p: f64,
    s: f64,
}

impl Acc {
    fn new(p: f64) -> Acc {
        Acc { p, s: 0.0 }
    }

    /// Add a value with quadrature weight `w`.
    fn add(&mut self, v: f64, w: f64) {
        if self.p.is_infinite() {
            self.s = self.s.max(v);
        } else if v > 0.0 {
            self.s += v.powf(self.p) * w;
        }
    }

    fn finish(self) -> f64 {
        if self.p.is_infinite() || self.s == 0.0 {
            self.s
        } else {
            self.s.powf(1.0 / self.p)
        }
    }
}

/// Two-stage norm of a `n1 x n2` array (first-block index major) with
/// cells: `cell1[i1]`, `cell2[i2]` map samples to cell ids. Returns the
/// `c1 x c2` array of local norms.
#[allow(clippy::too_many_arguments)]
fn two_stage(
    vals: &[f64],
    (n1, n2): (usize, usize),
    (cell1, c1): (&[usize], usize),
    (cell2, c2): (&[usize], usize),
    (p1, p2): (f64, f64),
    (w1, w2): (f64, f64),
    order: Order,
) -> Vec<f64> {
    match order {
        Order::FirstInner => {
            // inner over block 1 for every (cell1, i2)
            let mut inner = vec![Acc::new(p1); c1 * n2];
            for i1 in 0..n1 {
                let base = cell1[i1] * n2;
                let row = &vals[i1 * n2..(i1 + 1) * n2];
                for (i2, v) in row.iter().enumerate() {
                    inner[base + i2].add(*v, w1);
                }
            }
            let mut outer = vec![Acc::new(p2); c1 * c2];
            for a in 0..c1 {
                for i2 in 0..n2 {
                    outer[a * c2 + cell2[i2]].add(inner[a * n2 + i2].finish(), w2);
                }
            }
            outer.into_iter().map(Acc::finish).collect()
        }
        Order::SecondInner => {
            let mut inner = vec![Acc::new(p2); n1 * c2];
            for i1 in 0..n1 {
                let row = &vals[i1 * n2..(i1 + 1) * n2];
                for (i2, v) in row.iter().enumerate() {
                    inner[i1 * c2 + cell2[i2]].add(*v, w2);
                }
            }
            let mut outer = vec![Acc::new(p1); c1 * c2];
            for i1 in 0..n1 {
                for b in 0..c2 {
                    outer[cell1[i1] * c2 + b].add(inner[i1 * c2 + b].finish(), w1);
                }
            }
            outer.into_iter().map(Acc::finish).collect()
        }
    }
}

/// `||F||_{L^{p,q}_{(w)}}` (or the starred order) by quadrature.
pub fn mixed_norm(f: &BlockField, spec: &QbfSpec) -> Result<f64> {
    let vals = f.weighted(&spec.weight)?;
    let (n1, n2) = f.block_lens();
    let z1 = vec![0usize; n1];
    let z2 = vec![0usize; n2];
    Ok(two_stage(&vals, (n1, n2), (&z1, 1), (&z2, 1), (spec.p, spec.q), f.block_steps(), spec.order)[0])
}

/// Mixed norm of `|F|` for a phase field, `x` the first block.
pub fn mixed_norm_field(f: &PhaseField, spec: &QbfSpec) -> Result<f64> {
    mixed_norm(&BlockField::from_phase(f), spec)
}

/// `||a||_{l_B}` for a sequence indexed by the lattice of cell anchors. Each
/// index carries the measure of its cell (the lattice steps), so the value
/// equals the backend norm of the step function `sum a(j) chi_{j + cell}`
/// whenever the weight is constant on cells; the weight is sampled at the
/// anchors. Unit steps give the plain `l^{p,q}_{(w)}` norm.
pub fn seq_norm(a: &BlockField, spec: &QbfSpec) -> Result<f64> {
    mixed_norm(a, spec)
}

/// Partition of a product lattice into aligned cells of `k[axis]` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub samples_per_cell: Vec<usize>,
    /// Physical side per block as actually used.
    pub sides: (f64, f64),
}

/// Largest `k | n` with `k * step <= side`; rejects sides below one step.
fn snap(n: usize, step: f64, side: f64) -> Result<usize> {
    let kmax = (side / step * (1.0 + 1e-9)).floor() as usize;
    if kmax == 0 {
        return Err(Error::InvalidPartition(format!("cell side {side} is smaller than the grid step {step}")));
    }
    Ok((1..=kmax.min(n)).rev().find(|k| n.is_multiple_of(*k)).unwrap_or(1))
}

impl Partition {
    /// Cells with the requested physical side per block, each side snapped
    /// down to the largest multiple of the axis step that tiles the axis.
    /// The first block's side is shared by all of its axes (likewise for
    /// the second), taking the smallest snapped side across the block.
    pub fn new(lattice: &Lattice, split: usize, sides: (f64, f64)) -> Result<Partition> {
        let mut k = Vec::with_capacity(lattice.dim());
        let mut used = (f64::INFINITY, f64::INFINITY);
        for (i, a) in lattice.axes().iter().enumerate() {
            let side = if i < split { sides.0 } else { sides.1 };
            let kk = snap(a.n, a.step, side)?;
            k.push(kk);
            let s = kk as f64 * a.step;
            if i < split {
                used.0 = used.0.min(s);
            } else {
                used.1 = used.1.min(s);
            }
        }
        Ok(Partition { samples_per_cell: k, sides: used })
    }

    /// Partition with explicit sample counts per axis.
    pub fn exact(lattice: &Lattice, samples_per_cell: Vec<usize>) -> Result<Partition> {
        if samples_per_cell.len() != lattice.dim() {
            return Err(Error::DimensionMismatch { expected: lattice.dim(), got: samples_per_cell.len() });
        }
        for (a, &k) in lattice.axes().iter().zip(&samples_per_cell) {
            if k == 0 || a.n % k != 0 {
                return Err(Error::InvalidPartition(format!("{k} samples per cell do not tile an axis of {}", a.n)));
            }
        }
        let s: Vec<f64> = lattice.axes().iter().zip(&samples_per_cell).map(|(a, &k)| k as f64 * a.step).collect();
        Ok(Partition { samples_per_cell, sides: (s[0], *s.last().unwrap_or(&s[0])) })
    }

    /// Lattice of cell anchors: one point per cell at its lower corner.
    pub fn cell_lattice(&self, lattice: &Lattice) -> Lattice {
        Lattice::new(
            lattice
                .axes()
                .iter()
                .zip(&self.samples_per_cell)
                .map(|(a, &k)| Axis::new(a.n / k, a.step * k as f64, a.offset))
                .collect(),
        )
    }
}

/// Wiener amalgam quasi-norm `W^{r1,r2}(w, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerSpec {
    pub r1: f64,
    pub r2: f64,
    /// Local norm order (`SecondInner` gives the starred amalgam).
    pub local_order: Order,
    /// Requested cell side per block.
    pub sides: (f64, f64),
    pub weight: Weight,
    /// Global backend, applied to the sequence of local norms.
    pub seq: QbfSpec,
}

impl WienerSpec {
    pub fn new(r1: f64, r2: f64, sides: (f64, f64), weight: Weight, seq: QbfSpec) -> Result<WienerSpec> {
        check_exponent(r1)?;
        check_exponent(r2)?;
        if weight.dim() != seq.weight.dim() {
            return Err(Error::DimensionMismatch { expected: weight.dim(), got: seq.weight.dim() });
        }
        Ok(WienerSpec { r1, r2, local_order: Order::FirstInner, sides, weight, seq })
    }

    pub fn with_r(&self, r1: f64, r2: f64) -> WienerSpec {
        WienerSpec { r1, r2, ..self.clone() }
    }
}

/// Cell id per first-block and second-block flat index.
fn cell_maps(lattice: &Lattice, split: usize, k: &[usize]) -> ((Vec<usize>, usize), (Vec<usize>, usize)) {
    let block = |axes: &[Axis], ks: &[usize]| -> (Vec<usize>, usize) {
        let shape: Vec<usize> = axes.iter().map(|a| a.n).collect();
        let cshape: Vec<usize> = axes.iter().zip(ks).map(|(a, &k)| a.n / k).collect();
        let len: usize = shape.iter().product();
        let clen: usize = cshape.iter().product();
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let mut rem = i;
            let mut multi = vec![0usize; shape.len()];
            for a in (0..shape.len()).rev() {
                multi[a] = rem % shape[a];
                rem /= shape[a];
            }
            let mut c = 0;
            for a in 0..shape.len() {
                c = c * cshape[a] + multi[a] / ks[a];
            }
            out.push(c);
        }
        (out, clen)
    };
    let axes = lattice.axes();
    (block(&axes[..split], &k[..split]), block(&axes[split..], &k[split..]))
}

/// Local norms `a(j) = ||F w||_{L^{r1,r2}(j + cell)}` on the cell lattice.
pub fn local_norms(f: &BlockField, wspec: &WienerSpec, partition: &Partition) -> Result<BlockField> {
    let vals = f.weighted(&wspec.weight)?;
    let ((m1, c1), (m2, c2)) = cell_maps(&f.lattice, f.split, &partition.samples_per_cell);
    let a = two_stage(
        &vals,
        f.block_lens(),
        (&m1, c1),
        (&m2, c2),
        (wspec.r1, wspec.r2),
        f.block_steps(),
        wspec.local_order,
    );
    BlockField::new(partition.cell_lattice(&f.lattice), f.split, a)
}

/// `||F||_{W^{r1,r2}(w, B)}` over the aligned partition of `wspec.sides`.
pub fn wiener_norm(f: &BlockField, wspec: &WienerSpec) -> Result<f64> {
    let part = Partition::new(&f.lattice, f.split, wspec.sides)?;
    wiener_norm_with(f, wspec, &part)
}

pub fn wiener_norm_with(f: &BlockField, wspec: &WienerSpec, partition: &Partition) -> Result<f64> {
    seq_norm(&local_norms(f, wspec, partition)?, &wspec.seq)
}

/// Amalgam norm over a general cover: anchors on a lattice of spacing
/// `lattice_scale` and cells `j + Omega` with `Omega` a cube of side
/// `omega_side >= lattice_scale` (both per block and snapped to the grid).
/// Evaluates `|| sum_j a(j) chi_{j + Omega} ||_B` on the sample grid, with the
/// backend weight taken at the anchor of the tile containing each sample.
pub fn wiener_norm_lattice(
    f: &BlockField,
    wspec: &WienerSpec,
    lattice_scale: (f64, f64),
    omega_side: (f64, f64),
) -> Result<f64> {
    let lat = &f.lattice;
    let dim = lat.dim();
    let tiles = Partition::new(lat, f.split, lattice_scale)?;
    let kl = &tiles.samples_per_cell;
    let ko: Vec<usize> = lat
        .axes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let side = if i < f.split { omega_side.0 } else { omega_side.1 };
            let k = (side / a.step * (1.0 + 1e-9)).floor() as usize;
            if k < kl[i] {
                Err(Error::InvalidPartition(format!("cover cell side {side} is smaller than the lattice spacing")))
            } else {
                Ok(k)
            }
        })
        .collect::<Result<_>>()?;
    let vals = f.weighted(&wspec.weight)?;
    let anchors = tiles.cell_lattice(lat);
    let shape = lat.shape();
    let (s1, s2) = f.block_steps();
    // local norm over the (edge-truncated) box [anchor, anchor + ko)
    let local = |ai: usize| -> f64 {
        let mut am = vec![0usize; dim];
        anchors.unravel(ai, &mut am);
        let lo: Vec<usize> = am.iter().zip(kl).map(|(&a, &k)| a * k).collect();
        let hi: Vec<usize> = lo.iter().zip(&ko).zip(&shape).map(|((&l, &k), &n)| (l + k).min(n)).collect();
        let ext1: Vec<usize> = (0..f.split).map(|a| hi[a] - lo[a]).collect();
        let ext2: Vec<usize> = (f.split..dim).map(|a| hi[a] - lo[a]).collect();
        let n1: usize = ext1.iter().product();
        let n2: usize = ext2.iter().product();
        let mut sub = Vec::with_capacity(n1 * n2);
        let mut multi = vec![0usize; dim];
        for t in 0..n1 * n2 {
            let mut rem = t;
            for a in (0..dim).rev() {
                let e = hi[a] - lo[a];
                multi[a] = lo[a] + rem % e;
                rem /= e;
            }
            sub.push(vals[lat.ravel(&multi)]);
        }
        let z1 = vec![0usize; n1];
        let z2 = vec![0usize; n2];
        two_stage(&sub, (n1, n2), (&z1, 1), (&z2, 1), (wspec.r1, wspec.r2), (s1, s2), wspec.local_order)[0]
    };
    let a: Vec<f64> = (0..anchors.len()).into_par_iter().map(local).collect();
    // step function on the sample grid, weighted at tile anchors
    let seq_w = &wspec.seq.weight;
    let mut g = vec![0.0; lat.len()];
    let mut multi = vec![0usize; dim];
    for (ai, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let mut am = vec![0usize; dim];
        anchors.unravel(ai, &mut am);
        let lo: Vec<usize> = am.iter().zip(kl).map(|(&a, &k)| a * k).collect();
        let ext: Vec<usize> = lo.iter().zip(&ko).zip(&shape).map(|((&l, &k), &n)| (l + k).min(n) - l).collect();
        let count: usize = ext.iter().product();
        for t in 0..count {
            let mut rem = t;
            for k in (0..dim).rev() {
                multi[k] = lo[k] + rem % ext[k];
                rem /= ext[k];
            }
            g[lat.ravel(&multi)] += av;
        }
    }
    if !seq_w.is_trivial() {
        for (i, v) in g.iter_mut().enumerate() {
            lat.unravel(i, &mut multi);
            let tile: Vec<usize> = multi.iter().zip(kl).map(|(&m, &k)| m / k).collect();
            *v *= seq_w.eval(&anchors.coords_vec(anchors.ravel(&tile)));
        }
    }
    let step = BlockField::new(lat.clone(), f.split, g)?;
    mixed_norm(&step, &wspec.seq.with_weight(Weight::one(dim)))
}

/// Best constants in `||F||_{W^{r0}} <= lower ||F||_{B(w)}` and
/// `||F||_{B(w)} <= upper ||F||_{W^inf}` over an ensemble. The amalgams use
/// the backend's weight locally and the unweighted backend globally.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichConstants {
    pub lower: f64,
    pub upper: f64,
}

pub fn sandwich_constants(ensemble: &[BlockField], backend: &QbfSpec, sides: (f64, f64)) -> Result<SandwichConstants> {
    let dim = backend.weight.dim();
    let seq = backend.with_weight(Weight::one(dim));
    let r0 = backend.r0();
    let w_low = WienerSpec::new(r0, r0, sides, backend.weight.clone(), seq.clone())?;
    let w_high = w_low.with_r(f64::INFINITY, f64::INFINITY);
    let mut out = SandwichConstants { lower: 0.0, upper: 0.0 };
    for f in ensemble {
        let b = mixed_norm(f, backend)?;
        if b == 0.0 {
            continue;
        }
        out.lower = out.lower.max(wiener_norm(f, &w_low)? / b);
        out.upper = out.upper.max(b / wiener_norm(f, &w_high)?);
    }
    Ok(out)
}

/// Discrete convolution with zero fill on an integer box with the origin
/// on the lattice: `(a * b)(k) = sum_j a(k - j) b(j)`.
pub fn discrete_convolve(a: &BlockField, b: &BlockField) -> Result<BlockField> {
    if !a.lattice.approx_eq(&b.lattice, 1e-12) {
        return Err(Error::GridMismatch("sequences live on different boxes".into()));
    }
    let lat = &a.lattice;
    let origin = lat
        .origin()
        .ok_or_else(|| Error::InvalidGrid("the origin must be a lattice point".into()))?;
    let dim = lat.dim();
    let vals: Vec<f64> = (0..lat.len())
        .into_par_iter()
        .map(|k| {
            let mut mk = vec![0usize; dim];
            let mut mj = vec![0usize; dim];
            let mut delta = vec![0isize; dim];
            lat.unravel(k, &mut mk);
            let mut s = 0.0;
            for j in 0..lat.len() {
                if b.values[j] == 0.0 {
                    continue;
                }
                lat.unravel(j, &mut mj);
                for t in 0..dim {
                    delta[t] = origin[t] as isize - mj[t] as isize;
                }
                if let Some(src) = lat.offset_index(&mk, &delta) {
                    s += a.values[src] * b.values[j];
                }
            }
            s
        })
        .collect();
    BlockField::new(lat.clone(), a.split, vals)
}

/// Best constant in `||a * b||_{l_B} <= C ||a||_{l^{r0}_{(v0)}} ||b||_{l_B}`
/// over all pairs from the two ensembles.
pub fn discrete_conv_bound(a_ens: &[BlockField], b_ens: &[BlockField], spec: &QbfSpec) -> Result<f64> {
    let r0 = spec.r0();
    let small = QbfSpec::new(r0, r0, Order::FirstInner, spec.v0())?;
    let mut best: f64 = 0.0;
    for a in a_ens {
        let na = seq_norm(a, &small)?;
        for b in b_ens {
            let nb = seq_norm(b, spec)?;
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            best = best.max(seq_norm(&discrete_convolve(a, b)?, spec)? / (na * nb));
        }
    }
    Ok(best)
}

const QBF_KEYS: &[&str] = &["p", "q", "w"];
const WIENER_KEYS: &[&str] = &["r1", "r2", "r", "side", "side1", "side2", "w", "local", "seq"];

/// Split `body` at top-level commas that start a known `key=`; the value of
/// `last` (if present) runs to the end of the string.
pub(crate) fn split_keyed<'a>(body: &'a str, keys: &[&str], last: Option<&str>) -> Result<Vec<(&'a str, &'a str)>> {
    let mut out = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (k, v) = rest
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value in {body:?}")))?;
        let k = k.trim();
        if !keys.contains(&k) {
            return Err(Error::Parse(format!("unknown key {k:?} in {body:?}")));
        }
        if Some(k) == last {
            out.push((k, v.trim()));
            break;
        }
        let mut depth = 0i32;
        let mut end = v.len();
        for (i, c) in v.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    let tail = &v[i + 1..];
                    if let Some((nk, _)) = tail.split_once('=') {
                        if keys.contains(&nk.trim()) {
                            end = i;
                            break;
                        }
                    }
                }
                _ => {}
            }
        }
        out.push((k, v[..end].trim()));
        rest = if end < v.len() { &v[end + 1..] } else { "" };
    }
    Ok(out)
}

pub(crate) fn parse_exponent(s: &str) -> Result<f64> {
    let v = match s.trim() {
        "inf" | "Inf" | "infinity" => f64::INFINITY,
        t => t.parse::<f64>().map_err(|_| Error::Parse(format!("bad exponent {t:?}")))?,
    };
    check_exponent(v)?;
    Ok(v)
}

/// Parse `Lpq:p=2,q=1,w=poly:s=1` (or `Lpq*:` for the starred order, `Lp:p=2`)
/// on `R^dim`.
pub fn parse_qbf(spec: &str, dim: usize) -> Result<QbfSpec> {
    let (head, body) = spec.trim().split_once(':').unwrap_or((spec.trim(), ""));
    let order = match head {
        "Lpq" | "Lp" => Order::FirstInner,
        "Lpq*" => Order::SecondInner,
        _ => return Err(Error::Parse(format!("unknown backend {head:?}"))),
    };
    let (mut p, mut q, mut w) = (None, None, Weight::one(dim));
    for (k, v) in split_keyed(body, QBF_KEYS, None)? {
        match k {
            "p" => p = Some(parse_exponent(v)?),
            "q" => q = Some(parse_exponent(v)?),
            _ => w = parse_weight(v, dim)?,
        }
    }
    let p = p.ok_or_else(|| Error::Parse(format!("backend {spec:?} needs p")))?;
    let q = if head == "Lp" { p } else { q.ok_or_else(|| Error::Parse(format!("backend {spec:?} needs q")))? };
    QbfSpec::new(p, q, order, w)
}

/// Parse `wiener:r1=0.5,r2=0.5,side=1.0,w=poly:s=1,seq=Lpq:p=2,q=2`;
/// `seq` must come last.
pub fn parse_wiener(spec: &str, dim: usize) -> Result<WienerSpec> {
    let body = spec
        .trim()
        .strip_prefix("wiener:")
        .ok_or_else(|| Error::Parse(format!("expected wiener:..., got {spec:?}")))?;
    let (mut r1, mut r2) = (None, None);
    let (mut s1, mut s2) = (1.0, 1.0);
    let mut w = Weight::one(dim);
    let mut seq = None;
    let mut order = Order::FirstInner;
    for (k, v) in split_keyed(body, WIENER_KEYS, Some("seq"))? {
        let num = || v.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {v:?}")));
        match k {
            "r" => {
                r1 = Some(parse_exponent(v)?);
                r2 = r1;
            }
            "r1" => r1 = Some(parse_exponent(v)?),
            "r2" => r2 = Some(parse_exponent(v)?),
            "side" => {
                s1 = num()?;
                s2 = s1;
            }
            "side1" => s1 = num()?,
            "side2" => s2 = num()?,
            "w" => w = parse_weight(v, dim)?,
            "local" => {
                order = match v {
                    "std" => Order::FirstInner,
                    "star" => Order::SecondInner,
                    _ => return Err(Error::Parse(format!("local order must be std or star, got {v:?}"))),
                }
            }
            _ => seq = Some(parse_qbf(v, dim)?),
        }
    }
    let r1 = r1.ok_or_else(|| Error::Parse("wiener spec needs r1".into()))?;
    let r2 = r2.unwrap_or(r1);
    let seq = seq.unwrap_or(QbfSpec::lebesgue(2.0, 2.0, dim)?);
    let mut ws = WienerSpec::new(r1, r2, (s1, s2), w, seq)?;
    ws.local_order = order;
    Ok(ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::polynomial_weight;
    use rand::{Rng, SeedableRng};

    fn lat2(n1: usize, h1: f64, n2: usize, h2: f64) -> Lattice {
        Lattice::new(vec![Axis::centered(n1, h1, 0.0), Axis::centered(n2, h2, 0.0)])
    }

    fn rnd(lat: &Lattice, seed: u64) -> BlockField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        BlockField::new(lat.clone(), 1, (0..lat.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    fn indicator(lat: &Lattice, pred: impl Fn(&[f64]) -> bool) -> BlockField {
        let vals = (0..lat.len()).map(|i| if pred(&lat.coords_vec(i)) { 1.0 } else { 0.0 }).collect();
        BlockField::new(lat.clone(), 1, vals).unwrap()
    }

    // nested loops over explicit coordinates
    fn mixed_oracle(f: &BlockField, p: f64, q: f64, w: &Weight) -> f64 {
        let a0 = f.lattice.axis(0);
        let a1 = f.lattice.axis(1);
        let mut outer = 0.0;
        for k in 0..a1.n {
            let mut inner = 0.0;
            for j in 0..a0.n {
                let v = f.values[j * a1.n + k] * w.eval(&[a0.coord(j), a1.coord(k)]);
                inner += v.powf(p) * a0.step;
            }
            outer += inner.powf(q / p) * a1.step;
        }
        outer.powf(1.0 / q)
    }

    #[test]
    fn unit_cube_indicator_has_norm_one() {
        let lat = lat2(16, 0.25, 16, 0.25);
        let f = indicator(&lat, |x| (0.0..1.0).contains(&x[0]) && (0.0..1.0).contains(&x[1]));
        for (p, q) in [(1.0, 1.0), (2.0, 1.0), (0.5, 0.5), (f64::INFINITY, 2.0), (3.0, f64::INFINITY)] {
            let n = mixed_norm(&f, &QbfSpec::lebesgue(p, q, 2).unwrap()).unwrap();
            assert!((n - 1.0).abs() < 1e-12, "({p},{q}) -> {n}");
        }
        let two = indicator(&lat, |x| {
            (0.0..1.0).contains(&x[0]) && ((0.0..1.0).contains(&x[1]) || (-2.0..-1.0).contains(&x[1]))
        });
        let n = mixed_norm(&two, &QbfSpec::lebesgue(2.0, 2.0, 2).unwrap()).unwrap();
        assert!((n - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mixed_norm_matches_oracle() {
        let lat = lat2(8, 0.5, 8, 0.3);
        let f = rnd(&lat, 1);
        let w = polynomial_weight(1.0, 2);
        let spec = QbfSpec::new(0.5, 1.0, Order::FirstInner, w.clone()).unwrap();
        let got = mixed_norm(&f, &spec).unwrap();
        let want = mixed_oracle(&f, 0.5, 1.0, &w);
        assert!((got - want).abs() <= 1e-12 * want);
        // starred order = standard order of the transposed field
        let star = QbfSpec::new(0.5, 1.5, Order::SecondInner, Weight::one(2)).unwrap();
        let mut t = vec![0.0; 64];
        for i in 0..8 {
            for k in 0..8 {
                t[k * 8 + i] = f.values[i * 8 + k];
            }
        }
        let ft = BlockField::new(Lattice::new(vec![lat.axis(1).clone(), lat.axis(0).clone()]), 1, t).unwrap();
        let want = mixed_oracle(&ft, 1.5, 0.5, &Weight::one(2));
        assert!((mixed_norm(&f, &star).unwrap() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn nonpositive_exponents_rejected() {
        assert!(matches!(QbfSpec::lebesgue(0.0, 1.0, 2), Err(Error::InvalidExponent(_))));
        assert!(matches!(QbfSpec::lebesgue(1.0, -2.0, 2), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn seq_norm_examples() {
        let ulat = Lattice::new(vec![Axis::centered(4, 1.0, 0.0), Axis::centered(4, 1.0, 0.0)]);
        let mut a = BlockField::new(ulat.clone(), 1, vec![0.0; 16]).unwrap();
        a.values[2 * 4 + 2] = 1.0;
        assert_eq!(seq_norm(&a, &QbfSpec::lebesgue(2.0, 3.0, 2).unwrap()).unwrap(), 1.0);
        // same inner row: equal second index
        let mut b = BlockField::new(ulat, 1, vec![0.0; 16]).unwrap();
        b.values[2] = 1.0;
        b.values[4 + 2] = 1.0;
        assert!((seq_norm(&b, &QbfSpec::lebesgue(1.0, 0.5, 2).unwrap()).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn seq_norm_equals_step_function_norm() {
        let fine = lat2(16, 0.25, 16, 0.25);
        let part = Partition::exact(&fine, vec![4, 4]).unwrap();
        let cells = part.cell_lattice(&fine);
        let a = {
            let mut r = rnd(&cells, 3);
            r.split = 1;
            r
        };
        let mut step = vec![0.0; fine.len()];
        let mut m = vec![0usize; 2];
        for (i, v) in step.iter_mut().enumerate() {
            fine.unravel(i, &mut m);
            *v = a.values[cells.ravel(&[m[0] / 4, m[1] / 4])];
        }
        let step = BlockField::new(fine, 1, step).unwrap();
        for (p, q) in [(1.0, 1.0), (2.0, 0.5), (0.5, 3.0), (f64::INFINITY, 1.0)] {
            for order in [Order::FirstInner, Order::SecondInner] {
                let spec = QbfSpec::new(p, q, order, Weight::one(2)).unwrap();
                let x = seq_norm(&a, &spec).unwrap();
                let y = mixed_norm(&step, &spec).unwrap();
                assert!((x - y).abs() <= 1e-12 * y, "{p},{q},{order:?}: {x} vs {y}");
            }
        }
    }

    fn unit_wiener(r: f64, seq: QbfSpec) -> WienerSpec {
        WienerSpec::new(r, r, (1.0, 1.0), Weight::one(2), seq).unwrap()
    }

    #[test]
    fn wiener_single_cell_and_oracle() {
        let lat = lat2(16, 0.25, 16, 0.25);
        let f = indicator(&lat, |x| (0.0..1.0).contains(&x[0]) && (-1.0..0.0).contains(&x[1]));
        for r in [0.5, 1.0, f64::INFINITY] {
            let ws = unit_wiener(r, QbfSpec::lebesgue(1.0, 1.0, 2).unwrap());
            assert!((wiener_norm(&f, &ws).unwrap() - 1.0).abs() < 1e-12);
        }
        // oracle: explicit cube scan with r1 = r2 = 1 and l^{2,1}
        let g = rnd(&lat, 5);
        let ws = unit_wiener(1.0, QbfSpec::lebesgue(2.0, 1.0, 2).unwrap());
        let got = wiener_norm(&g, &ws).unwrap();
        let mut a = [[0.0f64; 4]; 4];
        for i in 0..16 {
            for k in 0..16 {
                a[i / 4][k / 4] += g.values[i * 16 + k] * 0.25 * 0.25;
            }
        }
        let want: f64 = (0..4).map(|c2| (0..4).map(|c1| a[c1][c2].powi(2)).sum::<f64>().sqrt()).sum();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn partition_snaps_and_rejects() {
        let lat = lat2(32, 0.25, 32, 2.0 * std::f64::consts::PI / 8.0);
        let p = Partition::new(&lat, 1, (1.0, 1.0)).unwrap();
        assert_eq!(p.samples_per_cell, vec![4, 1]);
        let lat = lat2(128, 0.25, 128, 2.0 * std::f64::consts::PI / 32.0);
        let p = Partition::new(&lat, 1, (1.0, 1.0)).unwrap();
        assert_eq!(p.samples_per_cell, vec![4, 4]);
        assert!(p.sides.1 < 1.0);
        assert!(matches!(Partition::new(&lat, 1, (0.1, 1.0)), Err(Error::InvalidPartition(_))));
        assert!(Partition::exact(&lat, vec![3, 4]).is_err());
    }

    #[test]
    fn wiener_monotone_in_r_and_sandwich() {
        let lat = lat2(16, 0.25, 16, 0.25);
        let seq = QbfSpec::lebesgue(2.0, 1.0, 2).unwrap();
        for seed in 0..10 {
            let f = rnd(&lat, 100 + seed);
            let a = wiener_norm(&f, &unit_wiener(0.5, seq.clone())).unwrap();
            let b = wiener_norm(&f, &unit_wiener(1.0, seq.clone())).unwrap();
            let c = wiener_norm(&f, &unit_wiener(f64::INFINITY, seq.clone())).unwrap();
            assert!(a <= b && b <= c, "{a} {b} {c}");
            assert!(mixed_norm(&f, &seq).unwrap() <= c);
        }
    }

    #[test]
    fn lattice_cover_matches_partition_for_unit_cells() {
        let lat = lat2(16, 0.25, 16, 0.25);
        let f = rnd(&lat, 9);
        let ws = WienerSpec::new(0.5, 2.0, (1.0, 1.0), polynomial_weight(1.0, 2), QbfSpec::new(1.0, 2.0, Order::FirstInner, polynomial_weight(-1.0, 2)).unwrap()).unwrap();
        let a = wiener_norm(&f, &ws).unwrap();
        let b = wiener_norm_lattice(&f, &ws, (1.0, 1.0), (1.0, 1.0)).unwrap();
        assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
        let z = f.zeros_like();
        assert_eq!(wiener_norm_lattice(&z, &ws, (1.0, 1.0), (2.0, 2.0)).unwrap(), 0.0);
        let c = wiener_norm_lattice(&f, &ws, (1.0, 1.0), (2.0, 2.0)).unwrap();
        assert!(c > a);
    }

    #[test]
    fn normality_witness() {
        let lat = lat2(8, 0.5, 8, 0.5);
        let f = rnd(&lat, 11);
        let spec = QbfSpec::new(0.5, 2.0, Order::FirstInner, polynomial_weight(1.5, 2)).unwrap();
        let w = spec.witness();
        assert_eq!(spec.r0(), 0.5);
        let lhs = mixed_norm(&f, &spec).unwrap();
        let rhs = mixed_norm(&f.map(|v| v.powf(0.5)), &w).unwrap().powf(2.0);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn discrete_convolution_examples() {
        let ulat = Lattice::new(vec![Axis::centered(8, 1.0, 0.0), Axis::centered(8, 1.0, 0.0)]);
        let spec = QbfSpec::new(0.5, 1.0, Order::FirstInner, polynomial_weight(1.0, 2)).unwrap();
        let mut delta = BlockField::new(ulat.clone(), 1, vec![0.0; 64]).unwrap();
        delta.values[4 * 8 + 4] = 1.0;
        let b = rnd(&ulat, 2);
        let c = discrete_conv_bound(&[delta.clone()], std::slice::from_ref(&b), &spec).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        // one-hot pair reduces to a weight ratio
        let mut a = delta.zeros_like();
        a.values[5 * 8 + 3] = 1.0; // j = (1, -1)
        let mut bb = delta.zeros_like();
        bb.values[3 * 8 + 6] = 1.0; // k = (-1, 2)
        let c = discrete_conv_bound(&[a], &[bb], &spec).unwrap();
        let w = |x: [f64; 2]| (1.0 + x[0] * x[0] + x[1] * x[1]).sqrt();
        let want = w([0.0, 1.0]) / (w([1.0, -1.0]) * w([-1.0, 2.0]));
        assert!((c - want).abs() < 1e-12);
    }

    #[test]
    fn parse_specs() {
        let s = parse_qbf("Lpq:p=2,q=1,w=poly:s=1", 2).unwrap();
        assert_eq!((s.p, s.q, s.order), (2.0, 1.0, Order::FirstInner));
        assert_eq!(s.weight, polynomial_weight(1.0, 2));
        let s = parse_qbf("Lpq*:p=inf,q=0.5,w=subexp:r=1,s=1", 2).unwrap();
        assert_eq!(s.order, Order::SecondInner);
        assert!(s.p.is_infinite());
        assert!((s.weight.eval(&[1.0, 0.0]) - std::f64::consts::E).abs() < 1e-14);
        let w = parse_wiener("wiener:r1=0.5,r2=0.5,side=1.0,seq=Lpq:p=2,q=2", 2).unwrap();
        assert_eq!((w.r1, w.r2, w.sides), (0.5, 0.5, (1.0, 1.0)));
        assert_eq!(w.seq.p, 2.0);
        assert!(parse_qbf("Lpq:p=0,q=1", 2).is_err());
        assert!(parse_qbf("Lpq:p=1", 2).is_err());
        assert!(parse_qbf("Banach:p=1", 2).is_err());
    }
}
