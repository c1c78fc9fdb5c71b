//! Weight functions on R^n and empirical class diagnostics.
//!
//! Class membership (moderate, submultiplicative) is an asymptotic notion; here
//! it is checked by exhaustive scans over a finite symmetric box of sample
//! points, with box doubling used to detect unbounded growth.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Class tag carried by a [`Weight`].
#[derive(Debug, Clone, PartialEq)]
pub enum WeightClass {
    Polynomial(f64),
    Subexp { r: f64, s: f64 },
    Product,
    Reciprocal,
    Custom,
}

/// Sampled lookup table on a rectangular grid, multilinearly interpolated
/// and clamped at the table edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl WeightTable {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let len: usize = axes.iter().map(Vec::len).product();
        if axes.is_empty() || len != values.len() {
            return Err(Error::InvalidWeight(format!(
                "table has {} values for axes of total size {len}",
                values.len()
            )));
        }
        for a in &axes {
            if a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidWeight("table axes must be strictly increasing".into()));
            }
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidWeight(format!("table value {v} is not positive and finite")));
        }
        Ok(WeightTable { axes, values })
    }

    /// Read a CSV with columns `x1,..,xn,value` covering a full rectangular
    /// grid (any row order).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Parse("weight table needs rows of equal width >= 2".into()));
        }
        let dim = width - 1;
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|k| {
                let mut a: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                a.sort_by(f64::total_cmp);
                a.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
                a
            })
            .collect();
        let len: usize = axes.iter().map(Vec::len).product();
        if len != rows.len() {
            return Err(Error::Parse(format!("weight table is not a full grid ({} rows, {len} grid points)", rows.len())));
        }
        let mut values = vec![f64::NAN; len];
        for r in &rows {
            let mut idx = 0;
            for k in 0..dim {
                let i = axes[k]
                    .iter()
                    .position(|a| (a - r[k]).abs() < 1e-12)
                    .ok_or_else(|| Error::Parse("inconsistent table axis".into()))?;
                idx = idx * axes[k].len() + i;
            }
            values[idx] = r[dim];
        }
        WeightTable::new(axes, values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let dim = self.axes.len();
        // per-axis lower index and fraction
        let mut lo = vec![0usize; dim];
        let mut t = vec![0.0; dim];
        for k in 0..dim {
            let a = &self.axes[k];
            if a.len() == 1 {
                continue;
            }
            let xk = x[k].clamp(a[0], a[a.len() - 1]);
            let i = a.partition_point(|&v| v <= xk).saturating_sub(1).min(a.len() - 2);
            lo[k] = i;
            t[k] = (xk - a[i]) / (a[i + 1] - a[i]);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..dim {
                let n = self.axes[k].len();
                let up = (corner >> k) & 1 == 1 && n > 1;
                w *= if n == 1 {
                    if (corner >> k) & 1 == 1 {
                        0.0
                    } else {
                        1.0
                    }
                } else if up {
                    t[k]
                } else {
                    1.0 - t[k]
                };
                idx = idx * n + lo[k] + usize::from(up);
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Const(f64),
    Poly(f64),
    Subexp { r: f64, s: f64 },
    Product(Box<Weight>, Box<Weight>),
    Reciprocal(Box<Weight>),
    /// First factor acts on the leading coordinates, second on the rest.
    Tensor(Box<Weight>, Box<Weight>),
    Custom { table: Arc<WeightTable>, moderator: Option<Box<Weight>> },
}

/// Positive function on R^n with a class tag and a moderating companion.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    dim: usize,
    kind: Kind,
}

/// `x -> (1 + |x|^2)^{s/2}` on R^n.
pub fn polynomial_weight(s: f64, n: usize) -> Weight {
    Weight { dim: n, kind: Kind::Poly(s) }
}

/// `x -> e^{r |x|^{1/s}}` on R^n, `s >= 1`.
pub fn subexp_weight(r: f64, s: f64, n: usize) -> Result<Weight> {
    if !(s >= 1.0) || !s.is_finite() || !r.is_finite() {
        return Err(Error::InvalidWeight(format!("subexp weight needs s >= 1 and finite r, got r={r}, s={s}")));
    }
    Ok(Weight { dim: n, kind: Kind::Subexp { r, s } })
}

pub fn weight_product(a: &Weight, b: &Weight) -> Result<Weight> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    Ok(Weight { dim: a.dim, kind: Kind::Product(Box::new(a.clone()), Box::new(b.clone())) })
}

pub fn weight_reciprocal(a: &Weight) -> Weight {
    Weight { dim: a.dim, kind: Kind::Reciprocal(Box::new(a.clone())) }
}

impl Weight {
    /// The constant weight `c > 0`.
    pub fn constant(c: f64, n: usize) -> Result<Weight> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidWeight(format!("constant weight must be positive, got {c}")));
        }
        Ok(Weight { dim: n, kind: Kind::Const(c) })
    }

    pub fn one(n: usize) -> Weight {
        Weight { dim: n, kind: Kind::Const(1.0) }
    }

    /// `(x, y) -> a(x) b(y)` on `R^{a.dim} x R^{b.dim}`.
    pub fn tensor(a: &Weight, b: &Weight) -> Weight {
        Weight { dim: a.dim + b.dim, kind: Kind::Tensor(Box::new(a.clone()), Box::new(b.clone())) }
    }

    /// Interpolated lookup table with an optional declared moderator.
    pub fn custom(table: WeightTable, moderator: Option<Weight>) -> Result<Weight> {
        let dim = table.dim();
        if let Some(m) = &moderator {
            if m.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: m.dim });
            }
        }
        Ok(Weight { dim, kind: Kind::Custom { table: Arc::new(table), moderator: moderator.map(Box::new) } })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Const(c) => *c,
            Kind::Poly(s) => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if *s == 2.0 {
                    1.0 + r2
                } else {
                    (1.0 + r2).powf(s / 2.0)
                }
            }
            Kind::Subexp { r, s } => {
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if *s == 1.0 {
                    (r * n).exp()
                } else {
                    (r * n.powf(1.0 / s)).exp()
                }
            }
            Kind::Product(a, b) => a.eval(x) * b.eval(x),
            Kind::Reciprocal(a) => 1.0 / a.eval(x),
            Kind::Tensor(a, b) => a.eval(&x[..a.dim]) * b.eval(&x[a.dim..]),
            Kind::Custom { table, .. } => table.eval(x),
        }
    }

    pub fn class(&self) -> WeightClass {
        match &self.kind {
            Kind::Const(_) => WeightClass::Polynomial(0.0),
            Kind::Poly(s) => WeightClass::Polynomial(*s),
            Kind::Subexp { r, s } => WeightClass::Subexp { r: *r, s: *s },
            Kind::Product(..) | Kind::Tensor(..) => WeightClass::Product,
            Kind::Reciprocal(_) => WeightClass::Reciprocal,
            Kind::Custom { .. } => WeightClass::Custom,
        }
    }

    /// Submultiplicative companion `v` with `w(x+y) <= C w(x) v(y)`.
    pub fn moderator(&self) -> Option<Weight> {
        let kind = match &self.kind {
            Kind::Const(_) => Kind::Const(1.0),
            Kind::Poly(s) => Kind::Poly(s.abs()),
            Kind::Subexp { r, s } => Kind::Subexp { r: r.abs(), s: *s },
            Kind::Product(a, b) => Kind::Product(Box::new(a.moderator()?), Box::new(b.moderator()?)),
            Kind::Reciprocal(a) => return a.moderator(),
            Kind::Tensor(a, b) => Kind::Tensor(Box::new(a.moderator()?), Box::new(b.moderator()?)),
            Kind::Custom { moderator, .. } => return moderator.as_deref().cloned(),
        };
        Some(Weight { dim: self.dim, kind })
    }

    /// Whether the weight is identically 1 by construction.
    pub fn is_trivial(&self) -> bool {
        match &self.kind {
            Kind::Const(c) => *c == 1.0,
            Kind::Poly(s) => *s == 0.0,
            Kind::Subexp { r, .. } => *r == 0.0,
            Kind::Product(a, b) | Kind::Tensor(a, b) => a.is_trivial() && b.is_trivial(),
            Kind::Reciprocal(a) => a.is_trivial(),
            Kind::Custom { .. } => false,
        }
    }

    /// `w^t` as a weight (used for the normality witness of quasi-norms).
    pub fn powf(&self, t: f64) -> Weight {
        let kind = match &self.kind {
            Kind::Const(c) => Kind::Const(c.powf(t)),
            Kind::Poly(s) => Kind::Poly(s * t),
            Kind::Subexp { r, s } => Kind::Subexp { r: r * t, s: *s },
            Kind::Product(a, b) => Kind::Product(Box::new(a.powf(t)), Box::new(b.powf(t))),
            Kind::Reciprocal(a) => Kind::Reciprocal(Box::new(a.powf(t))),
            Kind::Tensor(a, b) => Kind::Tensor(Box::new(a.powf(t)), Box::new(b.powf(t))),
            Kind::Custom { .. } => {
                if t == 1.0 {
                    return self.clone();
                }
                Kind::Product(Box::new(self.clone()), Box::new(self.powf(t - 1.0)))
            }
        };
        Weight { dim: self.dim, kind }
    }

    /// Reject weights that vanish or blow up on the points of `bx`.
    pub fn check_positive(&self, bx: &ScanBox) -> Result<()> {
        if bx.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: bx.dim });
        }
        let mut x = vec![0.0; bx.dim];
        for i in 0..bx.len() {
            bx.point(i, &mut x);
            let w = self.eval(&x);
            if !(w > 0.0) || !w.is_finite() || !(1.0 / w).is_finite() {
                return Err(Error::InvalidWeight(format!("weight {self} takes value {w} at {x:?}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Const(c) if *c == 1.0 => write!(f, "const"),
            Kind::Const(c) => write!(f, "const:c={c}"),
            Kind::Poly(s) => write!(f, "poly:s={s}"),
            Kind::Subexp { r, s } => write!(f, "subexp:r={r},s={s}"),
            Kind::Product(a, b) => write!(f, "prod({a},{b})"),
            Kind::Reciprocal(a) => write!(f, "inv({a})"),
            Kind::Tensor(a, b) => write!(f, "tensor({a},{b})"),
            Kind::Custom { .. } => write!(f, "custom"),
        }
    }
}

fn split_top_level(s: &str) -> Result<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => return Ok((&s[..i], &s[i + 1..])),
            _ => {}
        }
    }
    Err(Error::Parse(format!("expected two comma-separated arguments in {s:?}")))
}

fn params(body: &str) -> Result<Vec<(&str, f64)>> {
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {kv:?}")))?;
            let v = v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number in {kv:?}")))?;
            Ok((k.trim(), v))
        })
        .collect()
}

fn param(ps: &[(&str, f64)], key: &str, default: Option<f64>, spec: &str) -> Result<f64> {
    ps.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| Error::Parse(format!("weight {spec:?} missing parameter {key}")))
}

/// Parse a weight spec string on R^n.
///
/// Grammar: `const`, `const:c=2`, `poly:s=2`, `subexp:r=1,s=1`, `prod(a,b)`,
/// `inv(a)`, `tensor(a,b)` (each factor on half of the coordinates) and
/// `custom:file=path.csv` (multilinear lookup table).
pub fn parse_weight(spec: &str, n: usize) -> Result<Weight> {
    let s = spec.trim();
    let call = |name: &str| -> Option<&str> {
        s.strip_prefix(name)
            .and_then(|r| r.trim_start().strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
    };
    if let Some(args) = call("prod") {
        let (a, b) = split_top_level(args)?;
        return weight_product(&parse_weight(a, n)?, &parse_weight(b, n)?);
    }
    if let Some(args) = call("inv") {
        return Ok(weight_reciprocal(&parse_weight(args, n)?));
    }
    if let Some(args) = call("tensor") {
        if !n.is_multiple_of(2) {
            return Err(Error::Parse(format!("tensor weight needs an even dimension, got {n}")));
        }
        let (a, b) = split_top_level(args)?;
        return Ok(Weight::tensor(&parse_weight(a, n / 2)?, &parse_weight(b, n / 2)?));
    }
    let (head, body) = s.split_once(':').unwrap_or((s, ""));
    match head.trim() {
        "const" | "1" => {
            let ps = params(body)?;
            Weight::constant(param(&ps, "c", Some(1.0), s)?, n)
        }
        "poly" => {
            let ps = params(body)?;
            Ok(polynomial_weight(param(&ps, "s", None, s)?, n))
        }
        "subexp" => {
            let ps = params(body)?;
            subexp_weight(param(&ps, "r", None, s)?, param(&ps, "s", Some(1.0), s)?, n)
        }
        "custom" => {
            let path = body
                .strip_prefix("file=")
                .ok_or_else(|| Error::Parse(format!("custom weight needs file=..., got {s:?}")))?;
            let table = WeightTable::from_csv(path)?;
            if table.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: table.dim() });
            }
            Weight::custom(table, None)
        }
        _ => Err(Error::Parse(format!("unknown weight {s:?}"))),
    }
}

/// Symmetric cube `[-half_width, half_width]^dim` sampled with `2m + 1`
/// points per axis (step `half_width / m`), origin included.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanBox {
    pub dim: usize,
    pub half_width: f64,
    pub m: usize,
}

impl ScanBox {
    pub fn new(dim: usize, half_width: f64, m: usize) -> Result<ScanBox> {
        if dim == 0 || m == 0 || !(half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("scan box needs dim, m > 0 and positive width ({dim}, {m}, {half_width})")));
        }
        Ok(ScanBox { dim, half_width, m })
    }

    /// Box of the same step and twice the half-width.
    pub fn doubled(&self) -> ScanBox {
        ScanBox { dim: self.dim, half_width: 2.0 * self.half_width, m: 2 * self.m }
    }

    pub fn step(&self) -> f64 {
        self.half_width / self.m as f64
    }

    pub fn per_axis(&self) -> usize {
        2 * self.m + 1
    }

    pub fn len(&self) -> usize {
        self.per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn multi(&self, mut i: usize, out: &mut [isize]) {
        let p = self.per_axis();
        for k in (0..self.dim).rev() {
            out[k] = (i % p) as isize - self.m as isize;
            i /= p;
        }
    }

    pub fn point(&self, i: usize, out: &mut [f64]) {
        let p = self.per_axis();
        let h = self.step();
        let mut i = i;
        for k in (0..self.dim).rev() {
            out[k] = ((i % p) as f64 - self.m as f64) * h;
            i /= p;
        }
    }

    fn index(&self, multi: &[isize]) -> Option<usize> {
        let p = self.per_axis() as isize;
        let mut acc = 0usize;
        for &j in multi {
            let u = j + self.m as isize;
            if u < 0 || u >= p {
                return None;
            }
            acc = acc * p as usize + u as usize;
        }
        Some(acc)
    }
}

/// Max over sampled `x, y` with `x, y, x + y` in the box of
/// `num(x + y) / (a(x) b(y))`.
fn pair_scan(num: &[f64], a: &[f64], b: &[f64], bx: &ScanBox) -> f64 {
    (0..bx.len())
        .into_par_iter()
        .map(|i| {
            let mut mi = vec![0isize; bx.dim];
            let mut mj = vec![0isize; bx.dim];
            let mut sum = vec![0isize; bx.dim];
            bx.multi(i, &mut mi);
            let mut best = f64::NEG_INFINITY;
            for j in 0..bx.len() {
                bx.multi(j, &mut mj);
                for k in 0..bx.dim {
                    sum[k] = mi[k] + mj[k];
                }
                if let Some(s) = bx.index(&sum) {
                    best = best.max(num[s] / (a[i] * b[j]));
                }
            }
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn sample(w: &Weight, bx: &ScanBox) -> Vec<f64> {
    let mut x = vec![0.0; bx.dim];
    (0..bx.len())
        .map(|i| {
            bx.point(i, &mut x);
            w.eval(&x)
        })
        .collect()
}

/// Result of a moderateness scan on a box and on its doubling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModerateScan {
    pub constant: f64,
    pub doubled_constant: f64,
}

impl ModerateScan {
    /// Relative change of the constant under box doubling.
    pub fn relative_change(&self) -> f64 {
        (self.doubled_constant - self.constant).abs() / self.constant
    }

    /// Growth by a factor close to 2 or more under doubling signals an
    /// unbounded constant.
    pub fn is_unbounded(&self) -> bool {
        self.doubled_constant >= 1.9 * self.constant
    }
}

fn check_dims(w: &Weight, v: &Weight, bx: &ScanBox) -> Result<()> {
    if w.dim != bx.dim {
        return Err(Error::DimensionMismatch { expected: bx.dim, got: w.dim });
    }
    if v.dim != bx.dim {
        return Err(Error::DimensionMismatch { expected: bx.dim, got: v.dim });
    }
    Ok(())
}

/// Smallest `C` with `w(x+y) <= C w(x) v(y)` over sampled pairs, on `bx`
/// and on its doubling.
pub fn moderate_scan(w: &Weight, v: &Weight, bx: &ScanBox) -> Result<ModerateScan> {
    check_dims(w, v, bx)?;
    let c1 = {
        let ws = sample(w, bx);
        pair_scan(&ws, &ws, &sample(v, bx), bx)
    };
    let big = bx.doubled();
    let c2 = {
        let ws = sample(w, &big);
        pair_scan(&ws, &ws, &sample(v, &big), &big)
    };
    Ok(ModerateScan { constant: c1, doubled_constant: c2 })
}

/// The moderateness constant on `bx`, or `f64::INFINITY` when it roughly
/// doubles as the box doubles.
pub fn moderate_constant(w: &Weight, v: &Weight, bx: &ScanBox) -> Result<f64> {
    let scan = moderate_scan(w, v, bx)?;
    Ok(if scan.is_unbounded() { f64::INFINITY } else { scan.constant })
}

/// Outcome of [`submultiplicative_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubmultReport {
    /// `max v(x+y) / (v(x) v(y)) - 1` over sampled pairs.
    pub max_violation: f64,
    /// `max |v(x) - v(-x)| / v(x)`.
    pub symmetry_defect: f64,
    pub symmetric: bool,
}

pub fn submultiplicative_check(v: &Weight, bx: &ScanBox) -> Result<SubmultReport> {
    check_dims(v, v, bx)?;
    let vs = sample(v, bx);
    let ratio = pair_scan(&vs, &vs, &vs, bx);
    let n = vs.len();
    // the box is symmetric, so index n - 1 - i is the reflection of i
    let symmetry_defect = (0..n).map(|i| (vs[i] - vs[n - 1 - i]).abs() / vs[i]).fold(0.0, f64::max);
    Ok(SubmultReport {
        max_violation: ratio - 1.0,
        symmetry_defect,
        symmetric: symmetry_defect <= 1e-12,
    })
}

/// For each radius `R`, the sup of `w2 / w1` over box points with
/// `|X| >= R`; 0 when no sample lies that far out.
pub fn tail_sup_ratio(w2: &Weight, w1: &Weight, radii: &[f64], bx: &ScanBox) -> Result<Vec<f64>> {
    check_dims(w2, w1, bx)?;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(bx.len());
    let mut x = vec![0.0; bx.dim];
    for i in 0..bx.len() {
        bx.point(i, &mut x);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        pts.push((r, w2.eval(&x) / w1.eval(&x)));
    }
    let tol = 1e-9 * bx.step();
    Ok(radii
        .iter()
        .map(|&radius| {
            pts.iter()
                .filter(|(r, _)| *r >= radius - tol)
                .map(|(_, q)| *q)
                .fold(0.0, f64::max)
        })
        .collect())
}
