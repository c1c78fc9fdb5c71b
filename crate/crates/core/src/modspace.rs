//! Modulation space quasi-norms `||V_phi f * w||_B` and the empirical
//! certifiers built on them: cross-window equivalence tables, window
//! transfer constants, embedding chains, and compactness of weighted
//! embeddings.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{gaussian, mass_outside_estimate, Grid, PhaseField, Signal};
use crate::spaces::{mixed_norm, parse_qbf, split_keyed, wiener_norm, BlockField, Order, QbfSpec, WienerSpec};
use crate::stft::StftPlan;
use crate::weights::{parse_weight, tail_sup_ratio, weight_product, weight_reciprocal, ScanBox, Weight};

/// Largest admissible relative edge mass of a window.
pub const WINDOW_MASS_BUDGET: f64 = 1e-8;

/// `M(w, B)` with a fixed window.
#[derive(Debug, Clone)]
pub struct ModSpec {
    pub weight: Weight,
    pub backend: QbfSpec,
    pub window: Signal,
}

pub fn check_window(window: &Signal) -> Result<()> {
    if window.norm() == 0.0 {
        return Err(Error::ZeroWindow);
    }
    let m = mass_outside_estimate(window);
    if m > WINDOW_MASS_BUDGET {
        return Err(Error::Precondition(format!("window leaks {m:e} of its mass to the grid edge")));
    }
    Ok(())
}

impl ModSpec {
    pub fn new(weight: Weight, backend: QbfSpec, window: Signal) -> Result<ModSpec> {
        check_window(&window)?;
        let d2 = 2 * window.grid.dim();
        for w in [&weight, &backend.weight] {
            if w.dim() != d2 {
                return Err(Error::DimensionMismatch { expected: d2, got: w.dim() });
            }
        }
        Ok(ModSpec { weight, backend, window })
    }

    /// Gaussian window on `grid`.
    pub fn gaussian(grid: &Grid, weight: Weight, backend: QbfSpec) -> Result<ModSpec> {
        ModSpec::new(weight, backend, gaussian(grid))
    }
}

/// `|F| w` as a block field with the time block first.
pub fn weighted_field(f: &PhaseField, w: &Weight) -> Result<BlockField> {
    let b = BlockField::from_phase(f);
    let values = b.weighted(w)?;
    BlockField::new(b.lattice, b.split, values)
}

/// Parse `M:w=poly:s=1,B=Lpq:p=2,q=1` into the weight and backend of a
/// modulation space on `R^d`; `B` must come last.
pub fn parse_mod_space(spec: &str, d: usize) -> Result<(Weight, QbfSpec)> {
    let body = spec
        .trim()
        .strip_prefix("M:")
        .ok_or_else(|| Error::Parse(format!("expected M:..., got {spec:?}")))?;
    let mut w = Weight::one(2 * d);
    let mut b = None;
    for (k, v) in split_keyed(body, &["w", "B"], Some("B"))? {
        match k {
            "w" => w = parse_weight(v, 2 * d)?,
            _ => b = Some(parse_qbf(v, 2 * d)?),
        }
    }
    let b = b.ok_or_else(|| Error::Parse(format!("space {spec:?} needs B=...")))?;
    Ok((w, b))
}

pub fn modulation_norm(f: &Signal, spec: &ModSpec) -> Result<f64> {
    let v = StftPlan::new(&f.grid, &spec.window)?.forward(f)?;
    mixed_norm(&weighted_field(&v, &spec.weight)?, &spec.backend)
}

/// `||F||_{W^{r,r}(w, B)}` over cells of side `sides`.
pub fn stft_wiener_norm(v: &PhaseField, w: &Weight, backend: &QbfSpec, r: f64, sides: (f64, f64)) -> Result<f64> {
    let ws = WienerSpec::new(r, r, sides, w.clone(), backend.clone())?;
    wiener_norm(&BlockField::from_phase(v), &ws)
}

/// One ensemble member measured with one window and one local exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivRow {
    pub signal: usize,
    pub window: usize,
    pub r: f64,
    /// `||f||_{M(w,B)}` with the Gaussian window.
    pub modulation: f64,
    /// `||V_phi f * w||_B`.
    pub stft: f64,
    /// `||V_phi f||_{W^r(w,B)}`.
    pub wiener: f64,
    /// `r < r0`: outside the hypothesis of the equivalence theorem.
    pub flagged: bool,
}

/// Extreme values of a column quotient over the ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossRatio {
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivReport {
    pub rows: Vec<EquivRow>,
    /// Keyed by `window/r/pair`, e.g. `1/inf/M:W`.
    pub ratios: BTreeMap<String, CrossRatio>,
}

fn fmt_r(r: f64) -> String {
    if r.is_infinite() {
        "inf".into()
    } else {
        format!("{r}")
    }
}

/// Evaluate the three equivalent norms for every signal, window and `r`,
/// and the ensemble extremes of their quotients.
pub fn equivalence_report(
    ensemble: &[Signal],
    windows: &[Signal],
    rs: &[f64],
    weight: &Weight,
    backend: &QbfSpec,
    sides: (f64, f64),
) -> Result<EquivReport> {
    let Some(first) = ensemble.first() else {
        return Ok(EquivReport { rows: Vec::new(), ratios: BTreeMap::new() });
    };
    let grid = first.grid.clone();
    for w in windows {
        check_window(w)?;
    }
    let m_spec = ModSpec::gaussian(&grid, weight.clone(), backend.clone())?;
    let r0 = backend.r0();
    let plans: Vec<StftPlan> = windows.iter().map(|w| StftPlan::new(&grid, w)).collect::<Result<_>>()?;
    let per_signal: Vec<Vec<EquivRow>> = ensemble
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<Vec<EquivRow>> {
            let m = modulation_norm(f, &m_spec)?;
            let mut rows = Vec::new();
            for (wi, plan) in plans.iter().enumerate() {
                let v = plan.forward(f)?;
                let s = mixed_norm(&weighted_field(&v, weight)?, backend)?;
                for &r in rs {
                    rows.push(EquivRow {
                        signal: i,
                        window: wi,
                        r,
                        modulation: m,
                        stft: s,
                        wiener: stft_wiener_norm(&v, weight, backend, r, sides)?,
                        flagged: r < r0,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<EquivRow> = per_signal.into_iter().flatten().collect();
    let mut ratios: BTreeMap<String, CrossRatio> = BTreeMap::new();
    for row in &rows {
        let key = |pair: &str| format!("{}/{}/{}", row.window, fmt_r(row.r), pair);
        for (pair, a, b) in [("M:S", row.modulation, row.stft), ("M:W", row.modulation, row.wiener), ("S:W", row.stft, row.wiener)] {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let q = a / b;
            let e = ratios.entry(key(pair)).or_insert(CrossRatio { max: q, min: q });
            e.max = e.max.max(q);
            e.min = e.min.min(q);
        }
    }
    Ok(EquivReport { rows, ratios })
}

impl EquivReport {
    /// True when every quotient extreme is finite and positive.
    pub fn all_finite(&self) -> bool {
        self.ratios
            .values()
            .all(|c| c.max.is_finite() && c.min.is_finite() && c.min > 0.0)
    }
}

/// Largest relative change of any quotient extreme between two reports
/// over the same keys (typically a grid and its refinement).
pub fn refinement_change(coarse: &EquivReport, fine: &EquivReport) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, c) in &coarse.ratios {
        match fine.ratios.get(k) {
            Some(f) => {
                worst = worst.max((f.max / c.max - 1.0).abs()).max((f.min / c.min - 1.0).abs());
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Window transfer constants between a window `phi` and the Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConstants {
    /// `max ||V_phi f||_W / ||V_phi0 f||_W`.
    pub raw_a: f64,
    /// `max ||V_phi0 f||_W / ||V_phi f||_W`.
    pub raw_b: f64,
    /// `||phi||_{M^{r0}_{(v)}}` with `v` the moderator of the weight.
    pub window_norm: f64,
    /// `raw_a / window_norm`.
    pub c_a: f64,
    /// `raw_b * window_norm * (window_norm / ||phi||_2)^{-theta(r)}`.
    pub c_b: f64,
    /// `raw_b * window_norm`, without the ratio factor.
    pub c_b_unfactored: f64,
}

pub fn window_transfer_constants(
    ensemble: &[Signal],
    phi: &Signal,
    r: f64,
    weight: &Weight,
    backend: &QbfSpec,
    sides: (f64, f64),
) -> Result<TransferConstants> {
    check_window(phi)?;
    let grid = phi.grid.clone();
    let g0 = StftPlan::new(&grid, &gaussian(&grid))?;
    let g1 = StftPlan::new(&grid, phi)?;
    let r0 = backend.r0();
    let v = weight_product(&weight.moderator().unwrap_or_else(|| Weight::one(weight.dim())), &backend.v0())?;
    let small = QbfSpec::new(r0, r0, Order::FirstInner, v)?;
    let window_norm = mixed_norm(&BlockField::from_phase(&g0.forward(phi)?), &small)?;
    let pairs: Vec<(f64, f64)> = ensemble
        .par_iter()
        .map(|f| -> Result<(f64, f64)> {
            let a = stft_wiener_norm(&g1.forward(f)?, weight, backend, r, sides)?;
            let b = stft_wiener_norm(&g0.forward(f)?, weight, backend, r, sides)?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let (mut raw_a, mut raw_b) = (0.0f64, 0.0f64);
    for (a, b) in pairs {
        if b > 0.0 {
            raw_a = raw_a.max(a / b);
        }
        if a > 0.0 {
            raw_b = raw_b.max(b / a);
        }
    }
    let theta = (2.0 / r).max(2.0);
    Ok(TransferConstants {
        raw_a,
        raw_b,
        window_norm,
        c_a: raw_a / window_norm,
        c_b: raw_b * window_norm * (window_norm / phi.norm()).powf(-theta),
        c_b_unfactored: raw_b * window_norm,
    })
}

/// The chain `M^{r0}_{(w v0)} -> M(w, B) -> M^inf_{(w / v0)}` at one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub small: f64,
    pub middle: f64,
    pub large: f64,
}

impl SandwichReport {
    /// `middle / small`, bounded by the first embedding constant.
    pub fn upper_ratio(&self) -> f64 {
        self.middle / self.small
    }

    /// `large / middle`, bounded by the second embedding constant.
    pub fn lower_ratio(&self) -> f64 {
        self.large / self.middle
    }
}

pub fn sandwich_check(f: &Signal, weight: &Weight, backend: &QbfSpec) -> Result<SandwichReport> {
    let plan = StftPlan::new(&f.grid, &gaussian(&f.grid))?;
    let v = BlockField::from_phase(&plan.forward(f)?);
    let r0 = backend.r0();
    let v0 = backend.v0();
    let small = QbfSpec::new(r0, r0, Order::FirstInner, weight_product(weight, &v0)?)?;
    let large = QbfSpec::new(f64::INFINITY, f64::INFINITY, Order::FirstInner, weight_product(weight, &weight_reciprocal(&v0))?)?;
    let middle = BlockField::new(v.lattice.clone(), v.split, v.weighted(weight)?)?;
    Ok(SandwichReport {
        small: mixed_norm(&v, &small)?,
        middle: mixed_norm(&middle, backend)?,
        large: mixed_norm(&v, &large)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingReport {
    /// `sup_f ||f||_{M(w2,B)} / ||f||_{M(w1,B)}` over the ensemble.
    pub ratio: f64,
    /// `sup w2 / w1` over the scan box.
    pub weight_sup: f64,
}

pub fn embedding_ratio(w1: &Weight, w2: &Weight, backend: &QbfSpec, ensemble: &[Signal], bx: &ScanBox) -> Result<EmbeddingReport> {
    let weight_sup = tail_sup_ratio(w2, w1, &[0.0], bx)?[0];
    let mut ratio: f64 = 0.0;
    for f in ensemble {
        let plan = StftPlan::new(&f.grid, &gaussian(&f.grid))?;
        let v = plan.forward(f)?;
        let a = mixed_norm(&weighted_field(&v, w1)?, backend)?;
        let b = mixed_norm(&weighted_field(&v, w2)?, backend)?;
        if a > 0.0 {
            ratio = ratio.max(b / a);
        }
    }
    Ok(EmbeddingReport { ratio, weight_sup })
}

/// Singular values (descending) of the embedding `M^2_{(w1)} -> M^2_{(w2)}`
/// restricted to the span of Gaussians shifted to `centers` in phase space.
pub fn compactness_diagnostic(w1: &Weight, w2: &Weight, grid: &Grid, centers: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = grid.dim();
    if w1.dim() != 2 * d || w2.dim() != 2 * d {
        return Err(Error::DimensionMismatch { expected: 2 * d, got: w1.dim().min(w2.dim()) });
    }
    let m = centers.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let plan = StftPlan::new(grid, &gaussian(grid))?;
    let probes: Vec<PhaseField> = centers
        .par_iter()
        .map(|c| {
            let g = crate::grid::shifted_gaussian(grid, &c[..d], &c[d..]);
            plan.forward(&g)
        })
        .collect::<Result<_>>()?;
    let lat = probes[0].lattice();
    let rows = lat.len();
    let sq = probes[0].cell_volume().sqrt();
    let (w1v, w2v): (Vec<f64>, Vec<f64>) = (0..rows)
        .into_par_iter()
        .map(|i| {
            let x = lat.coords_vec(i);
            (w1.eval(&x) * sq, w2.eval(&x) * sq)
        })
        .unzip();
    let a1 = DMatrix::<Complex64>::from_fn(rows, m, |i, k| probes[k].values[i] * w1v[i]);
    let a2 = DMatrix::<Complex64>::from_fn(rows, m, |i, k| probes[k].values[i] * w2v[i]);
    let r = a1.qr().r();
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or(Error::Singular(f64::INFINITY))?;
    let sv = (a2 * rinv).singular_values();
    let mut out: Vec<f64> = sv.iter().copied().collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{box_centers, generate_ensemble, realize_all, EnsembleSpec};
    use crate::grid::{dilated_gaussian, shifted_gaussian};
    use crate::spaces::parse_qbf;
    use crate::weights::{parse_weight, polynomial_weight};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::centered(1, 128, 0.25).unwrap()
    }

    #[test]
    fn gaussian_l2_norm_is_one() {
        let g = grid();
        let spec = ModSpec::gaussian(&g, Weight::one(2), QbfSpec::lebesgue(2.0, 2.0, 2).unwrap()).unwrap();
        let n = modulation_norm(&gaussian(&g), &spec).unwrap();
        assert!((n - 1.0).abs() < 1e-8, "{n}");
        assert_eq!(modulation_norm(&Signal::zeros(&g), &spec).unwrap(), 0.0);
        let n3 = modulation_norm(&gaussian(&g).scale(Complex64::new(0.0, 3.0)), &spec).unwrap();
        assert!((n3 - 3.0 * n).abs() < 1e-12);
    }

    #[test]
    fn gaussian_l11_matches_closed_form_quadrature() {
        let g = grid();
        let spec = ModSpec::gaussian(&g, Weight::one(2), QbfSpec::lebesgue(1.0, 1.0, 2).unwrap()).unwrap();
        let got = modulation_norm(&gaussian(&g), &spec).unwrap();
        // nested sums of the closed form (2pi)^{-1/2} e^{-|X|^2/4}
        let dual = g.dual();
        let mut want = 0.0;
        for k in 0..dual.len() {
            for j in 0..g.len() {
                let (x, xi) = (g.point(j)[0], dual.point(k)[0]);
                want += (2.0 * PI).powf(-0.5) * (-(x * x + xi * xi) / 4.0).exp() * g.step() * dual.step();
            }
        }
        assert!((got - want).abs() < 1e-8 * want, "{got} {want}");
        assert!((want - 2.0 * (2.0 * PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn classical_path_agrees_with_mixed_norm() {
        let g = grid();
        let w = polynomial_weight(1.0, 2);
        let b = QbfSpec::new(2.0, 1.0, Order::FirstInner, Weight::one(2)).unwrap();
        let f = shifted_gaussian(&g, &[1.0], &[-2.0]);
        let spec = ModSpec::gaussian(&g, w.clone(), b.clone()).unwrap();
        let direct = mixed_norm(&BlockField::from_phase(&crate::stft::stft(&f, &gaussian(&g)).unwrap()), &b.with_weight(w)).unwrap();
        assert!((modulation_norm(&f, &spec).unwrap() - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn parse_spaces() {
        let (w, b) = parse_mod_space("M:w=poly:s=1,B=Lpq:p=2,q=1", 1).unwrap();
        assert_eq!(w, polynomial_weight(1.0, 2));
        assert_eq!((b.p, b.q), (2.0, 1.0));
        let (w, b) = parse_mod_space("M:B=Lpq:p=0.5,q=0.5,w=poly:s=2", 1).unwrap();
        assert_eq!(w, Weight::one(2));
        assert_eq!(b.weight, polynomial_weight(2.0, 2));
        assert!(parse_mod_space("M:w=poly:s=1", 1).is_err());
        assert!(parse_mod_space("Lpq:p=1,q=1", 1).is_err());
    }

    #[test]
    fn wide_windows_are_rejected() {
        let g = Grid::centered(1, 32, 0.25).unwrap();
        assert!(ModSpec::gaussian(&g, Weight::one(2), QbfSpec::lebesgue(2.0, 2.0, 2).unwrap()).is_err());
        assert!(matches!(check_window(&Signal::zeros(&grid())), Err(Error::ZeroWindow)));
    }

    #[test]
    fn equivalence_report_scales_and_is_finite() {
        let g = grid();
        let ens = realize_all(&generate_ensemble(&EnsembleSpec { dim: 1, count: 4, radius: 2.0, seed: 3 }), &g).unwrap();
        let windows = vec![gaussian(&g), dilated_gaussian(&g, 2.0, &[0.0])];
        let b = parse_qbf("Lpq:p=0.5,q=0.5", 2).unwrap();
        let w = parse_weight("poly:s=1", 2).unwrap();
        let rep = equivalence_report(&ens, &windows, &[0.5, 1.0, f64::INFINITY], &w, &b, (1.0, 1.0)).unwrap();
        assert!(rep.all_finite());
        assert_eq!(rep.rows.len(), 4 * 2 * 3);
        assert!(rep.rows.iter().all(|r| !r.flagged));
        let scaled: Vec<Signal> = ens.iter().map(|f| f.scale(Complex64::new(2.0, 0.0))).collect();
        let rep3 = equivalence_report(&scaled, &windows, &[0.5, 1.0, f64::INFINITY], &w, &b, (1.0, 1.0)).unwrap();
        for (a, b) in rep.rows.iter().zip(&rep3.rows) {
            assert!((b.modulation - 2.0 * a.modulation).abs() <= 1e-12 * b.modulation);
            assert!((b.wiener - 2.0 * a.wiener).abs() <= 1e-12 * b.wiener);
        }
        assert!(refinement_change(&rep, &rep3) < 1e-12);
        let flagged = equivalence_report(&ens[..1], &windows[..1], &[0.25], &w, &b, (1.0, 1.0)).unwrap();
        assert!(flagged.rows[0].flagged);
    }

    #[test]
    fn transfer_constants_for_the_gaussian_and_scaling() {
        let g = grid();
        let ens = realize_all(&generate_ensemble(&EnsembleSpec { dim: 1, count: 3, radius: 2.0, seed: 1 }), &g).unwrap();
        let b = QbfSpec::lebesgue(1.0, 1.0, 2).unwrap();
        let w = Weight::one(2);
        let t = window_transfer_constants(&ens, &gaussian(&g), 1.0, &w, &b, (1.0, 1.0)).unwrap();
        assert!((t.raw_a - 1.0).abs() < 1e-12 && (t.raw_b - 1.0).abs() < 1e-12);
        assert!((t.c_a * t.window_norm - 1.0).abs() < 1e-12);
        let phi = dilated_gaussian(&g, 1.5, &[0.0]);
        let t1 = window_transfer_constants(&ens, &phi, 1.0, &w, &b, (1.0, 1.0)).unwrap();
        let t2 = window_transfer_constants(&ens, &phi.scale(Complex64::new(2.5, 0.0)), 1.0, &w, &b, (1.0, 1.0)).unwrap();
        assert!((t1.c_a / t2.c_a - 1.0).abs() < 1e-12);
        assert!((t1.c_b / t2.c_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sandwich_chain_for_the_gaussian() {
        let g = grid();
        let b = QbfSpec::lebesgue(2.0, 2.0, 2).unwrap();
        let s = sandwich_check(&gaussian(&g), &Weight::one(2), &b).unwrap();
        assert!((s.middle - 1.0).abs() < 1e-8);
        assert!((s.large - (2.0 * PI).powf(-0.5)).abs() < 1e-8);
        assert!((s.small - 2.0 * (2.0 * PI).sqrt()).abs() < 1e-6);
        let z = sandwich_check(&Signal::zeros(&g), &Weight::one(2), &b).unwrap();
        assert_eq!((z.small, z.middle, z.large), (0.0, 0.0, 0.0));
    }

    #[test]
    fn embedding_ratios() {
        let g = grid();
        let ens = realize_all(&generate_ensemble(&EnsembleSpec { dim: 1, count: 4, radius: 2.0, seed: 5 }), &g).unwrap();
        let b = QbfSpec::lebesgue(2.0, 1.0, 2).unwrap();
        let bx = ScanBox::new(2, 4.0, 8).unwrap();
        let w1 = polynomial_weight(1.0, 2);
        let same = embedding_ratio(&w1, &w1, &b, &ens, &bx).unwrap();
        assert!(same.ratio <= 1.0 + 1e-10);
        let r = embedding_ratio(&Weight::one(2), &polynomial_weight(-1.0, 2), &b, &ens, &bx).unwrap();
        assert!(r.ratio <= r.weight_sup + 1e-12 && (r.weight_sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compactness_singular_values() {
        let g = Grid::centered(1, 64, 0.25).unwrap();
        let centers = box_centers(1, 4.0, 9);
        let one = Weight::one(2);
        let same = compactness_diagnostic(&one, &one, &g, &centers).unwrap();
        assert!(same.iter().all(|s| (s - 1.0).abs() < 1e-8));
        let decay = parse_weight("subexp:r=-1,s=1", 2).unwrap();
        let sv = compactness_diagnostic(&one, &decay, &g, &centers).unwrap();
        assert!(sv.last().unwrap() / sv[0] <= 0.1, "{sv:?}");
        // a single probe: the norm quotient
        let s1 = compactness_diagnostic(&one, &decay, &g, &centers[..1]).unwrap();
        let v = crate::stft::stft(&gaussian(&g), &gaussian(&g)).unwrap();
        let b2 = QbfSpec::lebesgue(2.0, 2.0, 2).unwrap();
        let q = mixed_norm(&weighted_field(&v, &decay).unwrap(), &b2).unwrap() / mixed_norm(&BlockField::from_phase(&v), &b2).unwrap();
        assert!((s1[0] - q).abs() < 1e-10);
    }
}
