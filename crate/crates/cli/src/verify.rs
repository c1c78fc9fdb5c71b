//! The acceptance suite behind `tfnorm verify`. Every check measures one
//! quantity and compares it with a fixed tolerance.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tfnorm_core::ensemble::{box_centers, generate_ensemble, parse_window, realize_all, EnsembleSpec, Recipe};
use tfnorm_core::grid::{gaussian, mass_outside_estimate, shifted_gaussian};
use tfnorm_core::lattice::{Axis, Lattice};
use tfnorm_core::modspace::{compactness_diagnostic, equivalence_report, refinement_change};
use tfnorm_core::psido::{
    kernel_from_symbol, lifting_check, quantization_convert, rank_one_defect, toeplitz_matrix, toeplitz_weyl_symbol,
    OperatorMatrix, Quantization, SymbolField, SymbolRecipe,
};
use tfnorm_core::spaces::{mixed_norm, parse_qbf, wiener_norm, BlockField, QbfSpec, WienerSpec};
use tfnorm_core::stft::{moyal_defect, reconstruction_defect, stft, window_projection, window_projection_conv};
use tfnorm_core::tfconv::{conv_identity_defect, mult_identity_defect, theta_conv, twisted_conv, twisted_conv_kappa2, ConvBlock, PhaseKernel};
use tfnorm_core::{parse_weight, Grid, PhaseField, Result, Signal, Weight};

use crate::certify::{certify, Theorem};
use crate::config::Config;
use crate::report::Check;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Smaller ensembles and a reduced equivalence table.
    pub quick: bool,
    /// Directory holding the certificate configs.
    pub certs: PathBuf,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 42, quick: false, certs: PathBuf::from("certs") }
    }
}

pub const CRITERIA: std::ops::RangeInclusive<u32> = 1..=12;

/// Run one criterion. Errors become failing rows.
pub fn run_criterion(k: u32, opts: &VerifyOptions) -> Vec<Check> {
    let rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(1000).wrapping_add(k as u64));
    let res = match k {
        1 => gaussian_closed_form(rng),
        2 => moyal(rng, opts),
        3 => reconstruction(opts),
        4 => equivalence(opts),
        5 => wiener_ordering(rng, opts),
        6 => conv_mult_identities(rng),
        7 => convolutions(rng),
        8 => quantization(rng, opts),
        9 => toeplitz_routes(),
        10 => certificates(&opts.certs),
        11 => compactness(),
        12 => lifting(opts),
        _ => return vec![Check::failed(k, "unknown criterion", &k)],
    };
    res.unwrap_or_else(|e| vec![Check::failed(k, "computation", &e)])
}

pub fn run_all(opts: &VerifyOptions) -> Vec<Check> {
    CRITERIA.flat_map(|k| run_criterion(k, opts)).collect()
}

fn grid128() -> Result<Grid> {
    Grid::centered(1, 128, 0.25)
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    // NaN propagates so that a broken measurement fails its check
    xs.into_iter().fold(0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

fn random_atom(rng: &mut ChaCha8Rng, radius: f64) -> Recipe {
    Recipe::atom(
        &[rng.gen_range(-radius..=radius)],
        &[rng.gen_range(-radius..=radius)],
        rng.gen_range(0.7..1.4),
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    )
}

fn gaussian_closed_form(mut rng: ChaCha8Rng) -> Result<Vec<Check>> {
    let g = grid128()?;
    let phi = gaussian(&g);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (x0, xi0) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let v = stft(&shifted_gaussian(&g, &[x0], &[xi0]), &phi)?;
        let lat = v.lattice();
        for (i, z) in v.values.iter().enumerate() {
            let c = lat.coords_vec(i);
            let want = (2.0 * PI).powf(-0.5) * (-((c[0] - x0).powi(2) + (c[1] - xi0).powi(2)) / 4.0).exp();
            worst = max_of([worst, (z.norm() - want).abs()]);
        }
    }
    Ok(vec![Check::upper(1, "gaussian stft modulus, 5 shifts", worst, 1e-6)])
}

fn moyal(mut rng: ChaCha8Rng, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let g = grid128()?;
    let count = if opts.quick { 5 } else { 20 };
    let mut worst: f64 = 0.0;
    let mut leak: f64 = 0.0;
    for _ in 0..count {
        let s: Vec<Signal> = (0..4).map(|_| random_atom(&mut rng, 2.0).realize(&g)).collect::<Result<_>>()?;
        leak = max_of(s.iter().map(mass_outside_estimate).chain([leak]));
        worst = max_of([worst, moyal_defect(&s[0], &s[1], &s[2], &s[3])?]);
    }
    Ok(vec![
        Check::upper(2, "truncation budget", leak, 1e-8),
        Check::upper(2, format!("moyal defect, {count} quadruples"), worst, 1e-8),
    ])
}

fn reconstruction(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let g = grid128()?;
    let count = if opts.quick { 4 } else { 11 };
    let ens = realize_all(&generate_ensemble(&EnsembleSpec { dim: 1, count, radius: 2.0, seed: opts.seed }), &g)?;
    let phi = gaussian(&g);
    let worst = max_of(ens.iter().map(|f| reconstruction_defect(f, &phi)).collect::<Result<Vec<_>>>()?);
    Ok(vec![Check::upper(3, format!("reconstruction defect, gaussian + {} signals", count - 1), worst, 1e-5)])
}

fn equivalence(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let recipes = generate_ensemble(&EnsembleSpec { dim: 1, count: 10, radius: 2.0, seed: opts.seed });
    let windows = ["gauss", "gauss:dilate=2", "gauss:shift=1"];
    let (backends, weights): (&[&str], &[&str]) = if opts.quick {
        (&["Lpq:p=2,q=1"], &["poly:s=1"])
    } else {
        (&["Lpq:p=1,q=1", "Lpq:p=2,q=1", "Lpq:p=0.5,q=0.5"], &["const", "poly:s=1", "subexp:r=0.5,s=1"])
    };
    let grids = [Grid::centered(1, 128, 0.25)?, Grid::centered(1, 256, 0.125)?];
    let mut out = Vec::new();
    for b in backends {
        for w in weights {
            let backend = parse_qbf(b, 2)?;
            let weight = parse_weight(w, 2)?;
            let rs = [backend.r0(), 1.0, f64::INFINITY];
            let reps = grids
                .iter()
                .map(|g| {
                    let ens = realize_all(&recipes, g)?;
                    let ws = windows.iter().map(|s| parse_window(s, 1)?.realize(g)).collect::<Result<Vec<_>>>()?;
                    equivalence_report(&ens, &ws, &rs, &weight, &backend, (1.0, 1.0))
                })
                .collect::<Result<Vec<_>>>()?;
            let finite = reps.iter().all(|r| r.all_finite());
            let ch = refinement_change(&reps[0], &reps[1]);
            out.push(Check::upper(
                4,
                format!("cross-ratio refinement change {b} {w}"),
                if finite { ch } else { f64::INFINITY },
                0.05,
            ));
        }
    }
    Ok(out)
}

fn random_block_field(rng: &mut ChaCha8Rng) -> Result<BlockField> {
    let lat = Lattice::new(vec![Axis::centered(16, 0.25, 0.0), Axis::centered(16, 0.25, 0.0)]);
    let vals = (0..lat.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    BlockField::new(lat, 1, vals)
}

fn wiener_ordering(mut rng: ChaCha8Rng, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let seq = QbfSpec::lebesgue(2.0, 1.0, 2)?;
    let rs = [0.5, 1.0, 2.0, f64::INFINITY];
    let specs = rs
        .iter()
        .map(|&r| WienerSpec::new(r, r, (1.0, 1.0), Weight::one(2), seq.clone()))
        .collect::<Result<Vec<_>>>()?;
    let count = if opts.quick { 10 } else { 50 };
    let (mut mono, mut sandwich) = (0usize, 0usize);
    for _ in 0..count {
        let f = random_block_field(&mut rng)?;
        let ns = specs.iter().map(|s| wiener_norm(&f, s)).collect::<Result<Vec<_>>>()?;
        mono += ns.windows(2).filter(|p| !(p[0] <= p[1])).count();
        if !(mixed_norm(&f, &seq)? <= ns[rs.len() - 1]) {
            sandwich += 1;
        }
    }
    Ok(vec![
        Check::upper(5, format!("wiener monotonicity violations, {count} fields"), mono as f64, 0.0),
        Check::upper(5, format!("mixed <= wiener(inf) violations, {count} fields"), sandwich as f64, 0.0),
    ])
}

/// Convolution needs a wide box and multiplication a fine step, so each
/// identity gets its own 128-point grid.
fn conv_mult_identities(mut rng: ChaCha8Rng) -> Result<Vec<Check>> {
    let shifts: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
    let defect = |h: f64, which: fn(&Signal, &Signal, &Signal, &Signal) -> Result<f64>| -> Result<f64> {
        let g = Grid::centered(1, 128, h)?;
        let phi = gaussian(&g);
        let mut ens = vec![phi.clone()];
        ens.extend(shifts.iter().map(|&(x, xi)| shifted_gaussian(&g, &[x], &[xi])));
        let mut worst: f64 = 0.0;
        for f in &ens {
            for k in &ens {
                worst = max_of([worst, which(f, k, &phi, &phi)?]);
            }
        }
        Ok(worst)
    };
    Ok(vec![
        Check::upper(6, "stft convolution identity, h = 0.25", defect(0.25, conv_identity_defect)?, 1e-5),
        Check::upper(6, "stft multiplication identity, h = 0.125", defect(0.125, mult_identity_defect)?, 1e-5),
    ])
}

fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> Result<PhaseField> {
    let n = g.len() * g.len();
    PhaseField::new(g.clone(), (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
}

/// `h sum_y F(x - y, xi) G(y, xi)` over the centred grid, zero outside.
fn time_conv_oracle(f: &PhaseField, g: &PhaseField) -> Vec<C64> {
    let n = f.time_grid.points_per_axis();
    let h = f.time_grid.step();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let src = i as isize - j as isize + (n / 2) as isize;
            if src < 0 || src >= n as isize {
                continue;
            }
            for k in 0..n {
                out[i * n + k] += f.values[src as usize * n + k] * g.values[j * n + k] * h;
            }
        }
    }
    out
}

fn rel_max_diff(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let d = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if scale == 0.0 { d } else { d / scale }
}

fn convolutions(mut rng: ChaCha8Rng) -> Result<Vec<Check>> {
    let small = Grid::centered(1, 16, 0.5)?;
    let (mut zero, mut kappa) = (0.0f64, 0.0f64);
    for _ in 0..3 {
        let f = random_field(&small, &mut rng)?;
        let g = random_field(&small, &mut rng)?;
        let got = theta_conv(&f, &g, &PhaseKernel::Zero, ConvBlock::Time)?;
        zero = max_of([zero, rel_max_diff(&got.values, &time_conv_oracle(&f, &g))]);
        let k2 = twisted_conv_kappa2(&f, &g)?;
        kappa = max_of([kappa, rel_max_diff(&twisted_conv(&f, &g)?.values, &k2.values)]);
    }
    let g = grid128()?;
    let phi1 = gaussian(&g);
    let phi2 = shifted_gaussian(&g, &[0.5], &[-0.5]);
    let (mut routes, mut repro) = (0.0f64, 0.0f64);
    for _ in 0..2 {
        let big_f = PhaseField::from_fn(&g, |x, xi| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (-(x[0] * x[0] + xi[0] * xi[0]) / 2.0).exp()
        });
        let a = window_projection(&big_f, &phi1, &phi2)?;
        let b = window_projection_conv(&big_f, &phi1, &phi2)?;
        routes = max_of([routes, a.rel_distance(&b)]);
        let f = shifted_gaussian(&g, &[rng.gen_range(-2.0..2.0)], &[rng.gen_range(-2.0..2.0)]);
        let v = stft(&f, &phi1)?;
        repro = max_of([repro, window_projection(&v, &phi1, &phi1)?.max_abs_diff(&v)]);
    }
    Ok(vec![
        Check::upper(7, "theta = 0 convolution vs direct sum", zero, 1e-10),
        Check::upper(7, "twisted convolution kappa1 vs kappa2", kappa, 1e-10),
        Check::upper(7, "window projection operator vs twisted route", routes, 1e-8),
        Check::upper(7, "projection reproduces stft", repro, 1e-6),
    ])
}

fn quantization(mut rng: ChaCha8Rng, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g = Grid::centered(1, 32, 0.5)?;
    let one = SymbolRecipe::One.realize(&g);
    let id = OperatorMatrix::identity(&g);
    for name in ["kn", "weyl", "I"] {
        let k = kernel_from_symbol(&SymbolField::new(one.clone(), Quantization::parse(name, 1)?)?)?;
        out.push(Check::upper(8, format!("Op_{name}(1) vs identity"), k.rel_distance(&id)?, 1e-8));
    }
    let (kn, weyl) = (Quantization::kohn_nirenberg(1), Quantization::weyl(1));
    let mut conv: f64 = 0.0;
    for _ in 0..3 {
        let (x0, xi0) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let a = PhaseField::from_fn(&g, |x, xi| {
            (C64::new(1.0, 0.0) + c * x[0]) * (-((x[0] - x0).powi(2) + (xi[0] - xi0).powi(2)) / 2.0).exp()
        });
        let s = SymbolField::new(a, kn.clone())?;
        let w = quantization_convert(&s, &weyl)?;
        conv = max_of([conv, kernel_from_symbol(&w)?.rel_distance(&kernel_from_symbol(&s)?)?]);
    }
    out.push(Check::upper(8, "kohn-nirenberg to weyl kernel change", conv, 1e-6));
    let gr = Grid::centered(1, 128, 0.2)?;
    let pairs = if opts.quick { 1 } else { 3 };
    let mut rank: f64 = 0.0;
    for _ in 0..pairs {
        let f1 = random_atom(&mut rng, 1.0).realize(&gr)?;
        let f2 = random_atom(&mut rng, 1.0).realize(&gr)?;
        for q in [Quantization::kohn_nirenberg(1), Quantization::weyl(1), Quantization::identity(1)] {
            rank = max_of([rank, rank_one_defect(&f1, &f2, &q)?]);
        }
    }
    out.push(Check::upper(8, "rank-one wigner identity", rank, 1e-6));
    Ok(out)
}

fn toeplitz_routes() -> Result<Vec<Check>> {
    let g = Grid::centered(1, 32, 0.5)?;
    let a = SymbolRecipe::Gaussian(1.0).realize(&g);
    let phi1 = gaussian(&g);
    let mut out = Vec::new();
    for w2 in ["gauss", "gauss:shift=0.5,freq=0.5", "gauss:dilate=1.5"] {
        let phi2 = parse_window(w2, 1)?.realize(&g)?;
        let direct = toeplitz_matrix(&a, &phi1, &phi2)?;
        let weyl = kernel_from_symbol(&toeplitz_weyl_symbol(&a, &phi1, &phi2)?)?;
        out.push(Check::upper(9, format!("toeplitz direct vs weyl, window2 {w2}"), weyl.rel_distance(&direct)?, 1e-5));
    }
    Ok(out)
}

/// All `*.cfg` files in `dir`, sorted by name.
pub fn cert_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    v.sort();
    Ok(v)
}

fn certificates(dir: &Path) -> Result<Vec<Check>> {
    let files = cert_configs(dir)?;
    let mut out = vec![Check::lower(10, "certificate configs", files.len() as f64, 3.0)];
    for p in files {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let rows = Config::load(&p).and_then(|cfg| {
            let t = Theorem::parse(cfg.str_or("theorem", ""))?;
            certify(t, &cfg, 10, &format!("{name}: "))
        });
        match rows {
            Ok(r) => out.extend(r),
            Err(e) => out.push(Check::failed(10, name, &e)),
        }
    }
    Ok(out)
}

fn compactness() -> Result<Vec<Check>> {
    let g = Grid::centered(1, 64, 0.25)?;
    let centers = box_centers(1, 4.0, 9);
    let ratio = |w1: &Weight, w2: &Weight| -> Result<f64> {
        let sv = compactness_diagnostic(w1, w2, &g, &centers)?;
        Ok(sv.last().copied().unwrap_or(f64::NAN) / sv.first().copied().unwrap_or(f64::NAN))
    };
    let w1 = parse_weight("poly:s=1", 2)?;
    let decay = parse_weight("prod(poly:s=1,subexp:r=-1,s=1)", 2)?;
    Ok(vec![
        Check::upper(11, "sigma_last / sigma_first, w2/w1 = e^-|X|", ratio(&w1, &decay)?, 0.1),
        Check::lower(11, "sigma_last / sigma_first, w2 = w1", ratio(&w1, &w1)?, 0.5),
    ])
}

fn lifting(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let w0 = parse_weight("poly:s=2", 2)?;
    let backend = QbfSpec::lebesgue(2.0, 2.0, 2)?;
    let recipes = generate_ensemble(&EnsembleSpec { dim: 1, count: 8, radius: 2.0, seed: opts.seed });
    let reps = [Grid::centered(1, 32, 0.5)?, Grid::centered(1, 64, 0.25)?]
        .iter()
        .map(|g| lifting_check(&w0, &gaussian(g), &Weight::one(2), &backend, &realize_all(&recipes, g)?))
        .collect::<Result<Vec<_>>>()?;
    let change = |a: f64, b: f64| if a.is_finite() && b.is_finite() { (b / a - 1.0).abs() } else { f64::INFINITY };
    Ok(vec![
        Check::upper(12, "condition number, n = 32", reps[0].condition, 1e8),
        Check::finite(12, "forward norm", reps[0].forward_norm),
        Check::finite(12, "inverse norm", reps[0].inverse_norm),
        Check::upper(12, "forward norm refinement change", change(reps[0].forward_norm, reps[1].forward_norm), 0.1),
        Check::upper(12, "inverse norm refinement change", change(reps[0].inverse_norm, reps[1].inverse_norm), 0.1),
    ])
}
