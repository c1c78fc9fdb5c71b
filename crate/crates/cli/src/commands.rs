//! Subcommands.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use tfnorm_core::ensemble::{generate_ensemble, parse_window, realize_all, EnsembleSpec};
use tfnorm_core::io::{load_phase_field, load_signal, save_phase_field, write_signal};
use tfnorm_core::modspace::{equivalence_report, modulation_norm, parse_mod_space, ModSpec};
use tfnorm_core::psido::{apply_op, kernel_from_symbol, toeplitz_matrix, toeplitz_weyl_symbol, Quantization, SymbolField};
use tfnorm_core::spaces::parse_qbf;
use tfnorm_core::stft::stft;
use tfnorm_core::tfconv::{
    classical_conv_certificate, conv_identity_defect, mod_conv_certificate, mod_mult_certificate,
    mult_identity_defect, wiener_young_certificate, ClassicalSetup, ConvCertificate, ModSetup, PhaseKernel,
    YoungSetup,
};
use tfnorm_core::{parse_weight, Error, Grid, Result, ScanBox, Signal};

use crate::certify::{certify, Theorem};
use crate::config::{parse_list, Config};
use crate::report::{fmt_num, write_checks, write_plain, Check};
use crate::verify::{run_criterion, VerifyOptions, CRITERIA};

#[derive(Debug, Parser)]
#[command(name = "tfnorm", version, about = "Time-frequency norms, operators and certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lemma {
    AssistConv,
    AssistMult,
    Young,
    ModConv,
    ModMult,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Direct,
    Weyl,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Short-time Fourier transform of a signal.
    Stft {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "gauss")]
        window: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Modulation space norm of a signal.
    Norm {
        #[arg(long = "in")]
        input: PathBuf,
        /// e.g. `M:w=poly:s=1,B=Lpq:p=2,q=1`
        #[arg(long)]
        space: String,
        #[arg(long, default_value = "gauss")]
        window: String,
    },
    /// Cross-ratios of the equivalent norms over an ensemble.
    Equiv {
        /// Directory of signal CSV files; generated from `--seed` when absent.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 0.25)]
        h: f64,
        #[arg(long, default_value = "gauss,gauss:dilate=2")]
        windows: String,
        /// Local exponents; `r0` stands for the backend order.
        #[arg(long, default_value = "r0,1,inf")]
        rs: String,
        #[arg(long, default_value = "M:w=const,B=Lpq:p=2,q=1")]
        space: String,
        /// Cell side of the amalgam partition.
        #[arg(long, default_value_t = 1.0)]
        side: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Empirical constants of the convolution and multiplication estimates.
    ConvCert {
        #[arg(long, value_enum)]
        lemma: Lemma,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply a pseudo-differential operator.
    Psido {
        #[arg(long)]
        symbol: PathBuf,
        /// `kn`, `weyl`, `I` or a number.
        #[arg(long = "A", default_value = "weyl")]
        quant: String,
        #[arg(long)]
        apply: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Toeplitz (localization) operator, directly or through its Weyl symbol.
    Toeplitz {
        #[arg(long)]
        symbol: PathBuf,
        #[arg(long, default_value = "gauss")]
        w1: String,
        #[arg(long, default_value = "gauss")]
        w2: String,
        #[arg(long, value_enum, default_value = "direct")]
        route: Route,
        #[arg(long)]
        apply: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundedness and lifting certificates from a config file.
    Certify {
        #[arg(long)]
        theorem: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Verify {
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "certs")]
        certs: PathBuf,
        /// Comma-separated subset of criteria.
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(tfnorm_core::io::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(checks: &[Check], path: Option<&Path>, with_criterion: bool) -> Result<bool> {
    let mut w = output(path)?;
    if with_criterion {
        write_checks(checks, &mut w)?;
    } else {
        write_plain(checks, &mut w)?;
    }
    w.flush()?;
    Ok(checks.iter().all(Check::pass))
}

/// Split a window list at commas that start a new `gauss` entry.
fn split_windows(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in s.split(',') {
        match out.last_mut() {
            Some(last) if !part.trim().starts_with("gauss") => {
                last.push(',');
                last.push_str(part);
            }
            _ => out.push(part.trim().to_string()),
        }
    }
    out
}

fn load_ensemble(dir: &Path) -> Result<Vec<Signal>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).map_err(tfnorm_core::io::with_path(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files.iter().map(load_signal).collect()
}

pub fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Stft { input, window, out } => {
            let f = load_signal(&input)?;
            let phi = parse_window(&window, f.grid.dim())?.realize(&f.grid)?;
            save_phase_field(&stft(&f, &phi)?, &out)?;
            Ok(true)
        }
        Command::Norm { input, space, window } => {
            let f = load_signal(&input)?;
            let (w, b) = parse_mod_space(&space, f.grid.dim())?;
            let phi = parse_window(&window, f.grid.dim())?.realize(&f.grid)?;
            println!("{}", modulation_norm(&f, &ModSpec::new(w, b, phi)?)?);
            Ok(true)
        }
        Command::Equiv { ensemble, seed, count, radius, n, h, windows, rs, space, side, report } => {
            let ens = match (&ensemble, seed) {
                (Some(dir), _) => load_ensemble(dir)?,
                (None, Some(seed)) => {
                    let g = Grid::centered(1, n, h)?;
                    realize_all(&generate_ensemble(&EnsembleSpec { dim: 1, count, radius, seed }), &g)?
                }
                (None, None) => return Err(Error::Parse("equiv needs --ensemble or --seed".into())),
            };
            let Some(first) = ens.first() else {
                return Err(Error::Parse("empty ensemble".into()));
            };
            let g = first.grid.clone();
            let (w, b) = parse_mod_space(&space, g.dim())?;
            let rs = rs
                .split(',')
                .map(|t| if t.trim() == "r0" { Ok(b.r0()) } else { parse_list(t).map(|v| v[0]) })
                .collect::<Result<Vec<_>>>()?;
            let ws = split_windows(&windows)
                .iter()
                .map(|s| parse_window(s, g.dim())?.realize(&g))
                .collect::<Result<Vec<_>>>()?;
            let rep = equivalence_report(&ens, &ws, &rs, &w, &b, (side, side))?;
            let mut out = output(report.as_deref())?;
            writeln!(out, "key,min,max")?;
            for (k, c) in &rep.ratios {
                writeln!(out, "{k},{},{}", fmt_num(c.min), fmt_num(c.max))?;
            }
            out.flush()?;
            Ok(rep.all_finite())
        }
        Command::ConvCert { lemma, config, report } => {
            let cfg = Config::load(&config)?;
            finish(&conv_cert(lemma, &cfg)?, report.as_deref(), false)
        }
        Command::Psido { symbol, quant, apply, out } => {
            let a = load_phase_field(&symbol)?;
            let q = Quantization::parse(&quant, a.dim())?;
            let f = load_signal(&apply)?;
            let g = apply_op(&SymbolField::new(a, q)?, &f)?;
            let mut w = output(out.as_deref())?;
            write_signal(&g, &mut w)?;
            w.flush()?;
            Ok(true)
        }
        Command::Toeplitz { symbol, w1, w2, route, apply, out } => {
            let a = load_phase_field(&symbol)?;
            let g = a.time_grid.clone();
            let phi1 = parse_window(&w1, g.dim())?.realize(&g)?;
            let phi2 = parse_window(&w2, g.dim())?.realize(&g)?;
            let direct = || toeplitz_matrix(&a, &phi1, &phi2);
            let weyl = || kernel_from_symbol(&toeplitz_weyl_symbol(&a, &phi1, &phi2)?);
            let op = match route {
                Route::Direct => direct()?,
                Route::Weyl => weyl()?,
                Route::Both => {
                    let (d, w) = (direct()?, weyl()?);
                    println!("route_distance,{}", fmt_num(w.rel_distance(&d)?));
                    d
                }
            };
            if let Some(p) = apply {
                let r = op.apply(&load_signal(&p)?)?;
                let mut w = output(out.as_deref())?;
                write_signal(&r, &mut w)?;
                w.flush()?;
            }
            Ok(true)
        }
        Command::Certify { theorem, config, report } => {
            let cfg = Config::load(&config)?;
            let checks = certify(Theorem::parse(&theorem)?, &cfg, 0, "")?;
            finish(&checks, report.as_deref(), false)
        }
        Command::Verify { quick, seed, certs, only, report } => {
            let opts = VerifyOptions { seed, quick, certs };
            let ks: Vec<u32> = match only {
                Some(s) => s
                    .split(',')
                    .map(|t| t.trim().parse().ok().filter(|k| CRITERIA.contains(k)))
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::Parse(format!("bad criterion list {s:?}")))?,
                None => CRITERIA.collect(),
            };
            let mut checks = Vec::new();
            for k in ks {
                let rows = run_criterion(k, &opts);
                let ok = rows.iter().all(Check::pass);
                eprintln!("criterion {k:>2}: {}", if ok { "pass" } else { "FAIL" });
                checks.extend(rows);
            }
            finish(&checks, report.as_deref(), true)
        }
    }
}

fn weights3(cfg: &Config, d2: usize) -> Result<[tfnorm_core::Weight; 3]> {
    Ok([
        parse_weight(cfg.str_or("w0", "const"), d2)?,
        parse_weight(cfg.str_or("w1", "const"), d2)?,
        parse_weight(cfg.str_or("w2", "const"), d2)?,
    ])
}

fn conv_cert(lemma: Lemma, cfg: &Config) -> Result<Vec<Check>> {
    let grids = [cfg.grid()?, cfg.refined_grid()?];
    let d = grids[0].dim();
    let tol = cfg.or("refine_tol", 0.1)?;
    let mut out = Vec::new();
    if matches!(lemma, Lemma::AssistConv | Lemma::AssistMult) {
        let g = &grids[0];
        let ens = cfg.ensemble(g)?;
        let phi = parse_window(cfg.str_or("window1", "gauss"), d)?.realize(g)?;
        let psi = parse_window(cfg.str_or("window2", "gauss"), d)?.realize(g)?;
        let mut worst: f64 = 0.0;
        for f in &ens {
            for h in &ens {
                let v = match lemma {
                    Lemma::AssistConv => conv_identity_defect(f, h, &phi, &psi)?,
                    _ => mult_identity_defect(f, h, &phi, &psi)?,
                };
                worst = worst.max(v);
            }
        }
        out.push(Check::upper(0, "identity defect", worst, cfg.or("tol", 1e-5)?));
        return Ok(out);
    }
    let scan = ScanBox::new(3 * d, cfg.or("scan_half_width", 2.0)?, cfg.or("scan_points", 4)?)?;
    let w = weights3(cfg, 2 * d)?;
    let v = parse_weight(cfg.str_or("v", "const"), 2 * d)?;
    let backend = || parse_qbf(cfg.str_or("backend", "Lpq:p=2,q=2"), 2 * d);
    let run = |g: &Grid| -> Result<ConvCertificate> {
        let ens = cfg.ensemble(g)?;
        match lemma {
            Lemma::Young => {
                let phi = tfnorm_core::grid::gaussian(g);
                let fs = ens.iter().map(|f| stft(f, &phi)).collect::<Result<Vec<_>>>()?;
                let side = cfg.or("side", 1.0)?;
                let s = YoungSetup {
                    p: [cfg.or("p0", 1.0)?, cfg.or("p1", 1.0)?, cfg.or("p2", 1.0)?],
                    w: w.clone(),
                    v: v.clone(),
                    backend: backend()?,
                    sides: (side, side),
                    kernel: PhaseKernel::Zero,
                    scan: scan.clone(),
                };
                wiener_young_certificate(&fs, &fs, &s)
            }
            Lemma::ModConv | Lemma::ModMult => {
                let s = ModSetup { w: w.clone(), v: v.clone(), backend: backend()?, scan: scan.clone() };
                if lemma == Lemma::ModConv {
                    mod_conv_certificate(&ens, &ens, &s)
                } else {
                    mod_mult_certificate(&ens, &ens, &s)
                }
            }
            _ => {
                let pq = |k: usize| -> Result<(f64, f64)> {
                    Ok((cfg.or(&format!("p{k}"), 2.0)?, cfg.or(&format!("q{k}"), 2.0)?))
                };
                let s = ClassicalSetup { pq: [pq(0)?, pq(1)?, pq(2)?], w: w.clone(), scan: scan.clone() };
                classical_conv_certificate(&ens, &ens, &s)
            }
        }
    };
    let c = run(&grids[0])?;
    let f = run(&grids[1])?;
    out.push(Check::finite(0, "weight constant", if c.supported { c.weight.constant } else { f64::INFINITY }));
    out.push(Check::finite(0, "constant coarse", c.constant));
    out.push(Check::finite(0, "constant fine", f.constant));
    out.push(Check::upper(0, "constant refinement change", (f.constant / c.constant - 1.0).abs(), tol));
    Ok(out)
}
