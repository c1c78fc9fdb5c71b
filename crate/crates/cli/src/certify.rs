//! Boundedness certificates driven by config files, evaluated on a grid and
//! on its refinement (same box, half the step).

use tfnorm_core::ensemble::parse_window;
use tfnorm_core::psido::{
    lifting_check, psido_bound_certificate, toeplitz_bound_certificate, PsidoSetup, Quantization, SymbolField,
    SymbolRecipe, ToeplitzSetup,
};
use tfnorm_core::spaces::parse_qbf;
use tfnorm_core::{parse_weight, Error, Grid, Result, ScanBox, Signal, Weight};

use crate::config::Config;
use crate::report::Check;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    PseudoCont2,
    ToeplitzCont,
    Lifting,
}

impl Theorem {
    pub fn parse(s: &str) -> Result<Theorem> {
        match s.trim() {
            "pseudocont2" => Ok(Theorem::PseudoCont2),
            "toeplitz-cont" => Ok(Theorem::ToeplitzCont),
            "lifting" => Ok(Theorem::Lifting),
            t => Err(Error::Parse(format!("unknown theorem {t:?}"))),
        }
    }
}

fn weight(cfg: &Config, key: &str, default: &str, dim: usize) -> Result<Weight> {
    parse_weight(cfg.str_or(key, default), dim)
}

fn scan(cfg: &Config, dim: usize) -> Result<ScanBox> {
    ScanBox::new(dim, cfg.or("scan_half_width", 2.0)?, cfg.or("scan_points", 3)?)
}

fn window(cfg: &Config, key: &str, g: &Grid) -> Result<Signal> {
    parse_window(cfg.str_or(key, "gauss"), g.dim())?.realize(g)
}

fn change(a: f64, b: f64) -> f64 {
    (b / a - 1.0).abs()
}

/// Rows shared by all theorems: an empirical constant on both grids and its
/// relative change.
fn refinement_rows(out: &mut Vec<Check>, criterion: u32, prefix: &str, label: &str, coarse: f64, fine: f64, tol: f64) {
    out.push(Check::finite(criterion, format!("{prefix}{label} coarse"), coarse));
    out.push(Check::finite(criterion, format!("{prefix}{label} fine"), fine));
    out.push(Check::upper(criterion, format!("{prefix}{label} refinement change"), change(coarse, fine), tol));
}

/// Run the certificate described by `cfg`. Row names start with `prefix`.
pub fn certify(theorem: Theorem, cfg: &Config, criterion: u32, prefix: &str) -> Result<Vec<Check>> {
    if let Some(t) = cfg.get_str("theorem") {
        if Theorem::parse(t)? != theorem {
            return Err(Error::Parse(format!("config is for theorem {t:?}")));
        }
    }
    let grids = [cfg.grid()?, cfg.refined_grid()?];
    let d = grids[0].dim();
    let backend = parse_qbf(cfg.str_or("backend", "Lpq:p=2,q=2"), 2 * d)?;
    let tol = cfg.or("refine_tol", 0.1)?;
    let mut out = Vec::new();
    match theorem {
        Theorem::PseudoCont2 => {
            let recipe = SymbolRecipe::parse(cfg.str_or("symbol", "one"), d)?;
            let quant = Quantization::parse(cfg.str_or("quant", "kn"), d)?;
            let setup = PsidoSetup {
                w0: weight(cfg, "w0", "const", 4 * d)?,
                w1: weight(cfg, "w1", "const", 2 * d)?,
                w2: weight(cfg, "w2", "const", 2 * d)?,
                backend,
                scan: scan(cfg, 4 * d)?,
            };
            let certs = grids
                .iter()
                .map(|g| psido_bound_certificate(&SymbolField::new(recipe.realize(g), quant.clone())?, &setup, &cfg.ensemble(g)?))
                .collect::<Result<Vec<_>>>()?;
            let [c, f] = [&certs[0], &certs[1]];
            out.push(weight_row(criterion, prefix, c.weight.constant, c.supported));
            out.push(Check::finite(criterion, format!("{prefix}symbol norm"), c.symbol_norm));
            refinement_rows(&mut out, criterion, prefix, "op ratio", c.op_ratio, f.op_ratio, tol);
            out.push(Check::finite(criterion, format!("{prefix}op constant"), c.op_constant));
        }
        Theorem::ToeplitzCont => {
            let recipe = SymbolRecipe::parse(cfg.str_or("symbol", "one"), d)?;
            let setup = ToeplitzSetup {
                w: weight(cfg, "w", "const", 4 * d)?,
                w1: weight(cfg, "w1", "const", 2 * d)?,
                w2: weight(cfg, "w2", "const", 2 * d)?,
                theta1: weight(cfg, "theta1", "const", 2 * d)?,
                theta2: weight(cfg, "theta2", "const", 2 * d)?,
                backend,
                q: cfg.or("q", f64::INFINITY)?,
                r: cfg.or("r", 1.0)?,
                scan: scan(cfg, 6 * d)?,
            };
            let certs = grids
                .iter()
                .map(|g| {
                    let (p1, p2) = (window(cfg, "window1", g)?, window(cfg, "window2", g)?);
                    toeplitz_bound_certificate(&recipe.realize(g), &p1, &p2, &setup, &cfg.ensemble(g)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let [c, f] = [&certs[0], &certs[1]];
            out.push(weight_row(criterion, prefix, c.weight.constant, c.supported));
            out.push(Check::finite(criterion, format!("{prefix}symbol norm"), c.symbol_norm));
            out.push(Check::finite(criterion, format!("{prefix}window norm product"), c.window_norms.0 * c.window_norms.1));
            refinement_rows(&mut out, criterion, prefix, "op ratio", c.op_ratio, f.op_ratio, tol);
            out.push(Check::finite(criterion, format!("{prefix}op constant"), c.op_constant));
        }
        Theorem::Lifting => {
            let w0 = weight(cfg, "w0", "poly:s=2", 2 * d)?;
            let w = weight(cfg, "w", "const", 2 * d)?;
            let reps = grids
                .iter()
                .map(|g| lifting_check(&w0, &window(cfg, "window", g)?, &w, &backend, &cfg.ensemble(g)?))
                .collect::<Result<Vec<_>>>()?;
            let [c, f] = [&reps[0], &reps[1]];
            out.push(Check::upper(criterion, format!("{prefix}condition number"), c.condition, cfg.or("max_condition", 1e8)?));
            refinement_rows(&mut out, criterion, prefix, "forward norm", c.forward_norm, f.forward_norm, tol);
            refinement_rows(&mut out, criterion, prefix, "inverse norm", c.inverse_norm, f.inverse_norm, tol);
            out.push(Check::finite(criterion, format!("{prefix}symbol norm (advisory)"), c.symbol_norm));
            out.push(Check::finite(criterion, format!("{prefix}window norm (advisory)"), c.window_norm));
        }
    }
    Ok(out)
}

fn weight_row(criterion: u32, prefix: &str, constant: f64, supported: bool) -> Check {
    // an unsupported scan reports an infinite constant
    let v = if supported { constant } else { f64::INFINITY };
    Check::finite(criterion, format!("{prefix}weight constant"), v)
}
