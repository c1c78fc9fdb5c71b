//! Check rows and their CSV rendering.

use std::io::Write;

use tfnorm_core::Result;

/// How a measured value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// `measured <= tolerance`.
    Upper,
    /// `measured >= tolerance`.
    Lower,
    /// `measured` finite; the tolerance column is informational.
    Finite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: u32,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl Check {
    pub fn upper(criterion: u32, name: impl Into<String>, measured: f64, tolerance: f64) -> Check {
        Check { criterion, name: name.into(), measured, tolerance, bound: Bound::Upper }
    }

    pub fn lower(criterion: u32, name: impl Into<String>, measured: f64, tolerance: f64) -> Check {
        Check { criterion, name: name.into(), measured, tolerance, bound: Bound::Lower }
    }

    pub fn finite(criterion: u32, name: impl Into<String>, measured: f64) -> Check {
        Check { criterion, name: name.into(), measured, tolerance: f64::INFINITY, bound: Bound::Finite }
    }

    /// A failed computation recorded as a failing row.
    pub fn failed(criterion: u32, name: impl Into<String>, err: &dyn std::fmt::Display) -> Check {
        Check { criterion, name: format!("{} ({err})", name.into()), measured: f64::NAN, tolerance: f64::NAN, bound: Bound::Finite }
    }

    pub fn pass(&self) -> bool {
        match self.bound {
            Bound::Upper => self.measured <= self.tolerance,
            Bound::Lower => self.measured >= self.tolerance,
            Bound::Finite => self.measured.is_finite(),
        }
    }
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.6e}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const HEADER: &str = "criterion,name,measured,tolerance,pass";

/// Rows with the leading `criterion` column, as written by `verify`.
pub fn write_checks<W: Write>(checks: &[Check], w: W) -> Result<()> {
    write_rows(checks, true, w)
}

/// Rows without the criterion column, for standalone certificates.
pub fn write_plain<W: Write>(checks: &[Check], w: W) -> Result<()> {
    write_rows(checks, false, w)
}

fn write_rows<W: Write>(checks: &[Check], with_criterion: bool, mut w: W) -> Result<()> {
    let header = if with_criterion { HEADER } else { &HEADER["criterion,".len()..] };
    writeln!(w, "{header}")?;
    for c in checks {
        if with_criterion {
            write!(w, "{},", c.criterion)?;
        }
        writeln!(w, "{},{},{},{}", csv_field(&c.name), fmt_num(c.measured), fmt_num(c.tolerance), c.pass())?;
    }
    Ok(())
}

pub fn render(checks: &[Check]) -> String {
    let mut buf = Vec::new();
    write_checks(checks, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii report")
}
