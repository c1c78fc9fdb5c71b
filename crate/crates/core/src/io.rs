//! CSV persistence for signals and phase fields.
//!
//! A signal file starts with a sidecar comment describing its grid
//! (`# grid d=1 n=64 h=0.25 center=0`) followed by `index,re,im` rows in
//! storage order. Phase fields use `ix,ik,re,im`; the dual grid is implied by
//! the time grid so one sidecar covers both.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Grid, PhaseField, Signal};

/// The `# grid ...` sidecar line for `g`.
pub fn grid_sidecar(g: &Grid) -> String {
    let center: Vec<String> = g.center().iter().map(|c| format!("{c}")).collect();
    format!(
        "# grid d={} n={} h={} center={}",
        g.dim(),
        g.points_per_axis(),
        g.step(),
        center.join(",")
    )
}

/// Parse a sidecar line produced by [`grid_sidecar`].
pub fn parse_sidecar(line: &str) -> Result<Grid> {
    let body = line
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix("grid"))
        .ok_or_else(|| Error::Parse(format!("expected '# grid ...' sidecar, got {line:?}")))?;
    let (mut d, mut n, mut h, mut center) = (None, None, None, None);
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad sidecar token {tok:?}")))?;
        let bad = |_| Error::Parse(format!("bad value for {k}: {v:?}"));
        match k {
            "d" => d = Some(v.parse::<usize>().map_err(bad)?),
            "n" => n = Some(v.parse::<usize>().map_err(bad)?),
            "h" => h = Some(v.parse::<f64>().map_err(|_| Error::Parse(format!("bad h {v:?}")))?),
            "center" => {
                center = Some(
                    v.split(',')
                        .map(|c| c.parse::<f64>().map_err(|_| Error::Parse(format!("bad center {v:?}"))))
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            _ => return Err(Error::Parse(format!("unknown sidecar key {k:?}"))),
        }
    }
    let d = d.ok_or_else(|| Error::Parse("sidecar missing d".into()))?;
    let n = n.ok_or_else(|| Error::Parse("sidecar missing n".into()))?;
    let h = h.ok_or_else(|| Error::Parse("sidecar missing h".into()))?;
    let mut center = center.unwrap_or_else(|| vec![0.0; d]);
    if center.len() == 1 && d > 1 {
        center = vec![center[0]; d];
    }
    make_grid(d, n, h, &center)
}

fn split_header<R: Read>(r: R) -> Result<(Grid, String)> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let grid = parse_sidecar(&first)?;
    let mut rest = String::new();
    reader.read_to_string(&mut rest)?;
    Ok((grid, rest))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

pub fn write_signal<W: Write>(f: &Signal, mut w: W) -> Result<()> {
    writeln!(w, "{}", grid_sidecar(&f.grid))?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["index", "re", "im"])?;
    for (i, v) in f.values.iter().enumerate() {
        csv.write_record([i.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_signal<R: Read>(r: R) -> Result<Signal> {
    let (grid, body) = split_header(r)?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["index", "re", "im"] {
        return Err(Error::Parse(format!("expected header index,re,im, got {headers:?}")));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut seen = vec![false; grid.len()];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!("expected 3 fields, got {}", rec.len())));
        }
        let i: usize = rec[0].trim().parse().map_err(|_| Error::Parse(format!("bad index {:?}", &rec[0])))?;
        if i >= values.len() {
            return Err(Error::Parse(format!("index {i} out of range")));
        }
        values[i] = Complex64::new(parse_f64(&rec[1])?, parse_f64(&rec[2])?);
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("missing sample {i}")));
    }
    Signal::new(grid, values)
}

pub fn write_phase_field<W: Write>(f: &PhaseField, mut w: W) -> Result<()> {
    writeln!(w, "{}", grid_sidecar(&f.time_grid))?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["ix", "ik", "re", "im"])?;
    let m = f.freq_grid.len();
    for (i, v) in f.values.iter().enumerate() {
        csv.write_record([
            (i / m).to_string(),
            (i % m).to_string(),
            format!("{:e}", v.re),
            format!("{:e}", v.im),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_phase_field<R: Read>(r: R) -> Result<PhaseField> {
    let (grid, body) = split_header(r)?;
    let m = grid.len();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["ix", "ik", "re", "im"] {
        return Err(Error::Parse(format!("expected header ix,ik,re,im, got {headers:?}")));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); m * m];
    let mut seen = vec![false; m * m];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("expected 4 fields, got {}", rec.len())));
        }
        let ix: usize = rec[0].trim().parse().map_err(|_| Error::Parse(format!("bad ix {:?}", &rec[0])))?;
        let ik: usize = rec[1].trim().parse().map_err(|_| Error::Parse(format!("bad ik {:?}", &rec[1])))?;
        if ix >= m || ik >= m {
            return Err(Error::Parse(format!("index ({ix},{ik}) out of range")));
        }
        values[ix * m + ik] = Complex64::new(parse_f64(&rec[2])?, parse_f64(&rec[3])?);
        seen[ix * m + ik] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("missing sample ({}, {})", i / m, i % m)));
    }
    PhaseField::new(grid, values)
}

/// Attach the offending path to an io error.
pub fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn open(path: impl AsRef<Path>) -> Result<std::fs::File> {
    let path = path.as_ref();
    std::fs::File::open(path).map_err(with_path(path))
}

pub fn create(path: impl AsRef<Path>) -> Result<std::fs::File> {
    let path = path.as_ref();
    std::fs::File::create(path).map_err(with_path(path))
}

pub fn load_signal(path: impl AsRef<Path>) -> Result<Signal> {
    read_signal(open(path)?)
}

pub fn save_signal(f: &Signal, path: impl AsRef<Path>) -> Result<()> {
    write_signal(f, std::io::BufWriter::new(create(path)?))
}

pub fn load_phase_field(path: impl AsRef<Path>) -> Result<PhaseField> {
    read_phase_field(open(path)?)
}

pub fn save_phase_field(f: &PhaseField, path: impl AsRef<Path>) -> Result<()> {
    write_phase_field(f, std::io::BufWriter::new(create(path)?))
}
