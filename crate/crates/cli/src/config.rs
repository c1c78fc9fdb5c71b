//! Line-oriented `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tfnorm_core::ensemble::{generate_ensemble, realize_all, EnsembleSpec};
use tfnorm_core::{Error, Grid, Result, Signal};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    /// Directory of the file, for resolving relative paths.
    base: Option<PathBuf>,
}

impl Config {
    /// Blank lines and lines starting with `#` are skipped. Keys may not repeat.
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        let cfg = Config { entries, base: None };
        cfg.seed()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(tfnorm_core::io::with_path(path))?;
        let mut cfg = Config::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.require("seed")
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get_str(key).unwrap_or(default)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value {v:?} for {key}"))),
        }
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Parse(format!("missing key {key}")))
    }

    /// Path value relative to the config file.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let p = PathBuf::from(self.get_str(key)?);
        Some(match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        })
    }

    /// `dim`, `n`, `h` (defaults 1, 32, 0.5).
    pub fn grid(&self) -> Result<Grid> {
        Grid::centered(self.or("dim", 1)?, self.or("n", 32)?, self.or("h", 0.5)?)
    }

    /// Grid with the same box and half the step.
    pub fn refined_grid(&self) -> Result<Grid> {
        let g = self.grid()?;
        Grid::centered(g.dim(), 2 * g.points_per_axis(), g.step() / 2.0)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec {
            dim: self.or("dim", 1)?,
            count: self.or("count", 8)?,
            radius: self.or("radius", 2.0)?,
            seed: self.seed()?,
        })
    }

    pub fn ensemble(&self, g: &Grid) -> Result<Vec<Signal>> {
        realize_all(&generate_ensemble(&self.ensemble_spec()?), g)
    }
}

/// Comma-separated floats with `inf` allowed.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| match t.trim() {
            "inf" => Ok(f64::INFINITY),
            t => t.parse().map_err(|_| Error::Parse(format!("bad number {t:?}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_requires_seed() {
        let c = Config::parse("# comment\nseed = 7\n\nbackend = Lpq:p=2,q=1\nn=64\n").unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.get_str("backend"), Some("Lpq:p=2,q=1"));
        assert_eq!(c.grid().unwrap().points_per_axis(), 64);
        assert_eq!(c.refined_grid().unwrap().points_per_axis(), 128);
        assert!(matches!(Config::parse("n = 3"), Err(Error::Parse(_))));
        assert!(matches!(Config::parse("seed = 1\nseed = 2"), Err(Error::Parse(_))));
        assert!(matches!(Config::parse("seed = x"), Err(Error::Parse(_))));
        assert!(matches!(Config::parse("seed 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("0.5, 1,inf").unwrap(), vec![0.5, 1.0, f64::INFINITY]);
        assert!(parse_list("1,,2").is_err());
    }
}
