//! Run configuration: a `key=value` file overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

/// Flags shared by every subcommand. Each can also be set in the config file
/// under the same name (`no-boundary = true`).
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Mask file, text grid or JSON
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Scalar field CSV, top row first
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Polygon JSON for the decomposition figure
    #[arg(long)]
    pub polygon: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Side of the verification sample grid
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver pipeline: lp, lp-small or linf
    #[arg(long)]
    pub mode: Option<String>,
    /// Use the raw strip map instead of the boundary-corrected one
    #[arg(long)]
    pub no_boundary: bool,
    /// Also write SVG figures
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mask: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub polygon: Option<PathBuf>,
    pub tau: f64,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub eps: Option<f64>,
    pub grid: usize,
    pub tol: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub mode: String,
    pub no_boundary: bool,
    pub svg: bool,
}

pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(jacforge::Error::Parse { line: k + 1, msg: format!("expected key=value, found {line:?}") });
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parsed<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match file.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| jacforge::Error::InvalidInput(format!("config key {key}: cannot parse {v:?}")).into()),
    }
}

impl RunConfig {
    pub fn resolve(flags: &Flags, config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let known = [
            "mask", "field", "polygon", "tau", "p", "q", "delta", "eps", "grid", "tol", "seed", "out", "mode",
            "no-boundary", "svg",
        ];
        if let Some(k) = file.keys().find(|k| !known.contains(&k.as_str())) {
            bail!(jacforge::Error::InvalidInput(format!("unknown config key {k:?}")));
        }
        let cfg = Self {
            mask: flags.mask.clone().or(parsed(&file, "mask")?),
            field: flags.field.clone().or(parsed(&file, "field")?),
            polygon: flags.polygon.clone().or(parsed(&file, "polygon")?),
            tau: flags.tau.or(parsed(&file, "tau")?).unwrap_or(0.1),
            p: flags.p.or(parsed(&file, "p")?).unwrap_or(3.0),
            q: flags.q.or(parsed(&file, "q")?).unwrap_or(1.5),
            delta: flags.delta.or(parsed(&file, "delta")?).unwrap_or(0.1),
            eps: flags.eps.or(parsed(&file, "eps")?),
            grid: flags.grid.or(parsed(&file, "grid")?).unwrap_or(128),
            tol: flags.tol.or(parsed(&file, "tol")?),
            seed: flags.seed.or(parsed(&file, "seed")?).unwrap_or(1),
            out: flags.out.clone().or(parsed(&file, "out")?).unwrap_or_else(|| PathBuf::from(".")),
            mode: flags.mode.clone().or(parsed(&file, "mode")?).unwrap_or_else(|| "lp".into()),
            no_boundary: flags.no_boundary || parsed(&file, "no-boundary")?.unwrap_or(false),
            svg: flags.svg || parsed(&file, "svg")?.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| -> Result<()> { bail!(jacforge::Error::InvalidInput(m)) };
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.grid < 64 {
            return bad(format!("grid must be at least 64, got {}", self.grid));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if let Some(e) = self.eps {
            if !(e >= 0.0) {
                return bad(format!("eps must be nonnegative, got {e}"));
            }
        }
        if !["lp", "lp-small", "linf"].contains(&self.mode.as_str()) {
            return bad(format!("mode must be lp, lp-small or linf, got {:?}", self.mode));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("jacforge-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "# comment\ntau = 0.05\ngrid=256\nsvg = true\n").unwrap();
        let flags = Flags { tau: Some(0.2), ..Default::default() };
        let cfg = RunConfig::resolve(&flags, Some(&path)).unwrap();
        assert_eq!(cfg.tau, 0.2);
        assert_eq!(cfg.grid, 256);
        assert!(cfg.svg);
        std::fs::write(&path, "tau 0.05\n").unwrap();
        assert!(RunConfig::resolve(&Flags::default(), Some(&path)).is_err());
        std::fs::write(&path, "colour = red\n").unwrap();
        assert!(RunConfig::resolve(&Flags::default(), Some(&path)).is_err());
    }
}
