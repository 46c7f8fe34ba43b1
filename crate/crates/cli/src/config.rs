//! Run configuration: command-line flags layered over an optional JSON file
//! layered over built-in defaults.

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    Factorized,
    Particle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Geometric,
    ItoEulerProjected,
}

impl From<SchemeChoice> for landau_core::brownian::Scheme {
    fn from(s: SchemeChoice) -> Self {
        match s {
            SchemeChoice::Geometric => Self::Geometric,
            SchemeChoice::ItoEulerProjected => Self::ItoEulerProjected,
        }
    }
}

/// Every tunable, all optional so that the three layers can be merged.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Dimension N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Initial law: `isotropic`, `line:e<k>` or `aniso:a,b,...`.
    #[arg(long)]
    pub law: Option<String>,
    /// Kinetic energy of the initial law.
    #[arg(long)]
    pub energy: Option<f64>,
    /// Time or comma-separated list of times.
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    /// Starting point, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Evaluation points, `;`-separated list of comma-separated vectors.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Half width of the cubic evaluation grid (density).
    #[arg(long)]
    pub grid_half_width: Option<f64>,
    /// Points per axis of the cubic evaluation grid (density).
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Number of Monte Carlo paths (or particles for the particle sampler).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Time steps per path.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Step size for grid-based estimators.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Master seed (required for randomized commands).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerChoice>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeChoice>,
    /// Upper end of the degenerate small-time regime.
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { $($f: $hi.$f.clone().or_else(|| $lo.$f.clone()),)* }
    };
}

impl Settings {
    /// Fields of `self` win over those of `lower`.
    pub fn over(&self, lower: &Settings) -> Settings {
        layer!(
            self,
            lower,
            n,
            law,
            energy,
            t,
            x0,
            v,
            grid_half_width,
            grid_points,
            paths,
            steps,
            dt,
            seed,
            format,
            output,
            sampler,
            scheme,
            tmax,
            threads
        )
    }

    pub fn load(path: &std::path::Path) -> Result<Settings, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

/// Parses `"1,0,0;0,1,0"` into vectors.
pub fn parse_points(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad coordinate '{x}': {e}"))).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let flags = Settings { n: Some(4), ..Default::default() };
        let file = Settings { n: Some(3), paths: Some(10), ..Default::default() };
        let defaults = Settings { n: Some(2), paths: Some(1), seed: Some(5), ..Default::default() };
        let s = flags.over(&file.over(&defaults));
        assert_eq!((s.n, s.paths, s.seed), (Some(4), Some(10), Some(5)));
    }

    #[test]
    fn points_parse() {
        assert_eq!(parse_points("1,0;0, -2").unwrap(), vec![vec![1.0, 0.0], vec![0.0, -2.0]]);
        assert!(parse_points("1,x").is_err());
    }
}
