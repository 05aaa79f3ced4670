//! Settings file and its merge with command-line flags.
//!
//! Precedence: flag (or `PCHAZARD_SEED` for the seed) > file > built-in default.

use std::path::Path;

use serde::Deserialize;

use pchazard::estimators::{CoxOptions, Window, DEFAULT_P_HIGH};
use pchazard::pipeline::{BetaSource, FitConfig, WindowPolicy};
use pchazard::TuningConfig;

use crate::UsageError;

/// Keys accepted in the `--config` TOML file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub q: Option<f64>,
    pub kmax: Option<usize>,
    #[serde(rename = "L")]
    pub l_boot: Option<usize>,
    pub seed: Option<u64>,
    pub window: Option<[f64; 2]>,
    pub p_low: Option<f64>,
    pub p_high: Option<f64>,
    pub grid: Option<usize>,
    pub beta: Option<Vec<f64>>,
    pub threads: Option<usize>,
    pub scenario: Option<Vec<String>>,
    pub n: Option<Vec<usize>>,
    pub reps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }
}

/// Fitting flags after merging with the file, before a seed is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub q: f64,
    pub k_max: usize,
    pub l_boot: usize,
    pub window: Option<[f64; 2]>,
    pub p_low: Option<f64>,
    pub p_high: f64,
    pub grid: Option<usize>,
    pub beta: Option<Vec<f64>>,
}

impl FitSettings {
    pub fn fit_config(&self, seed: u64, has_covariates: bool) -> anyhow::Result<FitConfig> {
        let window = match self.window {
            Some([a, b]) => WindowPolicy::Explicit {
                window: Window::new(a, b).map_err(|e| UsageError(format!("--window: {e}")))?,
            },
            None => WindowPolicy::Quantiles {
                p_low: self.p_low,
                p_high: self.p_high,
            },
        };
        let beta = match (&self.beta, has_covariates) {
            (Some(b), _) => BetaSource::Supplied { beta: b.clone() },
            (None, true) => BetaSource::Fit {
                options: CoxOptions::default(),
            },
            (None, false) => BetaSource::None,
        };
        let tuning = TuningConfig {
            q: self.q,
            k_max: self.k_max,
            l_boot: self.l_boot,
            seed,
        };
        tuning.validate()?;
        Ok(FitConfig {
            window,
            grid: self.grid,
            tuning,
            beta,
        })
    }
}

pub struct FitFlags<'a> {
    pub q: Option<f64>,
    pub kmax: Option<usize>,
    pub l_boot: Option<usize>,
    pub window: Option<&'a [f64]>,
    pub p_low: Option<f64>,
    pub p_high: Option<f64>,
    pub grid: Option<usize>,
    pub beta: Option<&'a [f64]>,
}

pub fn merge_fit(flags: FitFlags<'_>, file: &FileConfig) -> anyhow::Result<FitSettings> {
    let defaults = TuningConfig::default();
    let window = match flags.window {
        Some([a, b]) => Some([*a, *b]),
        Some(other) => {
            return Err(UsageError(format!(
                "--window needs two values tmin,tmax, got {}",
                other.len()
            ))
            .into())
        }
        None => file.window,
    };
    let p_high = flags.p_high.or(file.p_high).unwrap_or(DEFAULT_P_HIGH);
    let p_low = flags.p_low.or(file.p_low);
    for (name, p) in [("p-high", Some(p_high)), ("p-low", p_low)] {
        if let Some(p) = p {
            if !(0.0..=1.0).contains(&p) {
                return Err(UsageError(format!("--{name} must lie in [0, 1], got {p}")).into());
            }
        }
    }
    Ok(FitSettings {
        q: flags.q.or(file.q).unwrap_or(defaults.q),
        k_max: flags.kmax.or(file.kmax).unwrap_or(defaults.k_max),
        l_boot: flags.l_boot.or(file.l_boot).unwrap_or(defaults.l_boot),
        window,
        p_low,
        p_high,
        grid: flags.grid.or(file.grid),
        beta: flags
            .beta
            .map(<[f64]>::to_vec)
            .or_else(|| file.beta.clone()),
    })
}

/// The seed actually used. A fresh one is drawn and reported when none is given.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or(file.seed).unwrap_or_else(|| {
        let seed = rand::random::<u64>();
        eprintln!("seed: {seed} (drawn; pass --seed {seed} to repeat this run)");
        seed
    })
}
