//! End-to-end hazard fit: Breslow curve, increments on a grid, tuned fused
//! lasso, and back-transformation to the original time axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    breslow_fit, build_increments, choose_window, cox_fit, default_p_low, BreslowCurve, CoxFit,
    CoxOptions, IncrementSample, Window, DEFAULT_P_HIGH,
};
use crate::event_data::SurvivalFrame;
use crate::flsa::{flsa_solve, interpolate, FusedLassoFit, StepFunction};
use crate::tuning::{bootstrap_lambda, TuningConfig, TuningResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowPolicy {
    Explicit {
        window: Window,
    },
    /// Event-time quantiles; `p_low: None` picks 0, or 0.025 under left truncation.
    Quantiles {
        p_low: Option<f64>,
        p_high: f64,
    },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Quantiles {
            p_low: None,
            p_high: DEFAULT_P_HIGH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSource {
    /// Ignore covariates (Nelson-Aalen).
    #[default]
    None,
    Fit {
        options: CoxOptions,
    },
    Supplied {
        beta: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitConfig {
    pub window: WindowPolicy,
    /// Grid size `m`; the number of subjects when `None`.
    pub grid: Option<usize>,
    pub tuning: TuningConfig,
    pub beta: BetaSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardFit {
    /// Estimated hazard in original time units, negative levels set to 0.
    pub hazard: StepFunction,
    /// Same estimate before clamping.
    pub raw_hazard: StepFunction,
    pub window: Window,
    pub beta: Vec<f64>,
    pub cox: Option<CoxFit>,
    pub cumulative: BreslowCurve,
    pub increments: IncrementSample,
    pub fused: FusedLassoFit,
    pub tuning: TuningResult,
    /// `int_window hazard - (A(tau_max) - A(tau_min))`.
    pub integral_gap: f64,
    /// Grid cells `(t_{j-1}, t_j]` whose right end has an empty risk set.
    pub empty_risk_cells: usize,
}

impl HazardFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn resolve_beta(
    frame: &SurvivalFrame,
    source: &BetaSource,
) -> Result<(SurvivalFrame, Vec<f64>, Option<CoxFit>)> {
    match source {
        BetaSource::None => Ok((frame.without_covariates(), Vec::new(), None)),
        BetaSource::Supplied { beta } => {
            if beta.len() != frame.dim() {
                return Err(Error::Dimension {
                    expected: frame.dim(),
                    got: beta.len(),
                });
            }
            Ok((frame.clone(), beta.clone(), None))
        }
        BetaSource::Fit { options } => {
            let fit = cox_fit(frame, options)?;
            if !fit.converged {
                log::warn!(
                    "Cox fit did not converge after {} iterations; using the last iterate",
                    fit.iterations
                );
            }
            Ok((frame.clone(), fit.beta.clone(), Some(fit)))
        }
    }
}

/// Grid cells whose right end point has nobody at risk.
fn count_empty_risk_cells(frame: &SurvivalFrame, grid: &[f64]) -> usize {
    let mut entries: Vec<f64> = frame.records().iter().map(|r| r.entry_time()).collect();
    let mut exits: Vec<f64> = frame.records().iter().map(|r| r.time).collect();
    entries.sort_by(f64::total_cmp);
    exits.sort_by(f64::total_cmp);
    // at risk at t: entry < t <= time
    grid[1..]
        .iter()
        .filter(|&&t| entries.partition_point(|&e| e < t) <= exits.partition_point(|&x| x < t))
        .count()
}

fn clamp_merge(raw: &StepFunction) -> Result<StepFunction> {
    let mut breaks = Vec::new();
    let mut levels = vec![raw.levels[0].max(0.0)];
    for (b, l) in raw.breaks.iter().zip(&raw.levels[1..]) {
        let l = l.max(0.0);
        if l != *levels.last().unwrap() {
            breaks.push(*b);
            levels.push(l);
        }
    }
    StepFunction::new(raw.domain, breaks, levels)
}

pub fn fit_hazard(frame: &SurvivalFrame, config: &FitConfig) -> Result<HazardFit> {
    if frame.is_empty() {
        return Err(Error::InvalidArgument("empty survival frame".into()));
    }
    let (work, beta, cox) = resolve_beta(frame, &config.beta)?;
    let cumulative = breslow_fit(&work, &beta)?;

    let window = match &config.window {
        WindowPolicy::Explicit { window } => *window,
        WindowPolicy::Quantiles { p_low, p_high } => choose_window(
            frame,
            p_low.unwrap_or_else(|| default_p_low(frame)),
            *p_high,
        )?,
    };
    let m = config.grid.unwrap_or(frame.len());
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid size must be at least 2, got {m}"
        )));
    }
    let increments = build_increments(&cumulative, window, m)?;
    let empty_risk_cells = count_empty_risk_cells(frame, &increments.grid);
    if empty_risk_cells > 0 {
        log::warn!("{empty_risk_cells} grid cells in the window have an empty risk set; their increments are 0");
    }

    let tuning = bootstrap_lambda(&increments.y, &config.tuning)?;
    let fused = flsa_solve(&increments.y, tuning.lambda)?;
    let raw_hazard = interpolate(&fused, window)?;
    let hazard = clamp_merge(&raw_hazard)?;
    let integral_gap = hazard.integral_to(window.tau_max)
        - (cumulative.eval(window.tau_max) - cumulative.eval(window.tau_min));
    log::debug!(
        "lambda0 = {}, lambda = {}, integral gap = {integral_gap}",
        tuning.lambda0,
        tuning.lambda
    );

    Ok(HazardFit {
        hazard,
        raw_hazard,
        window,
        beta,
        cox,
        cumulative,
        increments,
        fused,
        tuning,
        integral_gap,
        empty_risk_cells,
    })
}

/// `alpha*(t_j) * scale` for `j = 1..m`: the true hazard on the grid, in the
/// units of the increments.
pub fn discretize_truth(truth: &StepFunction, window: Window, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    let scale = window.length();
    Ok((1..=m)
        .map(|j| truth.eval(window.grid_point(j, m)) * scale)
        .collect())
}
