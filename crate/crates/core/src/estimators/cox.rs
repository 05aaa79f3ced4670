//! Low-dimensional Cox partial likelihood, Breslow ties, Newton-Raphson with
//! step halving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::risk_sets::event_times;
use crate::error::{Error, Result};
use crate::event_data::SurvivalFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    /// Max-norm tolerance on the score.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// `||beta||_inf` beyond which the likelihood is treated as monotone.
    pub divergence_guard: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            divergence_guard: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub log_partial_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Log partial likelihood, score and (negated) information at `beta`.
pub struct PartialLikelihood {
    pub value: f64,
    pub score: Vec<f64>,
    /// Observed information `-d^2 l / d beta^2`, row-major.
    pub information: Vec<f64>,
}

pub fn partial_likelihood(frame: &SurvivalFrame, beta: &[f64]) -> Result<PartialLikelihood> {
    let d = frame.dim();
    let weights = frame.risk_weights(beta)?;
    let mut value = 0.0;
    let mut score = vec![0.0; d];
    let mut info = vec![0.0; d * d];
    for et in event_times(frame, &weights, true) {
        let dk = et.events as f64;
        let lin: f64 = et.event_cov_sum.iter().zip(beta).map(|(a, b)| a * b).sum();
        value += lin - dk * et.s0.ln();
        let mean: Vec<f64> = et.s1.iter().map(|s| s / et.s0).collect();
        for a in 0..d {
            score[a] += et.event_cov_sum[a] - dk * mean[a];
            for b in 0..d {
                info[a * d + b] += dk * (et.s2[a * d + b] / et.s0 - mean[a] * mean[b]);
            }
        }
    }
    Ok(PartialLikelihood {
        value,
        score,
        information: info,
    })
}

pub fn cox_fit(frame: &SurvivalFrame, options: &CoxOptions) -> Result<CoxFit> {
    let d = frame.dim();
    if d == 0 {
        return Err(Error::InvalidArgument(
            "Cox fit needs at least one covariate; use an empty coefficient vector instead".into(),
        ));
    }
    if frame.event_count() == 0 {
        return Err(Error::Degenerate("Cox fit needs at least one event".into()));
    }

    let mut beta = vec![0.0; d];
    let mut current = partial_likelihood(frame, &beta)?;
    let mut iterations = 0;
    let mut last_step: f64 = 0.0;
    let max_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    loop {
        let grad_small = max_norm(&current.score) <= options.tol;
        let info = DMatrix::from_row_slice(d, d, &current.information);
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&DVector::from_column_slice(&current.score)));

        let step = match step {
            Some(s) => s,
            None => {
                // Singular information: converged only on a flat score that was not
                // reached by a large step, e.g. a covariate constant across subjects.
                // Under separation the information underflows to zero while beta
                // is still moving.
                let settled = last_step <= 1e-6 * (1.0 + max_norm(&beta));
                return Ok(CoxFit {
                    beta,
                    log_partial_likelihood: current.value,
                    iterations,
                    converged: grad_small && settled,
                });
            }
        };
        let step_norm = step.amax();
        if grad_small && step_norm <= 1e-6 * (1.0 + max_norm(&beta)) {
            return Ok(CoxFit {
                beta,
                log_partial_likelihood: current.value,
                iterations,
                converged: true,
            });
        }
        if iterations >= options.max_iter {
            break;
        }
        iterations += 1;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let eval = partial_likelihood(frame, &cand)?;
            if eval.value.is_finite() && eval.value >= current.value - 1e-12 * current.value.abs() {
                accepted = Some((cand, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, eval)) = accepted else {
            break;
        };
        last_step = beta
            .iter()
            .zip(&cand)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = cand;
        current = eval;
        if max_norm(&beta) > options.divergence_guard {
            log::warn!(
                "Cox fit: |beta| exceeded {}; likelihood appears monotone",
                options.divergence_guard
            );
            break;
        }
    }
    Ok(CoxFit {
        beta,
        log_partial_likelihood: current.value,
        iterations,
        converged: false,
    })
}
