//! Fused lasso as an ordinary lasso.
//!
//! Writing `alpha = X theta` with `X_ij = 1(i >= j)` turns the fusion penalty
//! into `lambda sum_{j>=2} |theta_j|`, with `theta_1` an unpenalised
//! intercept. Profiling the intercept out leaves a lasso on centred columns,
//! solved here by cyclic coordinate descent. This is an independent, slow
//! route to the same minimiser and is meant for checking small problems.

use serde::{Deserialize, Serialize};

use super::{check_input, FusedLassoFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop once no coefficient moves by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-13,
            max_sweeps: 500_000,
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Solves the fused lasso at `lambda` through the lasso reparametrisation.
pub fn reparametrized_check(
    y: &[f64],
    lambda: f64,
    options: &LassoOptions,
) -> Result<FusedLassoFit> {
    check_input(y, lambda)?;
    let n = y.len();
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    if n == 1 {
        return Ok(FusedLassoFit::from_alpha(vec![y[0]], lambda));
    }

    // column j (0-based, j >= 1) is 1(i >= j) - (n - j)/n
    let col = |j: usize, i: usize| -> f64 {
        let c = (n - j) as f64 / nf;
        if i >= j {
            1.0 - c
        } else {
            -c
        }
    };
    let norms: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 {
                0.0
            } else {
                (0..n).map(|i| col(j, i).powi(2)).sum()
            }
        })
        .collect();
    let threshold = nf * lambda / 2.0;

    let mut theta = vec![0.0; n];
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut converged = false;
    for _ in 0..options.max_sweeps {
        let mut biggest: f64 = 0.0;
        for j in 1..n {
            let rho: f64 = (0..n).map(|i| col(j, i) * resid[i]).sum::<f64>() + norms[j] * theta[j];
            let new = soft_threshold(rho, threshold) / norms[j];
            let delta = new - theta[j];
            if delta != 0.0 {
                for (i, r) in resid.iter_mut().enumerate() {
                    *r -= col(j, i) * delta;
                }
                theta[j] = new;
                biggest = biggest.max(delta.abs());
            }
        }
        if biggest <= options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "coordinate descent did not reach tol {} in {} sweeps",
            options.tol, options.max_sweeps
        )));
    }

    theta[0] = y_mean - (1..n).map(|j| (n - j) as f64 / nf * theta[j]).sum::<f64>();
    let alpha: Vec<f64> = theta
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    Ok(FusedLassoFit::from_alpha(alpha, lambda))
}
