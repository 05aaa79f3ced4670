//! Deterministic elementwise error bound for the fused lasso.
//!
//! If every normalised partial sum of the noise `u = y - alpha*` is at most
//! `kappa` in absolute value, then for each position `j`
//!
//! ```text
//! |alpha_hat_j - alpha*_j| <= max{ kappa / sqrt(d_j),
//!                                  kappa^2 / (4 m lambda),
//!                                  2 m lambda / r + 2 kappa / sqrt(r) }
//! ```
//!
//! where `r` is the length of the constant stretch of `alpha*` containing `j`
//! and `d_j` the distance from `j` to the nearer end of that stretch.
//! Evaluating both sides gives a falsification test for any solver.

use super::FusedLassoFit;
use crate::error::{Error, Result};

/// Absolute slack for floating-point error in the fitted values.
const SLACK: f64 = 1e-9;

/// `max_{k <= l} |sum_{j=k..l} u_j| / sqrt(l - k + 1)`, in `O(m^2)`.
pub fn max_partial_sum_kappa(u: &[f64]) -> f64 {
    let mut prefix = Vec::with_capacity(u.len() + 1);
    prefix.push(0.0);
    for v in u {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut best: f64 = 0.0;
    for k in 0..u.len() {
        for l in k..u.len() {
            let s = prefix[l + 1] - prefix[k];
            best = best.max(s.abs() / ((l - k + 1) as f64).sqrt());
        }
    }
    best
}

/// Right-hand side of the bound at every position, for noise level `kappa`.
pub fn elementwise_bounds(truth: &[f64], kappa: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bound needs lambda > 0, got {lambda}"
        )));
    }
    let m = truth.len();
    let mf = m as f64;
    // 1-based jump indices n_0 = 1 < n_1 < ... < n_K < n_{K+1} = m + 1
    let mut jumps = vec![1usize];
    jumps.extend((2..=m).filter(|&j| truth[j - 2] != truth[j - 1]));
    jumps.push(m + 1);

    let mut out = Vec::with_capacity(m);
    let mut seg = 0;
    for j in 1..=m {
        while jumps[seg + 1] <= j {
            seg += 1;
        }
        let (lo, hi) = (jumps[seg], jumps[seg + 1]);
        let d = (j + 1 - lo).min(hi - j) as f64;
        let r = (hi - lo) as f64;
        let b = (kappa / d.sqrt())
            .max(kappa * kappa / (4.0 * mf * lambda))
            .max(2.0 * mf * lambda / r + 2.0 * kappa / r.sqrt());
        out.push(b);
    }
    Ok(out)
}

/// Whether `fit` (computed from `y`) satisfies the bound against `truth`.
pub fn elementwise_bound_check(y: &[f64], fit: &FusedLassoFit, truth: &[f64]) -> Result<bool> {
    let m = y.len();
    if fit.m() != m {
        return Err(Error::Dimension {
            expected: m,
            got: fit.m(),
        });
    }
    if truth.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: truth.len(),
        });
    }
    let u: Vec<f64> = y.iter().zip(truth).map(|(a, b)| a - b).collect();
    let kappa = max_partial_sum_kappa(&u);
    let bounds = elementwise_bounds(truth, kappa, fit.lambda)?;
    Ok(fit
        .alpha
        .iter()
        .zip(truth)
        .zip(&bounds)
        .all(|((a, t), b)| (a - t).abs() <= b + SLACK * (1.0 + b)))
}
