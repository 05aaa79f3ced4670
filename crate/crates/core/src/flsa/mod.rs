//! One-dimensional fused lasso signal approximator.
//!
//! Solves
//!
//! ```text
//! minimize_a  (1/m) sum_j (y_j - a_j)^2  +  lambda sum_{j>=2} |a_j - a_{j-1}|
//! ```
//!
//! The `1/m` factor on the loss is kept so that `lambda` lives on the same
//! scale as the bootstrap tuning statistic in [`crate::tuning`]. Up to the
//! factor, this is total-variation denoising of `y` with weight `m lambda / 2`.
//!
//! Two exact routes are provided: [`flsa_solve`] runs a linear-time dynamic
//! program for one `lambda`, and [`FusedPath`] tracks every fusion event over
//! `lambda in [0, inf)`. They share no code.

mod bound;
mod path;
mod reparam;
mod step;

pub use bound::{elementwise_bound_check, elementwise_bounds, max_partial_sum_kappa};
pub use path::{flsa_path, FusedPath, PathBreakpoint};
pub use reparam::{reparametrized_check, LassoOptions};
pub use step::{interpolate, StepFunction};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A maximal run of equal fitted values; `start..=end` are 0-based positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub level: f64,
}

impl Block {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedLassoFit {
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub blocks: Vec<Block>,
    /// Grid indices `J` in `2..=m` (1-based, like `t_J`) where the fitted
    /// value at `t_J` differs from the one at `t_{J-1}`.
    pub changepoints: Vec<usize>,
}

impl FusedLassoFit {
    pub fn from_alpha(alpha: Vec<f64>, lambda: f64) -> Self {
        let mut blocks: Vec<Block> = Vec::new();
        for (j, &a) in alpha.iter().enumerate() {
            match blocks.last_mut() {
                Some(b) if b.level == a => b.end = j,
                _ => blocks.push(Block {
                    start: j,
                    end: j,
                    level: a,
                }),
            }
        }
        let changepoints = blocks.iter().skip(1).map(|b| b.start + 1).collect();
        FusedLassoFit {
            lambda,
            alpha,
            blocks,
            changepoints,
        }
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn changepoint_count(&self) -> usize {
        self.changepoints.len()
    }
}

fn check_input(y: &[f64], lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty response vector".into()));
    }
    if let Some(j) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite response at position {j}"
        )));
    }
    Ok(())
}

/// Exact fused lasso fit at one `lambda`.
pub fn flsa_solve(y: &[f64], lambda: f64) -> Result<FusedLassoFit> {
    check_input(y, lambda)?;
    let m = y.len();
    let alpha = polish(y, tv_denoise(y, m as f64 * lambda / 2.0), lambda);
    Ok(FusedLassoFit::from_alpha(alpha, lambda))
}

/// Snaps runs that the DP left a few ulps apart onto one level, then sets
/// every run to `mean(y_B) + m lambda (sigma_r - sigma_l) / (2 |B|)`.
/// Keeps the raw DP output if that would reorder neighbouring runs.
fn polish(y: &[f64], alpha: Vec<f64>, lambda: f64) -> Vec<f64> {
    let m = y.len();
    let mf = m as f64;
    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs())) + mf * lambda;
    let tol = 1e-12 * scale;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for j in 0..m {
        match runs.last_mut() {
            Some(r) if (alpha[j] - alpha[j - 1]).abs() <= tol => r.1 = j,
            _ => runs.push((j, j)),
        }
    }
    let sign = |a: f64, b: f64| -> f64 {
        if b > a {
            1.0
        } else {
            -1.0
        }
    };
    let levels: Vec<f64> = runs
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| {
            let len = (e - s + 1) as f64;
            let sigma_l = if k > 0 {
                sign(alpha[runs[k - 1].1], alpha[s])
            } else {
                0.0
            };
            let sigma_r = if k + 1 < runs.len() {
                sign(alpha[e], alpha[runs[k + 1].0])
            } else {
                0.0
            };
            y[s..=e].iter().sum::<f64>() / len + lambda * mf * (sigma_r - sigma_l) / (2.0 * len)
        })
        .collect();
    let consistent = levels
        .windows(2)
        .enumerate()
        .all(|(k, w)| sign(alpha[runs[k].1], alpha[runs[k + 1].0]) * (w[1] - w[0]) > 0.0);
    if !consistent {
        return alpha;
    }
    let mut out = alpha;
    for (&(s, e), &c) in runs.iter().zip(&levels) {
        out[s..=e].fill(c);
    }
    out
}

/// `(1/m) sum (y - a)^2 + lambda sum |a_j - a_{j-1}|`.
pub fn objective(y: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    let m = y.len() as f64;
    let loss: f64 = y
        .iter()
        .zip(alpha)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / m;
    let tv: f64 = alpha.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    loss + lambda * tv
}

/// Largest violation of the optimality conditions by `alpha`.
///
/// With `v_1 = 0` and `v_{j+1} = v_j + (2/m)(a_j - y_j)`, `alpha` is optimal iff
/// `v_{m+1} = 0`, `v_j = lambda sign(a_j - a_{j-1})` across every jump, and
/// `|v_j| <= lambda` inside fused runs. Summed over a run, this says
/// `(2/m) sum_run (c - y_j) = lambda (sigma_right - sigma_left)`.
pub fn kkt_violation(y: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    let m = y.len() as f64;
    let mut v = 0.0;
    let mut worst: f64 = 0.0;
    for j in 0..y.len() {
        if j > 0 {
            let dev = if alpha[j] > alpha[j - 1] {
                (v - lambda).abs()
            } else if alpha[j] < alpha[j - 1] {
                (v + lambda).abs()
            } else {
                (v.abs() - lambda).max(0.0)
            };
            worst = worst.max(dev);
        }
        v += 2.0 / m * (alpha[j] - y[j]);
    }
    worst.max(v.abs())
}

/// Smallest `lambda` at which the fit is a single constant: the largest
/// partial-sum deviation `(2/m) max_k |sum_{j<=k} (y_j - mean)|`.
pub fn saturation_lambda(y: &[f64]) -> f64 {
    let m = y.len() as f64;
    let mean = y.iter().sum::<f64>() / m;
    let mut run = 0.0;
    let mut best: f64 = 0.0;
    for v in &y[..y.len().saturating_sub(1)] {
        run += v - mean;
        best = best.max(run.abs());
    }
    2.0 / m * best
}

/// Dynamic program for `min 0.5 sum (y - b)^2 + weight sum |b_i - b_{i-1}|`.
///
/// The derivative of the optimal partial objective (as a function of the last
/// coordinate) is piecewise linear; it is stored as knots `x` with slope and
/// intercept increments `a`, `b` in a window `lo..=hi` of a buffer of size
/// `2n`. Each step clips it to `[-weight, weight]` and records the two clip
/// points, which become the back-pointers `b_i = clamp(b_{i+1}, lower_i, upper_i)`.
fn tv_denoise(y: &[f64], weight: f64) -> Vec<f64> {
    let n = y.len();
    if n <= 1 || weight == 0.0 {
        return y.to_vec();
    }
    let mut x = vec![0.0; 2 * n];
    let mut a = vec![0.0; 2 * n];
    let mut b = vec![0.0; 2 * n];
    let mut lower = vec![0.0; n - 1];
    let mut upper = vec![0.0; n - 1];

    lower[0] = y[0] - weight;
    upper[0] = y[0] + weight;
    let mut l = n - 1;
    let mut r = n;
    x[l] = lower[0];
    x[r] = upper[0];
    a[l] = 1.0;
    b[l] = -y[0] + weight;
    a[r] = -1.0;
    b[r] = y[0] + weight;
    let mut a_first = 1.0;
    let mut b_first = -y[1] - weight;
    let mut a_last = -1.0;
    let mut b_last = y[1] - weight;

    for k in 1..n - 1 {
        // walk up from the left end until the derivative exceeds -weight
        let (mut a_lo, mut b_lo) = (a_first, b_first);
        let mut lo = l;
        while lo <= r {
            if a_lo * x[lo] + b_lo > -weight {
                break;
            }
            a_lo += a[lo];
            b_lo += b[lo];
            lo += 1;
        }
        lower[k] = (-weight - b_lo) / a_lo;
        l = lo - 1;
        x[l] = lower[k];

        // walk down from the right end until the derivative drops below weight
        let (mut a_hi, mut b_hi) = (a_last, b_last);
        let mut hi = r as isize;
        while hi >= lo as isize {
            let h = hi as usize;
            if -a_hi * x[h] - b_hi < weight {
                break;
            }
            a_hi += a[h];
            b_hi += b[h];
            hi -= 1;
        }
        upper[k] = (weight + b_hi) / (-a_hi);
        r = (hi + 1) as usize;
        x[r] = upper[k];

        a[l] = a_lo;
        b[l] = b_lo + weight;
        a[r] = a_hi;
        b[r] = b_hi + weight;
        a_first = 1.0;
        b_first = -y[k + 1] - weight;
        a_last = -1.0;
        b_last = y[k + 1] - weight;
    }

    // last coordinate: zero of the derivative
    let (mut a_lo, mut b_lo) = (a_first, b_first);
    let mut lo = l;
    while lo <= r {
        if a_lo * x[lo] + b_lo > 0.0 {
            break;
        }
        a_lo += a[lo];
        b_lo += b[lo];
        lo += 1;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = -b_lo / a_lo;
    for k in (0..n - 1).rev() {
        let next = out[k + 1];
        out[k] = if next > upper[k] {
            upper[k]
        } else if next < lower[k] {
            lower[k]
        } else {
            next
        };
    }
    out
}
