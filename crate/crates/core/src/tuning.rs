//! Data-driven choice of the fused lasso penalty.
//!
//! The penalty is set to a high quantile of the lasso's effective noise
//! `U_n`, approximated by a multiplier bootstrap on the residuals of a pilot
//! fit. The pilot is the least-penalised fit with at most `k_max` change
//! points.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::type1_quantile;
use crate::flsa::{flsa_solve, FusedPath};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    /// Quantile level, in `(0, 1)`.
    pub q: f64,
    pub k_max: usize,
    /// Bootstrap replicates `L`.
    pub l_boot: usize,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            q: 0.9,
            k_max: 20,
            l_boot: 1000,
            seed: 0,
        }
    }
}

impl TuningConfig {
    /// Settings used by the simulation study (`L = 100`).
    pub fn simulation(seed: u64) -> Self {
        TuningConfig {
            l_boot: 100,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "q must lie in (0, 1), got {}",
                self.q
            )));
        }
        if self.l_boot == 0 {
            return Err(Error::InvalidArgument(
                "bootstrap size L must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub lambda0: f64,
    pub lambda: f64,
    pub q: f64,
    pub k_max: usize,
    pub seed: u64,
    /// Bootstrap statistics `U^(1) .. U^(L)` in replicate order.
    pub u_boot: Vec<f64>,
    /// Pilot residuals `y - alpha_hat(lambda0)`.
    pub residuals: Vec<f64>,
}

/// Smallest `lambda` whose fit has at most `k_max` change points.
pub fn pilot_lambda(y: &[f64], k_max: usize) -> Result<f64> {
    Ok(FusedPath::new(y)?.min_lambda_for_count(k_max))
}

/// `U_n = 2 max_{2<=j<=n} | -(1/n) sum_{i<j} u_i + ((j-1)/n^2) sum_i u_i |`.
pub fn effective_noise(u: &[f64]) -> Result<f64> {
    let n = u.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "effective noise needs at least 2 values, got {n}"
        )));
    }
    Ok(max_statistic(u))
}

fn max_statistic(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let total: f64 = u.iter().sum();
    let mut partial = 0.0;
    let mut best: f64 = 0.0;
    for (i, v) in u[..u.len() - 1].iter().enumerate() {
        partial += v;
        // j = i + 2, so j - 1 = i + 1 values are summed
        let stat = -partial / n + (i + 1) as f64 / (n * n) * total;
        best = best.max(stat.abs());
    }
    2.0 * best
}

/// Multiplier-bootstrap choice of `lambda` for the increments `y`.
pub fn bootstrap_lambda(y: &[f64], config: &TuningConfig) -> Result<TuningResult> {
    config.validate()?;
    if y.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "tuning needs at least 2 increments, got {}",
            y.len()
        )));
    }
    if config.k_max + 1 >= y.len() {
        log::warn!(
            "k_max = {} allows a change point at every one of the {} increments; the pilot fit is unpenalised",
            config.k_max,
            y.len()
        );
    }
    let lambda0 = pilot_lambda(y, config.k_max)?;
    let pilot = flsa_solve(y, lambda0)?;
    let residuals: Vec<f64> = y.iter().zip(&pilot.alpha).map(|(a, b)| a - b).collect();

    let u_boot: Vec<f64> = (0..config.l_boot)
        .into_par_iter()
        .map(|l| {
            let mut rng = substream(config.seed, l as u64);
            let draw: Vec<f64> = residuals
                .iter()
                .map(|r| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    r * e
                })
                .collect();
            max_statistic(&draw)
        })
        .collect();

    let mut sorted = u_boot.clone();
    sorted.sort_by(f64::total_cmp);
    let lambda = type1_quantile(&sorted, config.q);
    Ok(TuningResult {
        lambda0,
        lambda,
        q: config.q,
        k_max: config.k_max,
        seed: config.seed,
        u_boot,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_noise() {
        assert_eq!(effective_noise(&[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(effective_noise(&[0.0; 7]).unwrap(), 0.0);
        assert!(effective_noise(&[1.0]).is_err());
    }

    #[test]
    fn pilot_for_two_points() {
        assert_eq!(pilot_lambda(&[0.0, 1.0], 0).unwrap(), 0.5);
        assert_eq!(pilot_lambda(&[0.0, 1.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn piecewise_constant_input_gives_zero_lambda() {
        let y = [1.0, 1.0, 1.0, 3.0, 3.0, 0.5, 0.5, 0.5];
        let res = bootstrap_lambda(
            &y,
            &TuningConfig {
                l_boot: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(res.lambda0, 0.0);
        assert_eq!(res.lambda, 0.0);
        assert!(res.u_boot.iter().all(|&u| u == 0.0));
        assert_eq!(flsa_solve(&y, res.lambda).unwrap().alpha, y.to_vec());
    }

    #[test]
    fn quantile_is_ceiling_order_statistic() {
        let y: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let cfg = TuningConfig {
            l_boot: 1000,
            k_max: 3,
            seed: 11,
            ..Default::default()
        };
        let res = bootstrap_lambda(&y, &cfg).unwrap();
        let mut s = res.u_boot.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(res.lambda, s[899]);
        assert_eq!(res, bootstrap_lambda(&y, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let y = [0.0, 1.0, 2.0];
        assert!(bootstrap_lambda(
            &y,
            &TuningConfig {
                q: 1.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(bootstrap_lambda(
            &y,
            &TuningConfig {
                l_boot: 0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
