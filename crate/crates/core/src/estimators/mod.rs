//! Cumulative-hazard estimation and the increment regression sample.
//!
//! The Breslow curve `A` is differenced on an equidistant grid over the
//! estimation window. After rescaling the window to unit length, the scaled
//! increments `Y_j = m (A(t_j) - A(t_{j-1}))` follow a signal-plus-noise model
//! whose signal is the hazard evaluated at the grid points.

mod breslow;
mod cox;
mod risk_sets;

pub use breslow::{breslow_fit, BreslowCurve};
pub use cox::{cox_fit, partial_likelihood, CoxFit, CoxOptions, PartialLikelihood};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_data::SurvivalFrame;

/// Estimation window `[tau_min, tau_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Window {
    pub fn new(tau_min: f64, tau_max: f64) -> Result<Self> {
        if !(tau_min.is_finite() && tau_max.is_finite() && tau_min < tau_max) {
            return Err(Error::InvalidArgument(format!(
                "invalid window ({tau_min}, {tau_max})"
            )));
        }
        Ok(Window { tau_min, tau_max })
    }

    pub fn unit() -> Self {
        Window {
            tau_min: 0.0,
            tau_max: 1.0,
        }
    }

    pub fn length(&self) -> f64 {
        self.tau_max - self.tau_min
    }

    /// `t_j = tau_min + (j/m)(tau_max - tau_min)`, with `t_m = tau_max` exactly.
    pub fn grid_point(&self, j: usize, m: usize) -> f64 {
        if j == m {
            self.tau_max
        } else {
            self.tau_min + self.length() * (j as f64 / m as f64)
        }
    }

    /// Affine map of the window onto `[0, 1]`.
    pub fn to_unit(&self, t: f64) -> f64 {
        (t - self.tau_min) / self.length()
    }

    pub fn from_unit(&self, s: f64) -> f64 {
        self.tau_min + s * self.length()
    }

    pub fn scale(&self, factor: f64) -> Window {
        Window {
            tau_min: self.tau_min * factor,
            tau_max: self.tau_max * factor,
        }
    }
}

/// Type-1 empirical quantile of a sorted sample: the order statistic at rank
/// `ceil(p n)`, and the minimum for `p = 0`.
pub fn type1_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Window from empirical quantiles of the uncensored event times.
pub fn choose_window(frame: &SurvivalFrame, p_low: f64, p_high: f64) -> Result<Window> {
    if !(0.0..=1.0).contains(&p_low) || !(0.0..=1.0).contains(&p_high) || p_low >= p_high {
        return Err(Error::InvalidArgument(format!(
            "quantile levels must satisfy 0 <= p_low < p_high <= 1, got ({p_low}, {p_high})"
        )));
    }
    let mut times: Vec<f64> = frame
        .records()
        .iter()
        .filter(|r| r.event)
        .map(|r| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    let distinct =
        times.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(!times.is_empty());
    if distinct < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 distinct event times to choose a window, found {distinct}"
        )));
    }
    let lo = type1_quantile(&times, p_low);
    let hi = type1_quantile(&times, p_high);
    Window::new(lo, hi).map_err(|_| {
        Error::Degenerate(format!(
            "event-time quantiles ({p_low}, {p_high}) give an empty window [{lo}, {hi}]"
        ))
    })
}

/// Default lower quantile level: 0 without truncation, 0.025 with it.
pub fn default_p_low(frame: &SurvivalFrame) -> f64 {
    if frame.has_truncation() {
        0.025
    } else {
        0.0
    }
}

pub const DEFAULT_P_HIGH: f64 = 0.975;

/// Scaled Breslow increments on an `m`-cell grid over the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSample {
    pub window: Window,
    pub m: usize,
    /// `t_0 .. t_m` in original time units.
    pub grid: Vec<f64>,
    /// `Y_1 .. Y_m`, in hazard units of the rescaled (unit-length) time axis.
    pub y: Vec<f64>,
    /// `tau_max - tau_min`; an original-time hazard is `y / scale`.
    pub scale: f64,
}

/// Differences the curve over `(t_{j-1}, t_j]`, `j = 1..m`.
pub fn build_increments(curve: &BreslowCurve, window: Window, m: usize) -> Result<IncrementSample> {
    if m < 1 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    if window.tau_min < 0.0 || window.tau_max > curve.tau() {
        return Err(Error::InvalidArgument(format!(
            "window [{}, {}] lies outside the data support [0, {}]",
            window.tau_min,
            window.tau_max,
            curve.tau()
        )));
    }
    let grid: Vec<f64> = (0..=m).map(|j| window.grid_point(j, m)).collect();
    let cum: Vec<f64> = grid.iter().map(|&t| curve.eval(t)).collect();
    let mf = m as f64;
    let y = cum.windows(2).map(|w| mf * (w[1] - w[0])).collect();
    Ok(IncrementSample {
        window,
        m,
        grid,
        y,
        scale: window.length(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_from_extremes() {
        let f =
            SurvivalFrame::from_times(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true, true, true, true, false])
                .unwrap();
        let w = choose_window(&f, 0.0, 1.0).unwrap();
        assert_eq!((w.tau_min, w.tau_max), (1.0, 4.0));
        for p in [0.8, 0.975, 0.99] {
            assert!(choose_window(&f, 0.0, p).is_ok());
        }
        assert_eq!(choose_window(&f, 0.0, 0.5).unwrap().tau_max, 2.0);
    }

    #[test]
    fn window_needs_two_event_times() {
        let f = SurvivalFrame::from_times(&[1.0, 1.0, 3.0], &[true, true, false]).unwrap();
        assert!(matches!(
            choose_window(&f, 0.0, 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn single_jump_lands_in_its_cell() {
        let c = BreslowCurve::from_jumps(vec![0.55], vec![0.5], 1.0).unwrap();
        let s = build_increments(&c, Window::unit(), 10).unwrap();
        let mut want = vec![0.0; 10];
        want[5] = 5.0;
        assert_eq!(s.y, want);
        assert_eq!(s.grid.len(), 11);
    }

    #[test]
    fn zero_curve_gives_zero_increments() {
        let c = BreslowCurve::from_jumps(vec![], vec![], 2.0).unwrap();
        let s = build_increments(&c, Window::new(0.5, 1.5).unwrap(), 7).unwrap();
        assert!(s.y.iter().all(|&v| v == 0.0));
        assert_eq!(s.scale, 1.0);
    }

    #[test]
    fn unit_slope_gives_unit_increments() {
        let m = 16;
        // jumps of 1/m at the grid points j/m reproduce A(t) = t on the grid
        let times: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
        let c = BreslowCurve::from_jumps(times, vec![1.0 / m as f64; m], 1.0).unwrap();
        let s = build_increments(&c, Window::unit(), m).unwrap();
        assert!(s.y.iter().all(|&v| (v - 1.0).abs() < 1e-12), "{:?}", s.y);
    }

    #[test]
    fn window_outside_support_is_rejected() {
        let c = BreslowCurve::from_jumps(vec![0.5], vec![1.0], 1.0).unwrap();
        assert!(build_increments(&c, Window::new(0.0, 2.0).unwrap(), 4).is_err());
    }
}
