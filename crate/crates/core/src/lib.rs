//! Step-function hazard rates from censored and truncated event times.
//!
//! The cumulative hazard (Nelson-Aalen, or Breslow under a Cox model) is
//! differenced on an equispaced grid, the differences are denoised with a
//! one-dimensional fused lasso, and the penalty is set by a multiplier
//! bootstrap. [`pipeline::fit_hazard`] runs the whole chain;
//! [`multistate::fit_illness_death`] applies it to the three transitions of
//! an illness-death model.
//!
//! ```
//! use pchazard::{fit_hazard, FitConfig, SurvivalFrame};
//!
//! let times: Vec<f64> = (1..=100).map(|i| i as f64 / 50.0).collect();
//! let frame = SurvivalFrame::from_times(&times, &vec![true; 100])?;
//! let fit = fit_hazard(&frame, &FitConfig::default())?;
//! println!("{:?}", fit.hazard);
//! # Ok::<(), pchazard::Error>(())
//! ```
//!
//! The guide in `book/` walks through each stage.

// `!(x >= 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod event_data;
pub mod flsa;
pub mod multistate;
pub mod pipeline;
pub mod rng;
pub mod simharness;
pub mod tuning;

pub use error::{Error, Result};
pub use estimators::Window;
pub use event_data::{SurvivalFrame, SurvivalRecord, Target, TransitionRecord};
pub use flsa::{flsa_solve, FusedLassoFit, StepFunction};
pub use multistate::{fit_illness_death, survival_curves, IllnessDeathModel};
pub use pipeline::{fit_hazard, FitConfig, HazardFit};
pub use tuning::{bootstrap_lambda, TuningConfig};

// Guide chapters run as doctests so their snippets cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/event_data.md")]
    mod event_data {}
    #[doc = include_str!("../../../book/src/fused_lasso.md")]
    mod fused_lasso {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/multistate.md")]
    mod multistate {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
