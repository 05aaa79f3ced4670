use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::risk_sets::event_times;
use crate::error::{Error, Result};
use crate::event_data::SurvivalFrame;

/// Right-continuous step estimate of the cumulative hazard,
/// `A(t) = sum_{S_k <= t} J(S_k) / Zbar(S_k)` with ties summed per jump time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreslowCurve {
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    /// Running sums of `jump_sizes`.
    cumulative: Vec<f64>,
    /// Largest observed time in the sample the curve was fitted on.
    tau: f64,
}

impl BreslowCurve {
    /// Builds a curve from explicit jumps. Times must be strictly increasing,
    /// sizes positive, and `tau` no smaller than the last jump.
    pub fn from_jumps(jump_times: Vec<f64>, jump_sizes: Vec<f64>, tau: f64) -> Result<Self> {
        if jump_times.len() != jump_sizes.len() {
            return Err(Error::Dimension {
                expected: jump_times.len(),
                got: jump_sizes.len(),
            });
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(
                "jump times must be strictly increasing".into(),
            ));
        }
        if jump_sizes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation(
                "jump sizes must be positive and finite".into(),
            ));
        }
        if jump_times.last().is_some_and(|&t| t > tau)
            || jump_times.first().is_some_and(|&t| t < 0.0)
        {
            return Err(Error::Validation("jump times must lie in [0, tau]".into()));
        }
        let cumulative = jump_sizes
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        Ok(BreslowCurve {
            jump_times,
            jump_sizes,
            cumulative,
            tau,
        })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `A(t)`; zero before the first jump.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Same curve with time stretched by `factor` (hazard units follow).
    pub fn scale_time(&self, factor: f64) -> BreslowCurve {
        BreslowCurve {
            jump_times: self.jump_times.iter().map(|t| t * factor).collect(),
            jump_sizes: self.jump_sizes.clone(),
            cumulative: self.cumulative.clone(),
            tau: self.tau * factor,
        }
    }

    /// `time,cumhaz` rows: the origin, one row per jump, and a closing row at `tau`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "cumhaz"])?;
        wtr.write_record(["0".to_string(), "0".to_string()])?;
        for (t, a) in self.jump_times.iter().zip(&self.cumulative) {
            wtr.write_record([t.to_string(), a.to_string()])?;
        }
        if self.jump_times.last().is_none_or(|&t| t < self.tau) {
            wtr.write_record([self.tau.to_string(), self.eval(self.tau).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows: Vec<(f64, f64)> = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let get = |c: usize| -> Result<f64> {
                row.get(c)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        row: i + 1,
                        message: "expected two numeric columns".into(),
                    })
            };
            rows.push((get(0)?, get(1)?));
        }
        let tau = rows.last().map_or(0.0, |r| r.0);
        let mut times = Vec::new();
        let mut sizes = Vec::new();
        let mut levels = Vec::new();
        let mut prev = 0.0;
        for &(t, a) in &rows {
            if a > prev {
                times.push(t);
                sizes.push(a - prev);
                levels.push(a);
                prev = a;
            }
        }
        let mut curve = Self::from_jumps(times, sizes, tau)?;
        // keep A(t) identical to the file's values rather than re-summed differences
        curve.cumulative = levels;
        Ok(curve)
    }
}

/// Breslow estimator at coefficient `beta` (empty for covariate-free frames,
/// in which case this is the Nelson-Aalen estimator).
pub fn breslow_fit(frame: &SurvivalFrame, beta: &[f64]) -> Result<BreslowCurve> {
    let weights = frame.risk_weights(beta)?;
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    for et in event_times(frame, &weights, false) {
        // 0/0 := 0: no jump where the risk set is empty
        if et.s0 > 0.0 {
            times.push(et.time);
            sizes.push(et.events as f64 / et.s0);
        }
    }
    let tau = frame.records().iter().map(|r| r.time).fold(0.0, f64::max);
    BreslowCurve::from_jumps(times, sizes, tau)
}
