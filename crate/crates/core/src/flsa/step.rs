use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::FusedLassoFit;
use crate::error::{Error, Result};
use crate::estimators::Window;

/// Right-continuous piecewise-constant function on `domain`.
///
/// `levels[k]` holds on `[breaks[k-1], breaks[k])` with the domain ends as
/// the outer breaks; outside the domain the nearest level is extended. A
/// break may sit at `tau_max`, in which case the last level holds only there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub domain: Window,
    pub breaks: Vec<f64>,
    pub levels: Vec<f64>,
}

impl StepFunction {
    pub fn new(domain: Window, breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breaks.len() + 1 {
            return Err(Error::Dimension {
                expected: breaks.len() + 1,
                got: levels.len(),
            });
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("step levels must be finite".into()));
        }
        let inside = breaks
            .iter()
            .all(|&b| domain.tau_min < b && b <= domain.tau_max);
        if !inside || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(
                "breaks must be strictly increasing inside the domain".into(),
            ));
        }
        Ok(StepFunction {
            domain,
            breaks,
            levels,
        })
    }

    pub fn constant(domain: Window, level: f64) -> Self {
        StepFunction {
            domain,
            breaks: Vec::new(),
            levels: vec![level],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.levels[self.breaks.partition_point(|&b| b <= t)]
    }

    /// Interval edges including the domain ends.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.breaks.len() + 2);
        e.push(self.domain.tau_min);
        e.extend_from_slice(&self.breaks);
        e.push(self.domain.tau_max);
        e
    }

    /// `int_{tau_min}^{t} f(s) ds`, with `t` clamped to the domain.
    pub fn integral_to(&self, t: f64) -> f64 {
        let t = t.clamp(self.domain.tau_min, self.domain.tau_max);
        let edges = self.edges();
        let mut acc = 0.0;
        for (k, &level) in self.levels.iter().enumerate() {
            let (a, b) = (edges[k], edges[k + 1]);
            if t <= a {
                break;
            }
            acc += level * (b.min(t) - a);
        }
        acc
    }

    pub fn map_levels(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        StepFunction {
            domain: self.domain,
            breaks: self.breaks.clone(),
            levels: self.levels.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Hazard on a time axis stretched by `factor`: breaks times `factor`,
    /// levels divided by it.
    pub fn scale_time(&self, factor: f64) -> StepFunction {
        StepFunction {
            domain: self.domain.scale(factor),
            breaks: self.breaks.iter().map(|b| b * factor).collect(),
            levels: self.levels.iter().map(|v| v / factor).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: StepFunction = serde_json::from_str(s)?;
        StepFunction::new(raw.domain, raw.breaks, raw.levels)
    }

    /// Corner points `time,hazard` tracing the graph: two rows per interval.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "hazard"])?;
        let edges = self.edges();
        for (k, level) in self.levels.iter().enumerate() {
            wtr.write_record([edges[k].to_string(), level.to_string()])?;
            wtr.write_record([edges[k + 1].to_string(), level.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut pts: Vec<(f64, f64)> = Vec::new();
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
            pts.push((get(0)?, get(1)?));
        }
        if pts.len() < 2 || !pts.len().is_multiple_of(2) {
            return Err(Error::Schema(
                "step CSV needs an even number of corner rows (at least 2)".into(),
            ));
        }
        let domain = Window::new(pts[0].0, pts[pts.len() - 1].0)?;
        let mut breaks = Vec::new();
        let mut levels = Vec::new();
        for (k, pair) in pts.chunks(2).enumerate() {
            if pair[0].1 != pair[1].1 {
                return Err(Error::Parse {
                    row: 2 * k + 2,
                    message: "corner rows of one interval differ in level".into(),
                });
            }
            if k > 0 {
                breaks.push(pair[0].0);
            }
            levels.push(pair[0].1);
        }
        StepFunction::new(domain, breaks, levels)
    }
}

/// Step function in original time from a fit on the rescaled grid.
///
/// A change point at grid index `J` becomes a break at `t_J`; every level is
/// divided by the window length.
pub fn interpolate(fit: &FusedLassoFit, window: Window) -> Result<StepFunction> {
    let m = fit.m();
    if m == 0 {
        return Err(Error::InvalidArgument("empty fit".into()));
    }
    let scale = window.length();
    let breaks = fit
        .changepoints
        .iter()
        .map(|&j| window.grid_point(j, m))
        .collect();
    let levels = fit.blocks.iter().map(|b| b.level / scale).collect();
    StepFunction::new(window, breaks, levels)
}
