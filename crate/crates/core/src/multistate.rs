//! Illness-death model without recovery.
//!
//! States: 0 (initial), 1 (illness/progression), 2 (death). Each of the three
//! transitions `0->1`, `0->2`, `1->2` is fitted as its own survival problem;
//! the `1->2` frame is left-truncated at the illness time. Progression-free
//! and overall survival then follow from the forward equations, solved in
//! closed form because every hazard is piecewise constant.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_data::{
    group_by_subject, split_transitions, validate_trajectories, SurvivalFrame, SurvivalRecord,
    Target, TransitionRecord,
};
use crate::flsa::StepFunction;
use crate::pipeline::{fit_hazard, FitConfig, HazardFit};

/// The three transition hazards. Outside its domain each hazard continues
/// with its nearest level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllnessDeathModel {
    pub a01: StepFunction,
    pub a02: StepFunction,
    pub a12: StepFunction,
}

impl IllnessDeathModel {
    pub fn new(a01: StepFunction, a02: StepFunction, a12: StepFunction) -> Result<Self> {
        for (name, h) in [("0->1", &a01), ("0->2", &a02), ("1->2", &a12)] {
            if h.levels.iter().any(|&v| v < 0.0) {
                return Err(Error::Validation(format!(
                    "hazard {name} has a negative level"
                )));
            }
        }
        Ok(IllnessDeathModel { a01, a02, a12 })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: IllnessDeathModel = serde_json::from_str(s)?;
        IllnessDeathModel::new(
            StepFunction::new(raw.a01.domain, raw.a01.breaks, raw.a01.levels)?,
            StepFunction::new(raw.a02.domain, raw.a02.breaks, raw.a02.levels)?,
            StepFunction::new(raw.a12.domain, raw.a12.breaks, raw.a12.levels)?,
        )
    }

    /// Sorted union of all breaks and domain ends: every hazard is constant
    /// between consecutive knots.
    fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = [&self.a01, &self.a02, &self.a12]
            .iter()
            .flat_map(|h| h.edges())
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }
}

/// Survival function sampled at increasing times, right-continuous between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    /// Value at `t`: the last grid value at or before `t`, and 1 before the grid.
    pub fn eval(&self, t: f64) -> f64 {
        match self.grid.partition_point(|&g| g <= t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "survival"])?;
        for (t, s) in self.grid.iter().zip(&self.values) {
            wtr.write_record([t.to_string(), s.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let rows = read_numeric_rows(reader, 2)?;
        Ok(SurvivalCurve {
            grid: rows.iter().map(|r| r[0]).collect(),
            values: rows.iter().map(|r| r[1]).collect(),
        })
    }
}

fn read_numeric_rows<R: Read>(reader: R, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let vals: Option<Vec<f64>> = (0..width)
            .map(|c| row.get(c).and_then(|s| s.trim().parse().ok()))
            .collect();
        out.push(vals.ok_or_else(|| Error::Parse {
            row: i + 1,
            message: format!("expected {width} numeric columns"),
        })?);
    }
    Ok(out)
}

/// Occupation probabilities `(P00, P01, P02)` from state 0 at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateProbabilities {
    pub p00: f64,
    pub p01: f64,
    pub p02: f64,
}

/// `int_0^dt exp(-a s) exp(-b (dt - s)) ds = (e^{-b dt} - e^{-a dt}) / (a - b)`.
fn two_rate_kernel(a: f64, b: f64, dt: f64) -> f64 {
    let lo = a.min(b);
    let diff = (a - b).abs();
    if diff < 1e-10 {
        dt * (-lo * dt).exp()
    } else {
        (-lo * dt).exp() * (-(-diff * dt).exp_m1()) / diff
    }
}

/// Occupation probabilities at each time in `grid` (nondecreasing, `>= 0`).
pub fn state_probabilities(
    model: &IllnessDeathModel,
    grid: &[f64],
) -> Result<Vec<StateProbabilities>> {
    if grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "grid must be finite, nonnegative and nondecreasing".into(),
        ));
    }
    let model = IllnessDeathModel::new(model.a01.clone(), model.a02.clone(), model.a12.clone())?;
    let knots = model.knots();
    let (mut p00, mut p01, mut p02) = (1.0f64, 0.0f64, 0.0f64);
    let mut now = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        while now < t {
            let next_knot = knots[knots.partition_point(|&k| k <= now)..]
                .first()
                .copied()
                .unwrap_or(f64::INFINITY);
            let end = next_knot.min(t);
            let dt = end - now;
            let mid = now + 0.5 * dt;
            let c = model.a01.eval(mid);
            let a = c + model.a02.eval(mid);
            let b = model.a12.eval(mid);
            let k = two_rate_kernel(a, b, dt);
            // P02 is advanced on its own rather than as 1 - P00 - P01
            let n02 = p02 + p01 * (-(-b * dt).exp_m1()) + p00 * (-(-a * dt).exp_m1() - c * k);
            let n01 = p01 * (-b * dt).exp() + p00 * c * k;
            p00 *= (-a * dt).exp();
            p01 = n01;
            p02 = n02;
            now = end;
        }
        out.push(StateProbabilities { p00, p01, p02 });
    }
    Ok(out)
}

/// Progression-free (`P00`) and overall (`P00 + P01`) survival on `grid`.
pub fn survival_curves(
    model: &IllnessDeathModel,
    grid: &[f64],
) -> Result<(SurvivalCurve, SurvivalCurve)> {
    let probs = state_probabilities(model, grid)?;
    let pfs = SurvivalCurve {
        grid: grid.to_vec(),
        values: probs.iter().map(|p| p.p00).collect(),
    };
    let os = SurvivalCurve {
        grid: grid.to_vec(),
        values: probs.iter().map(|p| p.p00 + p.p01).collect(),
    };
    Ok((pfs, os))
}

/// CSV with columns `time,pfs,os`.
pub fn write_survival_csv<W: Write>(
    pfs: &SurvivalCurve,
    os: &SurvivalCurve,
    writer: W,
) -> Result<()> {
    if pfs.grid != os.grid {
        return Err(Error::InvalidArgument(
            "PFS and OS curves must share a grid".into(),
        ));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["time", "pfs", "os"])?;
    for ((t, a), b) in pfs.grid.iter().zip(&pfs.values).zip(&os.values) {
        wtr.write_record([t.to_string(), a.to_string(), b.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_survival_csv<R: Read>(reader: R) -> Result<(SurvivalCurve, SurvivalCurve)> {
    let rows = read_numeric_rows(reader, 3)?;
    let grid: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    Ok((
        SurvivalCurve {
            grid: grid.clone(),
            values: rows.iter().map(|r| r[1]).collect(),
        },
        SurvivalCurve {
            grid,
            values: rows.iter().map(|r| r[2]).collect(),
        },
    ))
}

/// Product-limit estimator with risk sets `entry < t <= time`. The curve
/// starts with `(0, 1)` followed by one point per distinct event time.
pub fn kaplan_meier(frame: &SurvivalFrame) -> Result<SurvivalCurve> {
    if frame.is_empty() {
        return Err(Error::InvalidArgument(
            "Kaplan-Meier needs a nonempty frame".into(),
        ));
    }
    let mut times: Vec<f64> = frame
        .records()
        .iter()
        .filter(|r| r.event)
        .map(|r| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut entries: Vec<f64> = frame.records().iter().map(|r| r.entry_time()).collect();
    let mut exits: Vec<f64> = frame.records().iter().map(|r| r.time).collect();
    entries.sort_by(f64::total_cmp);
    exits.sort_by(f64::total_cmp);
    let mut events: Vec<f64> = frame
        .records()
        .iter()
        .filter(|r| r.event)
        .map(|r| r.time)
        .collect();
    events.sort_by(f64::total_cmp);

    let mut grid = vec![0.0];
    let mut values = vec![1.0];
    let mut s = 1.0;
    for &t in &times {
        let at_risk = entries.partition_point(|&e| e < t) - exits.partition_point(|&x| x < t);
        let d = events.partition_point(|&x| x <= t) - events.partition_point(|&x| x < t);
        s *= 1.0 - d as f64 / at_risk as f64;
        if t > 0.0 {
            grid.push(t);
            values.push(s);
        } else {
            values[0] = s;
        }
    }
    Ok(SurvivalCurve { grid, values })
}

/// Time to leaving state 0 (progression or death), one row per subject.
pub fn pfs_frame(records: &[TransitionRecord]) -> Result<SurvivalFrame> {
    validate_trajectories(records)?;
    let rows = group_by_subject(records)
        .into_iter()
        .map(|(_, rows)| {
            let first = rows.iter().find(|r| r.from == 0).unwrap_or(&rows[0]);
            SurvivalRecord::new(first.t_stop, matches!(first.to, Target::State(_)))
        })
        .collect();
    SurvivalFrame::new(rows)
}

/// Time to death (state 2), one row per subject.
pub fn os_frame(records: &[TransitionRecord]) -> Result<SurvivalFrame> {
    validate_trajectories(records)?;
    let rows = group_by_subject(records)
        .into_iter()
        .map(|(_, rows)| {
            let last = rows[rows.len() - 1];
            SurvivalRecord::new(last.t_stop, last.to == Target::State(2))
        })
        .collect();
    SurvivalFrame::new(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllnessDeathConfig {
    pub a01: FitConfig,
    pub a02: FitConfig,
    pub a12: FitConfig,
}

impl IllnessDeathConfig {
    /// The same settings for all three transitions.
    pub fn uniform(config: FitConfig) -> Self {
        IllnessDeathConfig {
            a01: config.clone(),
            a02: config.clone(),
            a12: config,
        }
    }
}

impl Default for IllnessDeathConfig {
    fn default() -> Self {
        // the default window rule already starts 1->2 at the 2.5% quantile,
        // since that frame is left-truncated
        IllnessDeathConfig::uniform(FitConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllnessDeathFit {
    pub model: IllnessDeathModel,
    pub a01: HazardFit,
    pub a02: HazardFit,
    pub a12: HazardFit,
}

pub const TRANSITIONS: [(u32, u32); 3] = [(0, 1), (0, 2), (1, 2)];

/// Fits the three transition hazards independently.
pub fn fit_illness_death(
    records: &[TransitionRecord],
    config: &IllnessDeathConfig,
) -> Result<IllnessDeathFit> {
    validate_trajectories(records)?;
    let configs = [&config.a01, &config.a02, &config.a12];
    let mut frames = Vec::with_capacity(3);
    for &(from, to) in &TRANSITIONS {
        let frame = split_transitions(records, from, to)?;
        if frame.event_count() == 0 {
            return Err(Error::Degenerate(format!(
                "transition ({from},{to}): zero events"
            )));
        }
        frames.push(frame);
    }
    let mut fits: Vec<HazardFit> = frames
        .par_iter()
        .zip(configs.par_iter())
        .zip(TRANSITIONS.par_iter())
        .map(|((frame, cfg), &(from, to))| {
            fit_hazard(frame, cfg).map_err(|e| match e {
                Error::Degenerate(msg) => {
                    Error::Degenerate(format!("transition ({from},{to}): {msg}"))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let a12 = fits.pop().unwrap();
    let a02 = fits.pop().unwrap();
    let a01 = fits.pop().unwrap();
    let model = IllnessDeathModel::new(a01.hazard.clone(), a02.hazard.clone(), a12.hazard.clone())?;
    Ok(IllnessDeathFit {
        model,
        a01,
        a02,
        a12,
    })
}
