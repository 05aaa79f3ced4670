//! Monte-Carlo study machinery: scenario generators, error metrics, seeded
//! replication, and an illness-death process simulator.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{CoxOptions, Window};
use crate::event_data::{SurvivalFrame, SurvivalRecord, Target, TransitionRecord};
use crate::flsa::StepFunction;
use crate::multistate::IllnessDeathModel;
use crate::pipeline::{discretize_truth, fit_hazard, BetaSource, FitConfig, WindowPolicy};
use crate::rng::{derive_seed, substream};
use crate::tuning::TuningConfig;

/// Sum of step functions on `[0, inf)`: `levels[k]` holds on
/// `[starts[k], starts[k+1])`, the last level forever.
struct Piecewise {
    starts: Vec<f64>,
    levels: Vec<f64>,
}

impl Piecewise {
    fn sum(parts: &[&StepFunction]) -> Piecewise {
        let mut starts: Vec<f64> = parts
            .iter()
            .flat_map(|f| f.breaks.iter().copied())
            .filter(|&b| b > 0.0)
            .collect();
        starts.push(0.0);
        starts.sort_by(f64::total_cmp);
        starts.dedup();
        let levels = starts
            .iter()
            .map(|&s| parts.iter().map(|f| f.eval(s)).sum())
            .collect();
        Piecewise { starts, levels }
    }

    /// Smallest `t >= from` with `int_from^t h = target`; infinite if never.
    fn invert(&self, from: f64, target: f64) -> f64 {
        let mut k = self.starts.partition_point(|&s| s <= from).max(1) - 1;
        let mut t = from;
        let mut remaining = target;
        loop {
            let end = self.starts.get(k + 1).copied().unwrap_or(f64::INFINITY);
            let level = self.levels[k];
            if level > 0.0 {
                let mass = level * (end - t);
                if mass >= remaining {
                    return t + remaining / level;
                }
                remaining -= mass;
            }
            if end.is_infinite() {
                return f64::INFINITY;
            }
            t = end;
            k += 1;
        }
    }
}

/// Draws `T` with hazard `hazard` (constant beyond its domain) by inverting
/// the cumulative hazard at a unit exponential.
pub fn sample_piecewise_exponential<R: Rng + ?Sized>(
    hazard: &StepFunction,
    rng: &mut R,
) -> Result<f64> {
    if hazard.levels.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "hazard levels must be nonnegative".into(),
        ));
    }
    if hazard.levels.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(
            "hazard is identically zero; no finite event time".into(),
        ));
    }
    let e: f64 = Exp1.sample(rng);
    Ok(Piecewise::sum(&[hazard]).invert(0.0, e))
}

/// Four-on-`[0, 0.25)`, then one.
pub fn alpha_1() -> StepFunction {
    StepFunction::new(Window::unit(), vec![0.25], vec![4.0, 1.0]).unwrap()
}

/// Four on `[0, 0.2)`, 1.5 on `[0.2, 0.6)`, then 0.5.
pub fn alpha_2() -> StepFunction {
    StepFunction::new(Window::unit(), vec![0.2, 0.6], vec![4.0, 1.5, 0.5]).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub hazard: StepFunction,
    pub n: usize,
    pub with_covariates: bool,
    pub beta: Vec<f64>,
    /// Rate of the exponential censoring time; 0 means no censoring.
    pub censoring_rate: f64,
    pub window: Window,
}

impl Scenario {
    fn standard(name: &str, hazard: StepFunction, n: usize, with_covariates: bool) -> Self {
        Scenario {
            name: name.into(),
            hazard,
            n,
            with_covariates,
            beta: if with_covariates {
                vec![0.25, 1.0]
            } else {
                Vec::new()
            },
            censoring_rate: 0.5,
            window: Window::unit(),
        }
    }

    pub fn a1(n: usize) -> Self {
        Self::standard("A1", alpha_1(), n, false)
    }

    pub fn b1(n: usize) -> Self {
        Self::standard("B1", alpha_1(), n, true)
    }

    pub fn a2(n: usize) -> Self {
        Self::standard("A2", alpha_2(), n, false)
    }

    pub fn b2(n: usize) -> Self {
        Self::standard("B2", alpha_2(), n, true)
    }

    /// Looks up `A1`, `B1`, `A2` or `B2`.
    pub fn by_name(name: &str, n: usize) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "A1" => Ok(Self::a1(n)),
            "B1" => Ok(Self::b1(n)),
            "A2" => Ok(Self::a2(n)),
            "B2" => Ok(Self::b2(n)),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario {other:?}; expected A1, B1, A2 or B2"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("scenario needs n >= 1".into()));
        }
        if !(self.censoring_rate >= 0.0) || !self.censoring_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "censoring rate must be finite and nonnegative, got {}",
                self.censoring_rate
            )));
        }
        if self.with_covariates && self.beta.len() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: self.beta.len(),
            });
        }
        Ok(())
    }

    /// Default fit settings for this scenario: its window, `m = n`, the
    /// simulation tuning settings, and a Cox fit when covariates are present.
    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            window: WindowPolicy::Explicit {
                window: self.window,
            },
            grid: None,
            tuning: TuningConfig::simulation(seed),
            beta: if self.with_covariates {
                BetaSource::Fit {
                    options: CoxOptions::default(),
                }
            } else {
                BetaSource::None
            },
        }
    }
}

fn censoring_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else {
        Exp::new(rate).unwrap().sample(rng)
    }
}

/// One simulated data set. With covariates, `W1` is `+-1` with equal
/// probability, `W2 ~ U[-1, 1]`, and the event time solves
/// `A*(T) = E / exp(beta' W)`.
pub fn gen_scenario(s: &Scenario, seed: u64) -> Result<SurvivalFrame> {
    s.validate()?;
    let base = Piecewise::sum(&[&s.hazard]);
    if base.levels.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(
            "scenario hazard is identically zero".into(),
        ));
    }
    let mut rng = substream(seed, 0);
    let mut records = Vec::with_capacity(s.n);
    for _ in 0..s.n {
        let (covariates, risk) = if s.with_covariates {
            let w1 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let w2 = rng.random_range(-1.0..=1.0);
            let lp = s.beta[0] * w1 + s.beta[1] * w2;
            (vec![w1, w2], lp.exp())
        } else {
            (Vec::new(), 1.0)
        };
        let e: f64 = Exp1.sample(&mut rng);
        let t_event = base.invert(0.0, e / risk);
        let c = censoring_time(s.censoring_rate, &mut rng);
        let time = t_event.min(c);
        if !time.is_finite() {
            return Err(Error::InvalidArgument(
                "no finite event or censoring time; hazard vanishes and censoring is off".into(),
            ));
        }
        records.push(SurvivalRecord::new(time, t_event <= c).with_covariates(covariates));
    }
    SurvivalFrame::new(records)
}

/// `(1/m) sum (alpha_hat - alpha_star)^2`.
pub fn metric_l2(alpha_hat: &[f64], alpha_star: &[f64]) -> Result<f64> {
    if alpha_hat.len() != alpha_star.len() {
        return Err(Error::Dimension {
            expected: alpha_star.len(),
            got: alpha_hat.len(),
        });
    }
    if alpha_hat.is_empty() {
        return Err(Error::InvalidArgument("empty vectors".into()));
    }
    let ss: f64 = alpha_hat
        .iter()
        .zip(alpha_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ss / alpha_hat.len() as f64)
}

/// `d(A | B) = max_{b in B} min_{a in A} |a - b|`; infinite for empty `A`.
pub fn metric_dasym(estimated: &[f64], truth: &[f64]) -> f64 {
    if estimated.is_empty() {
        return f64::INFINITY;
    }
    truth
        .iter()
        .map(|b| {
            estimated
                .iter()
                .map(|a| (a - b).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Ratio of empirical variances; infinite when `u` has no spread.
pub fn metric_snr(alpha_star: &[f64], u: &[f64]) -> Result<f64> {
    if alpha_star.len() != u.len() {
        return Err(Error::Dimension {
            expected: alpha_star.len(),
            got: u.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::InvalidArgument("empty vectors".into()));
    }
    let vu = variance(u);
    if vu == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(variance(alpha_star) / vu)
}

/// Metrics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub l2_sq: f64,
    /// `None` when the fit has no change point (distance undefined).
    pub d_asym: Option<f64>,
    pub snr: f64,
    pub censored_fraction: f64,
    pub lambda: f64,
    /// Estimated change points in original time.
    pub changepoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub replication: usize,
    pub seed: u64,
    pub result: std::result::Result<RunMetrics, String>,
}

/// Mean and sample standard deviation (`None` for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let count = values.len();
        if count == 0 {
            return Summary {
                count,
                mean: f64::NAN,
                sd: None,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = (count > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64)
                .sqrt()
        });
        Summary { count, mean, sd }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> Option<f64> {
        self.sd.map(|s| s / (self.count as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: Scenario,
    pub replications: usize,
    pub seed: u64,
    pub runs: Vec<RunOutcome>,
    pub l2_sq: Summary,
    /// Over runs with at least one estimated change point.
    pub d_asym: Summary,
    /// Runs with no estimated change point.
    pub empty_estimates: usize,
    pub snr: Summary,
    pub censored_fraction: Summary,
    pub failures: usize,
}

/// Generates, fits and scores one replication.
pub fn run_replication(s: &Scenario, seed: u64) -> Result<RunMetrics> {
    let frame = gen_scenario(s, seed)?;
    let censored = frame.records().iter().filter(|r| !r.event).count();
    let fit = fit_hazard(&frame, &s.fit_config(derive_seed(seed, 1)))?;
    let truth = discretize_truth(&s.hazard, fit.window, fit.increments.m)?;
    let l2_sq = metric_l2(&fit.fused.alpha, &truth)?;
    let u: Vec<f64> = fit
        .increments
        .y
        .iter()
        .zip(&truth)
        .map(|(y, a)| y - a)
        .collect();
    let snr = metric_snr(&truth, &u)?;
    let changepoints = fit.raw_hazard.breaks.clone();
    let d = metric_dasym(&changepoints, &s.hazard.breaks);
    Ok(RunMetrics {
        l2_sq,
        d_asym: d.is_finite().then_some(d),
        snr,
        censored_fraction: censored as f64 / frame.len() as f64,
        lambda: fit.tuning.lambda,
        changepoints,
    })
}

/// `replications` independent runs; replication `r` uses `derive_seed(seed, r)`.
pub fn run_study(s: &Scenario, replications: usize, seed: u64) -> Result<StudyReport> {
    s.validate()?;
    if replications == 0 {
        return Err(Error::InvalidArgument(
            "need at least one replication".into(),
        ));
    }
    let runs: Vec<RunOutcome> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, r as u64);
            RunOutcome {
                replication: r,
                seed: rep_seed,
                result: run_replication(s, rep_seed).map_err(|e| e.to_string()),
            }
        })
        .collect();
    let ok: Vec<&RunMetrics> = runs.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let failures = runs.len() - ok.len();
    if failures > 0 {
        log::warn!("{failures} of {replications} replications failed");
    }
    let collect = |f: &dyn Fn(&RunMetrics) -> f64| ok.iter().map(|m| f(m)).collect::<Vec<_>>();
    let dvals: Vec<f64> = ok.iter().filter_map(|m| m.d_asym).collect();
    Ok(StudyReport {
        scenario: s.clone(),
        replications,
        seed,
        l2_sq: Summary::of(&collect(&|m| m.l2_sq)),
        empty_estimates: ok.len() - dvals.len(),
        d_asym: Summary::of(&dvals),
        snr: Summary::of(&collect(&|m| m.snr)),
        censored_fraction: Summary::of(&collect(&|m| m.censored_fraction)),
        failures,
        runs,
    })
}

const SUMMARY_HEADER: [&str; 13] = [
    "scenario",
    "n",
    "replications",
    "failures",
    "l2_mean",
    "l2_sd",
    "dasym_mean",
    "dasym_sd",
    "empty_estimates",
    "snr_mean",
    "snr_sd",
    "censored_mean",
    "seed",
];

/// One row of the machine-readable study summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub l2_mean: f64,
    pub l2_sd: Option<f64>,
    pub dasym_mean: f64,
    pub dasym_sd: Option<f64>,
    pub empty_estimates: usize,
    pub snr_mean: f64,
    pub snr_sd: Option<f64>,
    pub censored_mean: f64,
    pub seed: u64,
}

impl From<&StudyReport> for SummaryRow {
    fn from(r: &StudyReport) -> Self {
        SummaryRow {
            scenario: r.scenario.name.clone(),
            n: r.scenario.n,
            replications: r.replications,
            failures: r.failures,
            l2_mean: r.l2_sq.mean,
            l2_sd: r.l2_sq.sd,
            dasym_mean: r.d_asym.mean,
            dasym_sd: r.d_asym.sd,
            empty_estimates: r.empty_estimates,
            snr_mean: r.snr.mean,
            snr_sd: r.snr.sd,
            censored_mean: r.censored_fraction.mean,
            seed: r.seed,
        }
    }
}

/// One row per report with every aggregate as its own column.
pub fn write_summary_csv<W: Write>(reports: &[StudyReport], writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    wtr.write_record(SUMMARY_HEADER)?;
    for r in reports {
        wtr.serialize(SummaryRow::from(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Schema(format!(
            "unexpected study summary header {headers:?}"
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Which aggregate a study table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMetric {
    L2,
    DAsym,
}

/// Rows `n`, columns scenario, cells `mean (sd)` with three decimals.
pub fn write_table_csv<W: Write>(
    reports: &[StudyReport],
    metric: TableMetric,
    writer: W,
) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for r in reports {
        if !names.contains(&r.scenario.name.as_str()) {
            names.push(&r.scenario.name);
        }
        if !sizes.contains(&r.scenario.n) {
            sizes.push(r.scenario.n);
        }
    }
    sizes.sort_unstable();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["n".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for n in sizes {
        let mut row = vec![n.to_string()];
        for name in &names {
            let cell = reports
                .iter()
                .find(|r| r.scenario.n == n && r.scenario.name == *name)
                .map(|r| {
                    let s = match metric {
                        TableMetric::L2 => r.l2_sq,
                        TableMetric::DAsym => r.d_asym,
                    };
                    match s.sd {
                        Some(sd) => format!("{:.3} ({:.3})", s.mean, sd),
                        None => format!("{:.3}", s.mean),
                    }
                })
                .unwrap_or_default();
            row.push(cell);
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Cell of a study table: `(n, scenario, mean, sd)`.
pub type TableCell = (usize, String, f64, Option<f64>);

pub fn read_table_csv<R: Read>(reader: R) -> Result<Vec<TableCell>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |msg: &str| Error::Parse {
            row: i + 1,
            message: msg.into(),
        };
        let n: usize = row
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad sample size"))?;
        for (name, cell) in names.iter().zip(row.iter().skip(1)) {
            if cell.is_empty() {
                continue;
            }
            let (mean, sd) = match cell.split_once(" (") {
                Some((m, rest)) => (m, Some(rest.trim_end_matches(')'))),
                None => (cell, None),
            };
            let mean: f64 = mean.trim().parse().map_err(|_| bad("bad mean"))?;
            let sd = sd
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad sd")))
                .transpose()?;
            out.push((n, name.clone(), mean, sd));
        }
    }
    Ok(out)
}

/// Long-format trajectories of `n` subjects started in state 0 at time 0.
///
/// The exit time from state 0 inverts the total hazard `a01 + a02`; the
/// destination is state 1 with probability `a01 / (a01 + a02)` at that time.
/// From state 1 the clock keeps running (Markov), so the `1->2` time inverts
/// `a12` from the illness time onward.
pub fn simulate_illness_death(
    model: &IllnessDeathModel,
    n: usize,
    censoring_rate: f64,
    seed: u64,
) -> Result<Vec<TransitionRecord>> {
    let model = IllnessDeathModel::new(model.a01.clone(), model.a02.clone(), model.a12.clone())?;
    if !(censoring_rate >= 0.0) || !censoring_rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "censoring rate must be finite and nonnegative, got {censoring_rate}"
        )));
    }
    let total = Piecewise::sum(&[&model.a01, &model.a02]);
    let a12 = Piecewise::sum(&[&model.a12]);
    let mut rng = substream(seed, 0);
    let mut out = Vec::with_capacity(2 * n);
    let never = || {
        Error::InvalidArgument(
            "a trajectory never ends: hazard vanishes and censoring is off".into(),
        )
    };
    for i in 0..n {
        let id = (i + 1).to_string();
        let e: f64 = Exp1.sample(&mut rng);
        let t1 = total.invert(0.0, e);
        let u: f64 = rng.random();
        let c = censoring_time(censoring_rate, &mut rng);
        if c < t1 {
            out.push(TransitionRecord::new(id, 0, Target::Censored, 0.0, c));
            continue;
        }
        if !t1.is_finite() {
            return Err(never());
        }
        let p01 = model.a01.eval(t1) / (model.a01.eval(t1) + model.a02.eval(t1));
        if u >= p01 {
            out.push(TransitionRecord::new(id, 0, Target::State(2), 0.0, t1));
            continue;
        }
        out.push(TransitionRecord::new(
            id.clone(),
            0,
            Target::State(1),
            0.0,
            t1,
        ));
        let e2: f64 = Exp1.sample(&mut rng);
        let t2 = a12.invert(t1, e2);
        if c < t2 {
            out.push(TransitionRecord::new(id, 1, Target::Censored, t1, c));
        } else if t2.is_finite() {
            out.push(TransitionRecord::new(id, 1, Target::State(2), t1, t2));
        } else {
            return Err(never());
        }
    }
    Ok(out)
}
