//! Event-history data: survival records, multi-state trajectories and the
//! reduction of a trajectory list to one survival frame per transition.
//!
//! Every frame uses the left-open at-risk convention `1(L_i < t <= T_i)`,
//! with `L_i = 0` when no entry time is recorded.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject in a survival frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    /// Observed time `T_i = min(T_i*, C_i)`.
    pub time: f64,
    /// `true` when the event was observed.
    pub event: bool,
    /// Left-truncation (delayed entry) time.
    pub entry: Option<f64>,
    pub covariates: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool) -> Self {
        SurvivalRecord {
            time,
            event,
            entry: None,
            covariates: Vec::new(),
        }
    }

    pub fn with_entry(mut self, entry: f64) -> Self {
        self.entry = Some(entry);
        self
    }

    pub fn with_covariates(mut self, covariates: Vec<f64>) -> Self {
        self.covariates = covariates;
        self
    }

    /// Entry time with the `L_i = 0` default.
    #[inline]
    pub fn entry_time(&self) -> f64 {
        self.entry.unwrap_or(0.0)
    }

    /// `1(L_i < t <= T_i)`.
    #[inline]
    pub fn at_risk(&self, t: f64) -> bool {
        self.entry_time() < t && t <= self.time
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !self.time.is_finite() || self.time < 0.0 {
            return Err(format!(
                "time must be finite and nonnegative, got {}",
                self.time
            ));
        }
        if let Some(entry) = self.entry {
            if !entry.is_finite() || entry < 0.0 {
                return Err(format!("entry must be finite and nonnegative, got {entry}"));
            }
            if entry >= self.time {
                return Err(format!("entry {entry} >= time {}", self.time));
            }
        }
        if let Some(w) = self.covariates.iter().find(|w| !w.is_finite()) {
            return Err(format!("non-finite covariate {w}"));
        }
        Ok(())
    }
}

/// A validated sample `{(T_i, delta_i, L_i, W_i)}` with a shared covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalFrame {
    records: Vec<SurvivalRecord>,
    dim: usize,
}

/// Column mapping for [`SurvivalFrame::read_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSchema {
    pub time: String,
    pub status: String,
    /// Entry column. `None` means "use a column called `entry` if present".
    pub entry: Option<String>,
    /// Covariate columns. `None` means "every other column, in file order".
    pub covariates: Option<Vec<String>>,
}

impl Default for SurvivalSchema {
    fn default() -> Self {
        SurvivalSchema {
            time: "time".into(),
            status: "status".into(),
            entry: None,
            covariates: None,
        }
    }
}

impl SurvivalFrame {
    /// Builds a frame, checking every record and the shared covariate dimension.
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.covariates.len());
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != dim {
                return Err(Error::Validation(format!(
                    "record {}: {} covariates, expected {dim}",
                    i + 1,
                    r.covariates.len()
                )));
            }
            r.validate()
                .map_err(|m| Error::Validation(format!("record {}: {m}", i + 1)))?;
        }
        Ok(SurvivalFrame { records, dim })
    }

    /// Convenience constructor for covariate-free, untruncated data.
    pub fn from_times(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                got: events.len(),
            });
        }
        Self::new(
            times
                .iter()
                .zip(events)
                .map(|(&t, &e)| SurvivalRecord::new(t, e))
                .collect(),
        )
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn has_truncation(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.entry.is_some_and(|e| e > 0.0))
    }

    /// Copy of the frame with every covariate dropped.
    pub fn without_covariates(&self) -> SurvivalFrame {
        SurvivalFrame {
            records: self
                .records
                .iter()
                .map(|r| SurvivalRecord {
                    covariates: Vec::new(),
                    ..r.clone()
                })
                .collect(),
            dim: 0,
        }
    }

    /// Copy with all times (and entry times) multiplied by `factor`.
    pub fn scale_time(&self, factor: f64) -> SurvivalFrame {
        SurvivalFrame {
            records: self
                .records
                .iter()
                .map(|r| SurvivalRecord {
                    time: r.time * factor,
                    entry: r.entry.map(|e| e * factor),
                    ..r.clone()
                })
                .collect(),
            dim: self.dim,
        }
    }

    /// Relative risks `exp(beta' W_i)`.
    pub fn risk_weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: beta.len(),
            });
        }
        Ok(self
            .records
            .iter()
            .map(|r| linear_predictor(&r.covariates, beta).exp())
            .collect())
    }

    pub fn read_csv(path: impl AsRef<Path>, schema: &SurvivalSchema) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, schema)
    }

    pub fn from_csv_reader<R: Read>(reader: R, schema: &SurvivalSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let find = |name: &str| headers.iter().position(|h| h == name);

        let time_col = find(&schema.time)
            .ok_or_else(|| Error::Schema(format!("missing mandatory column '{}'", schema.time)))?;
        let status_col = find(&schema.status).ok_or_else(|| {
            Error::Schema(format!("missing mandatory column '{}'", schema.status))
        })?;
        let entry_col = match &schema.entry {
            Some(name) => Some(
                find(name)
                    .ok_or_else(|| Error::Schema(format!("missing entry column '{name}'")))?,
            ),
            None => find("entry"),
        };
        let cov_cols: Vec<usize> = match &schema.covariates {
            Some(names) => names
                .iter()
                .map(|n| {
                    find(n).ok_or_else(|| Error::Schema(format!("missing covariate column '{n}'")))
                })
                .collect::<Result<_>>()?,
            None => (0..headers.len())
                .filter(|&c| c != time_col && c != status_col && Some(c) != entry_col)
                .collect(),
        };

        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let row_no = i + 1;
            let num = |col: usize| -> Result<f64> {
                let cell = row.get(col).unwrap_or("");
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: row_no,
                    message: format!(
                        "column '{}': cannot parse '{cell}' as a number",
                        headers[col]
                    ),
                })
            };
            let time = num(time_col)?;
            let status = num(status_col)?;
            let event = if status == 1.0 {
                true
            } else if status == 0.0 {
                false
            } else {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("status must be 0 or 1, got {status}"),
                });
            };
            let entry = match entry_col {
                Some(c) if !row.get(c).unwrap_or("").is_empty() => Some(num(c)?),
                _ => None,
            };
            let covariates = cov_cols
                .iter()
                .map(|&c| num(c))
                .collect::<Result<Vec<_>>>()?;
            let record = SurvivalRecord {
                time,
                event,
                entry,
                covariates,
            };
            record
                .validate()
                .map_err(|m| Error::Validation(format!("row {row_no}: {m}")))?;
            records.push(record);
        }
        Self::new(records)
    }

    /// Writes `entry` (only when some record has one), `time`, `status`, then `w1..wd`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let with_entry = self.records.iter().any(|r| r.entry.is_some());
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = Vec::new();
        if with_entry {
            header.push("entry".into());
        }
        header.push("time".into());
        header.push("status".into());
        header.extend((1..=self.dim).map(|k| format!("w{k}")));
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            if with_entry {
                row.push(r.entry.map(|e| e.to_string()).unwrap_or_default());
            }
            row.push(r.time.to_string());
            row.push(if r.event { "1".into() } else { "0".into() });
            row.extend(r.covariates.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn linear_predictor(w: &[f64], beta: &[f64]) -> f64 {
    w.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Destination of a multi-state row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    State(u32),
    Censored,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::State(s) => write!(f, "{s}"),
            Target::Censored => f.write_str(DEFAULT_CENSOR_TOKEN),
        }
    }
}

pub const DEFAULT_CENSOR_TOKEN: &str = "cens";

/// One sojourn of one subject in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub id: String,
    pub from: u32,
    pub to: Target,
    pub t_start: f64,
    pub t_stop: f64,
}

impl TransitionRecord {
    pub fn new(id: impl Into<String>, from: u32, to: Target, t_start: f64, t_stop: f64) -> Self {
        TransitionRecord {
            id: id.into(),
            from,
            to,
            t_start,
            t_stop,
        }
    }
}

/// Reads `id,from,to,t_start,t_stop` rows; `to` is a state number or the
/// literal `censor_token`.
pub fn read_multistate_csv(
    path: impl AsRef<Path>,
    censor_token: &str,
) -> Result<Vec<TransitionRecord>> {
    let file = std::fs::File::open(path)?;
    multistate_from_csv_reader(file, censor_token)
}

pub fn multistate_from_csv_reader<R: Read>(
    reader: R,
    censor_token: &str,
) -> Result<Vec<TransitionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing mandatory column '{name}'")))
    };
    let (c_id, c_from, c_to, c_start, c_stop) = (
        col("id")?,
        col("from")?,
        col("to")?,
        col("t_start")?,
        col("t_stop")?,
    );

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let parse_err = |c: usize, what: &str| Error::Parse {
            row: row_no,
            message: format!(
                "column '{}': cannot parse '{}' as {what}",
                headers[c],
                cell(c)
            ),
        };
        let from: u32 = cell(c_from)
            .parse()
            .map_err(|_| parse_err(c_from, "a state"))?;
        let to = if cell(c_to) == censor_token {
            Target::Censored
        } else {
            Target::State(cell(c_to).parse().map_err(|_| parse_err(c_to, "a state"))?)
        };
        let t_start: f64 = cell(c_start)
            .parse()
            .map_err(|_| parse_err(c_start, "a number"))?;
        let t_stop: f64 = cell(c_stop)
            .parse()
            .map_err(|_| parse_err(c_stop, "a number"))?;
        out.push(TransitionRecord {
            id: cell(c_id).to_owned(),
            from,
            to,
            t_start,
            t_stop,
        });
    }
    validate_trajectories(&out)?;
    Ok(out)
}

pub fn write_multistate_csv<W: Write>(records: &[TransitionRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "from", "to", "t_start", "t_stop"])?;
    for r in records {
        wtr.write_record([
            r.id.clone(),
            r.from.to_string(),
            r.to.to_string(),
            r.t_start.to_string(),
            r.t_stop.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Groups rows by subject, preserving first-appearance order of subjects and
/// row order within a subject.
pub fn group_by_subject(records: &[TransitionRecord]) -> Vec<(&str, Vec<&TransitionRecord>)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<&TransitionRecord>)> = Vec::new();
    for r in records {
        let k = *index.entry(r.id.as_str()).or_insert_with(|| {
            groups.push((r.id.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(r);
    }
    groups
}

/// Checks that each subject's rows chain into one trajectory: each row starts
/// where and when the previous one stopped, and nothing follows a censored row.
pub fn validate_trajectories(records: &[TransitionRecord]) -> Result<()> {
    for (id, rows) in group_by_subject(records) {
        let mut prev: Option<&TransitionRecord> = None;
        for r in rows {
            if !(r.t_start.is_finite() && r.t_stop.is_finite()) || r.t_start < 0.0 {
                return Err(Error::Validation(format!(
                    "subject {id}: invalid times ({}, {})",
                    r.t_start, r.t_stop
                )));
            }
            if r.t_start >= r.t_stop {
                return Err(Error::Validation(format!(
                    "subject {id}: t_start {} >= t_stop {}",
                    r.t_start, r.t_stop
                )));
            }
            if r.to == Target::State(r.from) {
                return Err(Error::Validation(format!(
                    "subject {id}: self-transition in state {}",
                    r.from
                )));
            }
            if let Some(p) = prev {
                match p.to {
                    Target::Censored => {
                        return Err(Error::Validation(format!(
                            "subject {id}: row after censoring at t={}",
                            p.t_stop
                        )))
                    }
                    Target::State(s) if s != r.from => {
                        return Err(Error::Validation(format!(
                        "subject {id}: state mismatch at t={} (entered {s}, next row leaves {})",
                        r.t_start, r.from
                    )))
                    }
                    _ => {}
                }
                if r.t_start != p.t_stop {
                    return Err(Error::Validation(format!(
                        "subject {id}: gap or overlap at t={} (previous row stops at {})",
                        r.t_start, p.t_stop
                    )));
                }
            }
            prev = Some(r);
        }
    }
    Ok(())
}

/// Survival frame for the direct `from -> to` transition.
///
/// Each subject that ever occupies `from` contributes one record built from its
/// first sojourn there: entry = sojourn start (left truncation when positive),
/// time = sojourn end, event = the sojourn ended by a jump to `to`. For the
/// illness-death model this gives the usual 0->1, 0->2 and 1->2 reductions.
pub fn split_transitions(
    records: &[TransitionRecord],
    from: u32,
    to: u32,
) -> Result<SurvivalFrame> {
    if from == to {
        return Err(Error::InvalidArgument(format!(
            "transition ({from},{to}) is a self-loop"
        )));
    }
    validate_trajectories(records)?;
    let mut out = Vec::new();
    for (_, rows) in group_by_subject(records) {
        if let Some(r) = rows.iter().find(|r| r.from == from) {
            let mut rec = SurvivalRecord::new(r.t_stop, r.to == Target::State(to));
            if r.t_start > 0.0 {
                rec.entry = Some(r.t_start);
            }
            out.push(rec);
        }
    }
    if out.is_empty() {
        return Err(Error::Validation(format!(
            "transition ({from},{to}): no subject is ever observed in state {from}"
        )));
    }
    SurvivalFrame::new(out)
}

/// Risk-set summary at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub eval_time: f64,
    pub at_risk_count: usize,
    /// `Zbar(t, beta) = sum_i 1(L_i < t <= T_i) exp(beta' W_i)`.
    pub weighted_risk: f64,
}

pub fn risk_profile(frame: &SurvivalFrame, t: f64, beta: &[f64]) -> Result<RiskProfile> {
    let weights = frame.risk_weights(beta)?;
    let mut count = 0;
    let mut total = 0.0;
    for (r, w) in frame.records().iter().zip(&weights) {
        if r.at_risk(t) {
            count += 1;
            total += w;
        }
    }
    Ok(RiskProfile {
        eval_time: t,
        at_risk_count: count,
        weighted_risk: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SurvivalFrame> {
        SurvivalFrame::from_csv_reader(s.as_bytes(), &SurvivalSchema::default())
    }

    fn ms(s: &str) -> Result<Vec<TransitionRecord>> {
        multistate_from_csv_reader(s.as_bytes(), DEFAULT_CENSOR_TOKEN)
    }

    #[test]
    fn parses_minimal_frame() {
        let f = parse("time,status\n1.0,1\n2.0,0").unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.dim(), 0);
        assert_eq!(f.records()[0], SurvivalRecord::new(1.0, true));
        assert_eq!(f.records()[1], SurvivalRecord::new(2.0, false));
    }

    #[test]
    fn rejects_entry_after_time() {
        let err = parse("entry,time,status\n0.5,0.4,1").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn reads_covariates_in_column_order() {
        let f = parse("time,status,w1,w2\n1.2,1,-1,0.3").unwrap();
        assert_eq!(f.dim(), 2);
        assert_eq!(f.records()[0].covariates, vec![-1.0, 0.3]);
    }

    #[test]
    fn malformed_number_reports_row() {
        match parse("time,status\n1.0,1\nabc,0").unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_status_is_schema_error() {
        assert!(matches!(
            parse("time,w1\n1.0,2").unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let f = SurvivalFrame::new(vec![
            SurvivalRecord::new(0.1 + 0.2, true)
                .with_entry(1e-17)
                .with_covariates(vec![-1.0, 1.0 / 3.0]),
            SurvivalRecord::new(std::f64::consts::PI, false).with_covariates(vec![2.5e-300, -0.0]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = SurvivalFrame::from_csv_reader(buf.as_slice(), &SurvivalSchema::default()).unwrap();
        for (a, b) in f.records().iter().zip(g.records()) {
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.entry.map(f64::to_bits), b.entry.map(f64::to_bits));
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.covariates), bits(&b.covariates));
        }
    }

    #[test]
    fn valid_illness_death_trajectory() {
        let recs = ms("id,from,to,t_start,t_stop\n1,0,1,0,2.0\n1,1,2,2.0,5.0").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].to, Target::State(2));
    }

    #[test]
    fn state_mismatch_names_subject() {
        let err = ms("id,from,to,t_start,t_stop\n1,0,1,0,2.0\n1,0,2,2.0,5.0").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("subject 1") && msg.contains("t=2"), "{msg}");
    }

    #[test]
    fn censored_row() {
        let recs = ms("id,from,to,t_start,t_stop\n1,0,cens,0,3.0").unwrap();
        assert_eq!(recs[0].to, Target::Censored);
        assert_eq!(recs[0].t_stop, 3.0);
    }

    fn one_subject() -> Vec<TransitionRecord> {
        vec![
            TransitionRecord::new("1", 0, Target::State(1), 0.0, 2.0),
            TransitionRecord::new("1", 1, Target::State(2), 2.0, 5.0),
        ]
    }

    #[test]
    fn split_illness_death_transitions() {
        let recs = one_subject();
        let f01 = split_transitions(&recs, 0, 1).unwrap();
        assert_eq!(f01.records(), &[SurvivalRecord::new(2.0, true)]);
        let f02 = split_transitions(&recs, 0, 2).unwrap();
        assert_eq!(f02.records(), &[SurvivalRecord::new(2.0, false)]);
        let f12 = split_transitions(&recs, 1, 2).unwrap();
        assert_eq!(
            f12.records(),
            &[SurvivalRecord::new(5.0, true).with_entry(2.0)]
        );
    }

    #[test]
    fn split_rejects_unvisited_state() {
        let recs = vec![TransitionRecord::new("1", 0, Target::Censored, 0.0, 3.0)];
        assert!(split_transitions(&recs, 1, 2).is_err());
        assert!(split_transitions(&recs, 0, 0).is_err());
    }

    #[test]
    fn risk_profile_counts() {
        let f = SurvivalFrame::from_times(&[1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(risk_profile(&f, 1.5, &[]).unwrap().weighted_risk, 1.0);
        let p = risk_profile(&f, 0.5, &[]).unwrap();
        assert_eq!((p.at_risk_count, p.weighted_risk), (2, 2.0));
        let g = SurvivalFrame::new(vec![
            SurvivalRecord::new(1.0, true).with_covariates(vec![1.0])
        ])
        .unwrap();
        let p = risk_profile(&g, 0.5, &[2f64.ln()]).unwrap();
        assert!((p.weighted_risk - 2.0).abs() < 1e-15);
        assert!(matches!(
            risk_profile(&g, 0.5, &[]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn risk_set_is_left_open() {
        let f = SurvivalFrame::new(vec![SurvivalRecord::new(3.0, true).with_entry(1.0)]).unwrap();
        assert_eq!(risk_profile(&f, 1.0, &[]).unwrap().at_risk_count, 0);
        assert_eq!(risk_profile(&f, 3.0, &[]).unwrap().at_risk_count, 1);
    }
}
