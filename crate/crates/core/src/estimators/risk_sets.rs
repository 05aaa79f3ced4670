use crate::event_data::SurvivalFrame;

/// Risk-set sums at one distinct event time.
#[derive(Debug, Clone)]
pub(crate) struct EventTime {
    pub time: f64,
    pub events: usize,
    /// Sum of covariate vectors over the subjects with an event at `time`.
    pub event_cov_sum: Vec<f64>,
    /// `sum_{at risk} w_i`
    pub s0: f64,
    /// `sum_{at risk} w_i W_i`
    pub s1: Vec<f64>,
    /// `sum_{at risk} w_i W_i W_i'`, row-major `d x d`; empty unless requested.
    pub s2: Vec<f64>,
}

/// Sweeps the distinct event times from last to first, adding subjects whose
/// observed time is `>= t` and removing those whose entry time is `>= t`, so the
/// running sums cover exactly `{i : L_i < t <= T_i}`.
pub(crate) fn event_times(
    frame: &SurvivalFrame,
    weights: &[f64],
    second_moment: bool,
) -> Vec<EventTime> {
    let recs = frame.records();
    let d = frame.dim();
    let mut times: Vec<f64> = recs.iter().filter(|r| r.event).map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut by_exit: Vec<usize> = (0..recs.len()).collect();
    by_exit.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time));
    let mut by_entry: Vec<usize> = (0..recs.len())
        .filter(|&i| recs[i].entry.is_some())
        .collect();
    by_entry.sort_by(|&a, &b| recs[b].entry_time().total_cmp(&recs[a].entry_time()));

    let d2 = if second_moment { d * d } else { 0 };
    let mut add = Moments::new(d, d2);
    let mut sub = Moments::new(d, d2);
    let (mut pa, mut ps) = (0, 0);

    let mut out: Vec<EventTime> = Vec::with_capacity(times.len());
    for &t in times.iter().rev() {
        let mut events = 0;
        let mut event_cov_sum = vec![0.0; d];
        while pa < by_exit.len() && recs[by_exit[pa]].time >= t {
            let i = by_exit[pa];
            add.push(&recs[i].covariates, weights[i], second_moment);
            pa += 1;
        }
        while ps < by_entry.len() && recs[by_entry[ps]].entry_time() >= t {
            let i = by_entry[ps];
            sub.push(&recs[i].covariates, weights[i], second_moment);
            ps += 1;
        }
        // subjects with an event exactly at t sit at the tail of the added block
        for &i in by_exit[..pa].iter().rev() {
            if recs[i].time != t {
                break;
            }
            if recs[i].event {
                events += 1;
                for (s, w) in event_cov_sum.iter_mut().zip(&recs[i].covariates) {
                    *s += w;
                }
            }
        }
        out.push(EventTime {
            time: t,
            events,
            event_cov_sum,
            s0: add.s0 - sub.s0,
            s1: add.s1.iter().zip(&sub.s1).map(|(a, b)| a - b).collect(),
            s2: add.s2.iter().zip(&sub.s2).map(|(a, b)| a - b).collect(),
        });
    }
    out.reverse();
    out
}

struct Moments {
    s0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn new(d: usize, d2: usize) -> Self {
        Moments {
            s0: 0.0,
            s1: vec![0.0; d],
            s2: vec![0.0; d2],
        }
    }

    fn push(&mut self, w: &[f64], weight: f64, second: bool) {
        self.s0 += weight;
        for (s, x) in self.s1.iter_mut().zip(w) {
            *s += weight * x;
        }
        if second {
            let d = w.len();
            for a in 0..d {
                for b in 0..d {
                    self.s2[a * d + b] += weight * w[a] * w[b];
                }
            }
        }
    }
}
