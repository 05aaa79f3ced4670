//! Fusion path of the 1-D fused lasso.
//!
//! As `lambda` grows, adjacent fused runs only ever merge. Each boundary
//! carries the sign of the data step across it; for a run `B`, `sigma_l` and
//! `sigma_r` are the signs of its left and right boundaries (`0` at the ends).
//! Between merges the run's level moves linearly:
//!
//! ```text
//! c_B(lambda) = mean(y_B) + lambda * m (sigma_r - sigma_l) / (2 |B|)
//! ```
//!
//! so the next merge of two neighbours is where their lines cross. A boundary
//! keeps its sign until it disappears, which means the whole path is described
//! by one number per boundary: the `lambda` at which it is fused away.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::FusedLassoFit;
use crate::error::{Error, Result};

/// Start of a `lambda` interval on which the change-point count is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathBreakpoint {
    pub lambda: f64,
    /// Change points of the fit for `lambda` in `[this, next)`.
    pub changepoint_count: usize,
}

/// Complete fusion path for one response vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPath {
    y: Vec<f64>,
    /// `sign(y_{j+1} - y_j)` for the boundary between positions `j` and `j+1`.
    sign: Vec<i8>,
    /// `lambda` at which that boundary is fused away (0 for equal neighbours).
    fused_at: Vec<f64>,
}

/// Merges closer than this (relative) are reported as one breakpoint.
const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Run {
    start: usize,
    end: usize,
    sum: f64,
    sigma_l: i8,
    sigma_r: i8,
    prev: Option<usize>,
    next: Option<usize>,
    alive: bool,
    version: u32,
}

impl Run {
    fn len(&self) -> f64 {
        (self.end - self.start + 1) as f64
    }

    fn mean(&self) -> f64 {
        self.sum / self.len()
    }

    fn slope(&self, m: f64) -> f64 {
        m * f64::from(self.sigma_r - self.sigma_l) / (2.0 * self.len())
    }
}

struct Candidate {
    lambda: f64,
    left: usize,
    left_version: u32,
    right_version: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // min-heap on lambda, ties broken by position for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lambda
            .total_cmp(&self.lambda)
            .then_with(|| other.left.cmp(&self.left))
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

impl FusedPath {
    pub fn new(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidArgument("empty response vector".into()));
        }
        if let Some(j) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite response at position {j}"
            )));
        }
        let n = y.len();
        let mf = n as f64;
        let sign_vec: Vec<i8> = y.windows(2).map(|w| sign(w[1] - w[0])).collect();
        let mut fused_at = vec![f64::INFINITY; n.saturating_sub(1)];

        // initial runs: maximal stretches of equal observations (fused at lambda = 0)
        let mut runs: Vec<Run> = Vec::new();
        for (j, &v) in y.iter().enumerate() {
            if j > 0 && sign_vec[j - 1] == 0 {
                fused_at[j - 1] = 0.0;
                let last = runs.last_mut().unwrap();
                last.end = j;
                last.sum += v;
            } else {
                runs.push(Run {
                    start: j,
                    end: j,
                    sum: v,
                    sigma_l: 0,
                    sigma_r: 0,
                    prev: None,
                    next: None,
                    alive: true,
                    version: 0,
                });
            }
        }
        let k = runs.len();
        for i in 0..k {
            if i > 0 {
                runs[i].prev = Some(i - 1);
                runs[i].sigma_l = sign_vec[runs[i].start - 1];
            }
            if i + 1 < k {
                runs[i].next = Some(i + 1);
                runs[i].sigma_r = sign_vec[runs[i].end];
            }
        }

        let crossing = |runs: &[Run], left: usize, floor: f64| -> Option<Candidate> {
            let right = runs[left].next?;
            let (a, b) = (&runs[left], &runs[right]);
            let gap = b.mean() - a.mean();
            let closing = a.slope(mf) - b.slope(mf);
            if gap == 0.0 {
                return Some(Candidate {
                    lambda: floor,
                    left,
                    left_version: a.version,
                    right_version: b.version,
                });
            }
            if closing == 0.0 || sign(gap) != sign(closing) {
                return None;
            }
            let lambda = (gap / closing).max(floor);
            Some(Candidate {
                lambda,
                left,
                left_version: a.version,
                right_version: b.version,
            })
        };

        let mut heap = BinaryHeap::new();
        for i in 0..k.saturating_sub(1) {
            if let Some(c) = crossing(&runs, i, 0.0) {
                heap.push(c);
            }
        }
        while let Some(c) = heap.pop() {
            let left = c.left;
            let Some(right) = runs[left].next else {
                continue;
            };
            if !runs[left].alive
                || runs[left].version != c.left_version
                || runs[right].version != c.right_version
            {
                continue;
            }
            fused_at[runs[left].end] = c.lambda;
            let absorbed = runs[right];
            let r = &mut runs[left];
            r.end = absorbed.end;
            r.sum += absorbed.sum;
            r.sigma_r = absorbed.sigma_r;
            r.next = absorbed.next;
            r.version += 1;
            runs[right].alive = false;
            if let Some(nx) = absorbed.next {
                runs[nx].prev = Some(left);
            }
            if let Some(p) = runs[left].prev {
                if let Some(cand) = crossing(&runs, p, c.lambda) {
                    heap.push(cand);
                }
            }
            if let Some(cand) = crossing(&runs, left, c.lambda) {
                heap.push(cand);
            }
        }
        debug_assert!(fused_at.iter().all(|l| l.is_finite()));
        Ok(FusedPath {
            y: y.to_vec(),
            sign: sign_vec,
            fused_at,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `lambda` at which each of the `m - 1` boundaries disappears.
    pub fn fusion_lambdas(&self) -> &[f64] {
        &self.fused_at
    }

    /// Number of change points of the fit at `lambda`.
    pub fn changepoint_count(&self, lambda: f64) -> usize {
        self.fused_at.iter().filter(|&&l| l > lambda).count()
    }

    /// Smallest `lambda` with at most `k` change points.
    pub fn min_lambda_for_count(&self, k: usize) -> f64 {
        if self.fused_at.len() <= k {
            return 0.0;
        }
        let mut sorted = self.fused_at.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[k]
    }

    /// Lambda values where the count drops, with the count from there on.
    pub fn breakpoints(&self) -> Vec<PathBreakpoint> {
        let mut lambdas: Vec<f64> = self.fused_at.iter().copied().filter(|&l| l > 0.0).collect();
        lambdas.sort_by(f64::total_cmp);
        let mut out = vec![PathBreakpoint {
            lambda: 0.0,
            changepoint_count: self.changepoint_count(0.0),
        }];
        let mut remaining = out[0].changepoint_count;
        for l in lambdas {
            remaining -= 1;
            let last = out.last_mut().unwrap();
            if last.lambda > 0.0 && (l - last.lambda) <= TIE_RTOL * l {
                last.changepoint_count = remaining;
            } else {
                out.push(PathBreakpoint {
                    lambda: l,
                    changepoint_count: remaining,
                });
            }
        }
        out
    }

    /// Fit at `lambda` read off the path.
    pub fn solve(&self, lambda: f64) -> FusedLassoFit {
        let m = self.y.len();
        let mf = m as f64;
        let mut alpha = vec![0.0; m];
        let mut start = 0;
        while start < m {
            let mut end = start;
            while end + 1 < m && self.fused_at[end] <= lambda {
                end += 1;
            }
            let len = (end - start + 1) as f64;
            let mean = self.y[start..=end].iter().sum::<f64>() / len;
            let sigma_l = if start > 0 {
                f64::from(self.sign[start - 1])
            } else {
                0.0
            };
            let sigma_r = if end + 1 < m {
                f64::from(self.sign[end])
            } else {
                0.0
            };
            let level = mean + lambda * mf * (sigma_r - sigma_l) / (2.0 * len);
            alpha[start..=end].fill(level);
            start = end + 1;
        }
        FusedLassoFit::from_alpha(alpha, lambda)
    }
}

/// Breakpoints of the fusion path of `y`.
pub fn flsa_path(y: &[f64]) -> Result<Vec<PathBreakpoint>> {
    Ok(FusedPath::new(y)?.breakpoints())
}
