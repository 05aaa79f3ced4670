//! Independent reference implementations used as test oracles. None of them
//! share code with the library routines they check.
#![allow(dead_code)]

use pchazard::event_data::{SurvivalFrame, Target, TransitionRecord};
use pchazard::multistate::IllnessDeathModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Fused lasso `(1/m)||y - a||^2 + lambda TV(a)` by accelerated projected
/// gradient on the dual of the equivalent TV problem, with adaptive restart.
/// Stops when the duality gap is below `gap_tol` (relative to `||y||^2`).
pub fn fista_fused_lasso(y: &[f64], lambda: f64, gap_tol: f64, max_iter: usize) -> Vec<f64> {
    let m = y.len();
    if m <= 1 {
        return y.to_vec();
    }
    let w = m as f64 * lambda / 2.0;
    // primal: 0.5 ||y - a||^2 + w ||D a||_1, a = y - D^T z, |z| <= w
    let dt = |z: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (i, zi) in z.iter().enumerate() {
            out[i] -= zi;
            out[i + 1] += zi;
        }
        out
    };
    let primal_of = |z: &[f64]| -> Vec<f64> { y.iter().zip(dt(z)).map(|(a, b)| a - b).collect() };
    let gap = |z: &[f64]| -> f64 {
        let a = primal_of(z);
        let p: f64 = 0.5 * y.iter().zip(&a).map(|(u, v)| (u - v).powi(2)).sum::<f64>()
            + w * a.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>();
        let d: f64 =
            0.5 * y.iter().map(|v| v * v).sum::<f64>() - 0.5 * a.iter().map(|v| v * v).sum::<f64>();
        p - d
    };
    let scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>();
    let mut z = vec![0.0; m - 1];
    let mut v = z.clone();
    let mut t = 1.0f64;
    let step = 0.25;
    for it in 0..max_iter {
        let a = primal_of(&v);
        // gradient of 0.5||y - D^T z||^2 w.r.t. z is -(D a)
        let z_new: Vec<f64> = (0..m - 1)
            .map(|i| (v[i] + step * (a[i + 1] - a[i])).clamp(-w, w))
            .collect();
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let restart = z_new
            .iter()
            .zip(&z)
            .zip(&v)
            .map(|((zn, zo), vv)| (vv - zn) * (zn - zo))
            .sum::<f64>()
            > 0.0;
        if restart {
            v = z_new.clone();
            t = 1.0;
        } else {
            v = z_new
                .iter()
                .zip(&z)
                .map(|(zn, zo)| zn + (t - 1.0) / t_new * (zn - zo))
                .collect();
            t = t_new;
        }
        z = z_new;
        if it % 50 == 0 && gap(&z) <= gap_tol * scale {
            break;
        }
    }
    primal_of(&z)
}

/// Nelson-Aalen by scanning every subject at every event time.
pub fn nelson_aalen_naive(frame: &SurvivalFrame, t: f64) -> f64 {
    let mut times: Vec<f64> = frame
        .records()
        .iter()
        .filter(|r| r.event && r.time <= t)
        .map(|r| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut a = 0.0;
    for s in times {
        let d = frame
            .records()
            .iter()
            .filter(|r| r.event && r.time == s)
            .count() as f64;
        let y = frame
            .records()
            .iter()
            .filter(|r| r.entry.unwrap_or(0.0) < s && s <= r.time)
            .count() as f64;
        if y > 0.0 {
            a += d / y;
        }
    }
    a
}

/// Dense-matrix effective noise `2 ||Xc' uc||_inf / n` with
/// `X_ij = 1(i >= j)`, `j = 2..n`, columns and `u` centred.
pub fn dense_effective_noise(u: &[f64]) -> f64 {
    let n = u.len();
    let nf = n as f64;
    let ubar = u.iter().sum::<f64>() / nf;
    let uc: Vec<f64> = u.iter().map(|v| v - ubar).collect();
    let mut best: f64 = 0.0;
    for j in 1..n {
        let col: Vec<f64> = (0..n).map(|i| if i >= j { 1.0 } else { 0.0 }).collect();
        let mean = col.iter().sum::<f64>() / nf;
        let dot: f64 = col.iter().zip(&uc).map(|(x, v)| (x - mean) * v).sum();
        best = best.max(dot.abs());
    }
    2.0 * best / nf
}

/// Forward equations of the illness-death model by classical RK4 with step
/// `h`, restarted at every hazard break so each stage sees smooth rates.
pub fn rk4_illness_death(model: &IllnessDeathModel, t_end: f64, h: f64) -> [f64; 3] {
    let mut knots: Vec<f64> = [&model.a01, &model.a02, &model.a12]
        .iter()
        .flat_map(|f| {
            let mut e = f.breaks.clone();
            e.push(f.domain.tau_min);
            e.push(f.domain.tau_max);
            e
        })
        .filter(|&k| k > 0.0 && k < t_end)
        .collect();
    knots.push(t_end);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut p = [1.0, 0.0, 0.0];
    let mut t = 0.0;
    for &k in &knots {
        let mid = 0.5 * (t + k);
        let (c, d, b) = (
            model.a01.eval(mid),
            model.a02.eval(mid),
            model.a12.eval(mid),
        );
        let f = |p: [f64; 3]| [-(c + d) * p[0], c * p[0] - b * p[1], d * p[0] + b * p[1]];
        let steps = ((k - t) / h).ceil().max(1.0) as usize;
        let dt = (k - t) / steps as f64;
        for _ in 0..steps {
            let k1 = f(p);
            let k2 = f(add(p, k1, dt / 2.0));
            let k3 = f(add(p, k2, dt / 2.0));
            let k4 = f(add(p, k3, dt));
            for i in 0..3 {
                p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        t = k;
    }
    p
}

fn add(p: [f64; 3], k: [f64; 3], s: f64) -> [f64; 3] {
    [p[0] + s * k[0], p[1] + s * k[1], p[2] + s * k[2]]
}

/// State occupied at `t` by each subject of an uncensored simulation.
pub fn empirical_occupation(records: &[TransitionRecord], t: f64) -> [f64; 3] {
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    let mut i = 0;
    while i < records.len() {
        let first = &records[i];
        let second = records.get(i + 1).filter(|r| r.id == first.id);
        total += 1;
        let state = if t < first.t_stop {
            0
        } else if first.to == Target::State(2) {
            2
        } else {
            match second {
                Some(r) if r.to == Target::State(2) && t >= r.t_stop => 2,
                _ => 1,
            }
        };
        counts[state] += 1;
        i += if second.is_some() { 2 } else { 1 };
    }
    counts.map(|c| c as f64 / total as f64)
}

/// Piecewise-constant signal plus Gaussian noise; occasionally rounded so that
/// neighbouring observations tie.
pub fn flsa_instance(m: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jumps = rng.random_range(0..=5usize);
    let mut cuts: Vec<usize> = (0..jumps).map(|_| rng.random_range(0..m)).collect();
    cuts.sort_unstable();
    let mut level: f64 = rng.random_range(-3.0..3.0);
    let sd: f64 = rng.random_range(0.0..2.0);
    let round = rng.random_bool(0.2);
    let mut truth = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for j in 0..m {
        if cuts.contains(&j) {
            level += rng.random_range(-4.0..4.0);
        }
        truth.push(level);
        let z: f64 = rng.sample(StandardNormal);
        let v = level + sd * z;
        y.push(if round { v.round() } else { v });
    }
    (truth, y)
}

/// `lambda` log-uniform between 1e-4 and twice the saturation value of `y`.
pub fn random_lambda(y: &[f64], u: f64) -> f64 {
    let hi = 2.0 * pchazard::flsa::saturation_lambda(y).max(1e-3);
    1e-4 * (hi / 1e-4).powf(u)
}
