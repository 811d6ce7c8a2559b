//! Skorohod-type distances between grid paths.
//!
//! Time changes are restricted to piecewise-linear bijections whose knots map
//! grid nodes to grid nodes. Over that class the distances are computed
//! exactly by a minimax dynamic program over the alignment lattice; they are
//! upper approximations of the distances over all time changes, and never
//! exceed the uniform distance because the identity is in the class.

use crate::error::{Error, Result};
use crate::metrics::path::{sup_distance, PathSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeChangePenalty {
    /// `||lambda||° = sup |log slope|` (the complete metric `d°`).
    LogSlope,
    /// `sup |lambda(t) - t|` (the metric `d`).
    Displacement,
}

/// Options for the alignment dynamic program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentOptions {
    pub penalty: TimeChangePenalty,
    /// Maximum number of grid steps a single linear piece may span on either
    /// axis; `None` searches all pieces.
    pub window: Option<usize>,
}

impl Default for AlignmentOptions {
    fn default() -> Self {
        Self {
            penalty: TimeChangePenalty::LogSlope,
            window: None,
        }
    }
}

/// `sup_{s in piece} |x(s) - y(lambda(s))|` for the linear piece mapping
/// `[t_i, t_{i+a})` onto `[t_j, t_{j+b})`.
fn piece_sup(x: &[f64], y: &[f64], i: usize, a: usize, j: usize, b: usize) -> f64 {
    // x-cell r covers [r/a, (r+1)/a), y-cell q covers [q/b, (q+1)/b);
    // walk both partitions in merged order.
    let (mut r, mut q) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    loop {
        sup = sup.max((x[i + r] - y[j + q]).abs());
        // compare (r+1)/a with (q+1)/b
        let lhs = (r + 1) * b;
        let rhs = (q + 1) * a;
        if lhs < rhs {
            r += 1;
        } else if rhs < lhs {
            q += 1;
        } else {
            r += 1;
            q += 1;
        }
        if r == a || q == b {
            break;
        }
    }
    sup
}

fn penalty(kind: TimeChangePenalty, times: &[f64], i: usize, a: usize, j: usize, b: usize) -> f64 {
    match kind {
        TimeChangePenalty::LogSlope => {
            let slope = (times[j + b] - times[j]) / (times[i + a] - times[i]);
            slope.ln().abs()
        }
        TimeChangePenalty::Displacement => (times[j] - times[i]).abs().max((times[j + b] - times[i + a]).abs()),
    }
}

/// Alignment distance between two paths on the grid `times`.
pub fn alignment_distance(x: &PathSample, y: &PathSample, times: &[f64], opts: AlignmentOptions) -> Result<f64> {
    let (xv, yv) = (x.values(), y.values());
    if xv.len() != yv.len() || xv.len() != times.len() {
        return Err(Error::param(
            "path",
            format!("grid mismatch: {} / {} values on {} nodes", xv.len(), yv.len(), times.len()),
        ));
    }
    let last = times.len() - 1;
    let end = (xv[last] - yv[last]).abs();
    if last == 0 {
        return Ok(end);
    }
    let w = opts.window.unwrap_or(last).clamp(1, last);
    let mut best = vec![f64::INFINITY; (last + 1) * (last + 1)];
    best[0] = 0.0;
    let idx = |i: usize, j: usize| i * (last + 1) + j;
    for i in 0..last {
        for j in 0..last {
            let base = best[idx(i, j)];
            if !base.is_finite() {
                continue;
            }
            for a in 1..=w.min(last - i) {
                for b in 1..=w.min(last - j) {
                    let pen = penalty(opts.penalty, times, i, a, j, b);
                    let cand0 = base.max(pen);
                    let target = idx(i + a, j + b);
                    if cand0 >= best[target] {
                        continue;
                    }
                    let cand = cand0.max(piece_sup(xv, yv, i, a, j, b));
                    if cand < best[target] {
                        best[target] = cand;
                    }
                }
            }
        }
    }
    let dp = best[idx(last, last)].max(end);
    // the identity alignment is in the class, so this only guards rounding
    Ok(dp.min(sup_distance(x, y, last)))
}

/// Approximation of the Skorohod metric `d°` (log-slope penalty).
pub fn skorohod_do(x: &PathSample, y: &PathSample, times: &[f64]) -> Result<f64> {
    alignment_distance(x, y, times, AlignmentOptions::default())
}

/// Approximation of the metric `d` (displacement penalty).
pub fn skorohod_d(x: &PathSample, y: &PathSample, times: &[f64]) -> Result<f64> {
    alignment_distance(
        x,
        y,
        times,
        AlignmentOptions {
            penalty: TimeChangePenalty::Displacement,
            window: None,
        },
    )
}
