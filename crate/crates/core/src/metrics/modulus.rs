//! Càdlàg modulus `w'_x(delta)` for piecewise-constant grid paths.

use crate::error::{Error, Result};
use crate::metrics::path::PathSample;

/// Oscillation `sup |x(t) - x(s)|` over `s, t in [t_u, t_v)`, for nodes `u < v`.
pub fn oscillation(x: &PathSample, u: usize, v: usize) -> f64 {
    let cells = &x.values()[u..v];
    let (lo, hi) = cells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    hi - lo
}

/// Largest jump `|x(t) - x(t-)|` over `t in (t_u, t_v]`.
pub fn max_jump(x: &PathSample, u: usize, v: usize) -> f64 {
    let vals = x.values();
    (u + 1..=v).map(|k| (vals[k] - vals[k - 1]).abs()).fold(0.0, f64::max)
}

/// `w'_x(delta) = inf max_i w_x([s_{i-1}, s_i))` over partitions
/// `0 = s_0 < ... < s_r = T` with every gap `> delta`.
///
/// Partition points are not restricted to the grid: a point strictly inside
/// cell `[t_c, t_{c+1})` makes both neighbouring intervals contain that cell,
/// so points fall into `2N + 1` ordered classes (each node, each open cell).
/// The search is a dynamic program over classes that tracks, for every class,
/// the Pareto front of (cost so far, earliest feasible position).
pub fn modulus_wprime(x: &PathSample, times: &[f64], delta: f64) -> Result<f64> {
    let vals = x.values();
    if vals.len() != times.len() || times.len() < 2 {
        return Err(Error::param("path", "path length must match a grid with at least one step"));
    }
    let n = times.len() - 1;
    let horizon = times[n] - times[0];
    if !(delta > 0.0 && delta < horizon) {
        return Err(Error::param("delta", format!("need 0 < delta < T, got {delta}")));
    }
    let eps = 1e-12 * horizon;
    // class code q: 2c = node c, 2c + 1 = interior of cell c
    let codes = 2 * n + 1;
    let first_cell = |q: usize| q / 2;
    let last_cell = |q: usize| (q - 1) / 2;
    let mut fronts: Vec<Vec<(f64, f64)>> = vec![Vec::new(); codes];
    fronts[0].push((0.0, times[0]));

    fn insert(front: &mut Vec<(f64, f64)>, cand: (f64, f64)) {
        if front.iter().any(|&(c, v)| c <= cand.0 && v <= cand.1) {
            return;
        }
        front.retain(|&(c, v)| !(cand.0 <= c && cand.1 <= v));
        front.push(cand);
    }

    for q1 in 0..codes - 1 {
        let states = std::mem::take(&mut fronts[q1]);
        for &(cost, pos) in &states {
            let lo = first_cell(q1);
            let mut hi_val = f64::NEG_INFINITY;
            let mut lo_val = f64::INFINITY;
            for q2 in q1 + 1..codes {
                let hi = last_cell(q2);
                if hi >= lo && hi < n {
                    hi_val = hi_val.max(vals[hi]);
                    lo_val = lo_val.min(vals[hi]);
                }
                let osc = if hi_val >= lo_val { hi_val - lo_val } else { 0.0 };
                let next = if q2 % 2 == 0 {
                    let t = times[q2 / 2];
                    if t - pos > delta + eps {
                        Some(t)
                    } else {
                        None
                    }
                } else {
                    let c = q2 / 2;
                    let start = times[c].max(pos + delta);
                    if start + eps < times[c + 1] {
                        Some(start)
                    } else {
                        None
                    }
                };
                if let Some(p) = next {
                    insert(&mut fronts[q2], (cost.max(osc), p));
                }
            }
        }
        fronts[q1] = states;
    }
    Ok(fronts[codes - 1]
        .iter()
        .map(|&(c, _)| c)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|k| k as f64).collect()
    }

    fn path(v: &[f64]) -> PathSample {
        PathSample::new(v.to_vec()).unwrap()
    }

    /// Brute force over partitions whose points lie on a mesh of width 1/8,
    /// evaluating oscillations by sampling each interval on the same mesh.
    fn brute_force(x: &[f64], n: usize, delta: f64) -> f64 {
        let sub = 8usize;
        let pts = n * sub;
        let value = |m: usize| x[(m / sub).min(n)];
        let osc = |a: usize, b: usize| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for m in a..b {
                lo = lo.min(value(m));
                hi = hi.max(value(m));
            }
            hi - lo
        };
        // best[m] = minimal max-oscillation of a partition of [0, m/sub]
        let mut best = vec![f64::INFINITY; pts + 1];
        best[0] = 0.0;
        for b in 1..=pts {
            for a in 0..b {
                if (b - a) as f64 / sub as f64 > delta + 1e-12 && best[a].is_finite() {
                    best[b] = best[b].min(best[a].max(osc(a, b)));
                }
            }
        }
        best[pts]
    }

    #[test]
    fn constant_path_has_zero_modulus() {
        let t = grid(6);
        for d in [0.5, 1.0, 2.5, 5.9] {
            assert_eq!(modulus_wprime(&path(&[2.0; 7]), &t, d).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_jump_can_be_cut() {
        let t = grid(8);
        let x = path(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(modulus_wprime(&x, &t, 3.5).unwrap(), 0.0);
        // delta beyond the distance to the nearer endpoint forces a shared interval
        assert_eq!(modulus_wprime(&x, &t, 4.5).unwrap(), 1.0);
    }

    #[test]
    fn close_jumps_cannot_be_separated() {
        let t = grid(8);
        let x = path(&[0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        assert!(modulus_wprime(&x, &t, 1.5).unwrap() >= 1.0);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..150 {
            let n = rng.random_range(2..=8);
            let t = grid(n);
            let x: Vec<f64> = (0..=n).map(|_| rng.random_range(0..4) as f64).collect();
            let delta = rng.random_range(1..(n * 8 - 1)) as f64 / 8.0 + 1.0 / 16.0;
            if delta >= n as f64 {
                continue;
            }
            let dp = modulus_wprime(&path(&x), &t, delta).unwrap();
            let bf = brute_force(&x, n, delta);
            assert_eq!(dp, bf, "x {x:?} delta {delta}");
        }
    }

    #[test]
    fn oscillation_bound_on_grid_intervals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for _ in 0..300 {
            let n = rng.random_range(2..=10);
            let t = grid(n);
            let x = path(&(0..=n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let u = rng.random_range(0..n);
            let v = rng.random_range(u + 1..=n);
            if (v - u) == n {
                continue;
            }
            let w = oscillation(&x, u, v);
            let bound = 2.0 * modulus_wprime(&x, &t, (v - u) as f64).unwrap() + max_jump(&x, u, v);
            assert!(w <= bound + 1e-12, "w {w} > bound {bound}");
        }
    }

    #[test]
    fn delta_out_of_range() {
        let t = grid(3);
        let x = path(&[0.0; 4]);
        assert!(modulus_wprime(&x, &t, 0.0).is_err());
        assert!(modulus_wprime(&x, &t, 3.0).is_err());
    }
}
