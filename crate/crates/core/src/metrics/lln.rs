//! Law-of-large-numbers diagnostics for empirical measures on path space.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::path::PathSample;
use crate::metrics::skorohod::{alignment_distance, AlignmentOptions};

/// Pairwise cost used on path space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathCost {
    /// Uniform distance `|x - y|_T`.
    Sup,
    /// Alignment approximation of `d°` with a bounded piece window.
    Skorohod { window: usize },
}

impl PathCost {
    pub fn distance(&self, x: &PathSample, y: &PathSample, times: &[f64]) -> f64 {
        match *self {
            PathCost::Sup => crate::metrics::path::sup_distance(x, y, times.len() - 1),
            PathCost::Skorohod { window } => alignment_distance(
                x,
                y,
                times,
                AlignmentOptions {
                    window: Some(window),
                    ..AlignmentOptions::default()
                },
            )
            .expect("paths share the grid"),
        }
    }
}

/// One row of a decay table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    pub reps: usize,
    /// Whether the estimates come from a heuristic coupling (upper bounds).
    pub upper_bound: bool,
}

impl DecayTable {
    /// Every estimate within its bound.
    pub fn within_bounds(&self) -> bool {
        self.rows.iter().all(|r| r.mean <= r.bound)
    }

    /// `mean(n_{i+1}) < mean(n_i)` for all consecutive rows, with the drop
    /// exceeding `z` combined standard errors.
    pub fn strictly_decreasing(&self, z: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].mean + z * se < w[0].mean
        })
    }

    /// CSV with columns `n, mean, stderr, bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "mean", "stderr", "bound"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), r.mean.to_string(), r.stderr.to_string(), r.bound.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean and standard error of a sample.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Both instrumented couplings of `L^n` and the reference measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnReport {
    /// Order-statistic coupling after replicating the subsample to the
    /// reference size (upper bound on the optimal transport cost).
    pub optimal: DecayTable,
    /// Independent product coupling, estimated from random pairs.
    pub independent: DecayTable,
    /// `D°(P, delta_0)^p`, the mean of `sup |x|^p` under the reference.
    pub moment: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LlnOptions {
    pub p: f64,
    pub reps: usize,
    pub seed: u64,
    pub cost: PathCost,
    /// Random pairs drawn per repetition for the independent coupling.
    pub independent_pairs: usize,
}

/// Estimates `E[D°(L^n, P)^p]` for each `n` by repeated subsampling of
/// `iid_paths`, with `P` represented by `reference`.
pub fn lln_diagnostic(
    iid_paths: &[PathSample],
    reference: &[PathSample],
    times: &[f64],
    n_list: &[usize],
    opts: LlnOptions,
) -> Result<LlnReport> {
    let m = reference.len();
    if m == 0 || iid_paths.is_empty() {
        return Err(Error::param("paths", "empty path sets"));
    }
    if iid_paths.iter().chain(reference).any(|x| x.len() != times.len()) {
        return Err(Error::param("paths", "path lengths must match the grid"));
    }
    for &n in n_list {
        if n == 0 || n > iid_paths.len() || !m.is_multiple_of(n) {
            return Err(Error::param(
                "n_list",
                format!("n = {n} must divide the reference size {m} and not exceed {} iid paths", iid_paths.len()),
            ));
        }
    }
    let p = opts.p;
    let last = times.len() - 1;
    let moment = reference.iter().map(|x| x.sup_norm(last).powf(p)).sum::<f64>() / m as f64;
    let bound = 2f64.powf(p) * moment;

    let mut ref_order: Vec<usize> = (0..m).collect();
    ref_order.sort_by(|&a, &b| reference[a].0[last].total_cmp(&reference[b].0[last]));

    let mut optimal = Vec::new();
    let mut independent = Vec::new();
    for &n in n_list {
        let results: Vec<(f64, f64)> = (0..opts.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(((n as u64) << 32) | rep as u64);
                let mut idx = sample(&mut rng, iid_paths.len(), n).into_vec();
                idx.sort_by(|&a, &b| iid_paths[a].0[last].total_cmp(&iid_paths[b].0[last]));
                let q = m / n;
                // replicated subsample in terminal order against sorted reference
                let opt = ref_order
                    .iter()
                    .enumerate()
                    .map(|(r, &j)| opts.cost.distance(&iid_paths[idx[r / q]], &reference[j], times).powf(p))
                    .sum::<f64>()
                    / m as f64;
                let pairs = opts.independent_pairs.max(1);
                let ind = (0..pairs)
                    .map(|_| {
                        let a = idx[rng.random_range(0..n)];
                        let b = rng.random_range(0..m);
                        opts.cost.distance(&iid_paths[a], &reference[b], times).powf(p)
                    })
                    .sum::<f64>()
                    / pairs as f64;
                (opt, ind)
            })
            .collect();
        let (o, i): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
        let (om, os) = mean_stderr(&o);
        let (im, is) = mean_stderr(&i);
        optimal.push(DecayRow { n, mean: om, stderr: os, bound });
        independent.push(DecayRow { n, mean: im, stderr: is, bound });
    }
    Ok(LlnReport {
        optimal: DecayTable {
            rows: optimal,
            reps: opts.reps,
            upper_bound: true,
        },
        independent: DecayTable {
            rows: independent,
            reps: opts.reps,
            upper_bound: false,
        },
        moment,
    })
}
