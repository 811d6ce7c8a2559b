//! The `n`-particle system of weakly interacting reflected BSDEs, where the
//! empirical measure `L_n[Y_k]` replaces the law in driver and obstacle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::flow::{sorted, Measure, MeasureFlow};
use crate::rbsde::{BackwardSolver, RegressionSpec, SolverOptions, SolverStats};
use crate::solution::SolutionBundle;
use crate::stochastics::NoiseBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleOptions {
    /// Stopping tolerance of the coupled per-node fixed point, relative to
    /// `1 + max |y|`.
    pub tol_inner_vec: f64,
    pub max_sweeps: usize,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            tol_inner_vec: 1e-13,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParticleSolution {
    pub bundle: SolutionBundle,
    /// Largest number of synchronous sweeps needed at a node.
    pub max_sweeps: usize,
    pub stats: SolverStats,
}

impl ParticleSolution {
    pub fn flow(&self) -> MeasureFlow {
        empirical_flow(&self.bundle)
    }
}

/// `k -> L_n[Y_k]`.
pub fn empirical_flow(bundle: &SolutionBundle) -> MeasureFlow {
    bundle.flow()
}

/// Solves the particle system on the streams of `noise` with terminal values
/// `terminals[i]` for particle `i`.
///
/// At each node the continuation, `Z` and `U` of particle `i` are regressed
/// on its own state (pooled across particles), then the `n`-vector map
/// `y -> reflect_i(C_i + f(y_i, Z_i, U_i, L_n[y]) dt)` is iterated by
/// synchronous sweeps until it stops moving.
pub fn solve_particle_system(
    noise: &NoiseBundle,
    coeffs: &CoefficientSet,
    terminals: &[f64],
    reg: RegressionSpec,
    solver_opts: SolverOptions,
    opts: ParticleOptions,
) -> Result<ParticleSolution> {
    let mut solver = BackwardSolver::new(noise, coeffs, reg, solver_opts)?;
    solver.check_terminal(terminals)?;
    let mut bundle = solver.init_bundle(terminals)?;
    let m = noise.marks();
    let mut max_sweeps = 0;
    for k in (0..noise.grid().steps()).rev() {
        let cont = solver.continuation(k, &bundle.y_at(k + 1));
        let solver_ref = &solver;
        let update = |y: &[f64]| -> (Vec<(f64, f64)>, usize) {
            let law = sorted(y);
            let mu_mean = Measure::from_sorted(&law).mean();
            let rows: Vec<(f64, f64, usize)> = (0..y.len())
                .into_par_iter()
                .map(|i| {
                    let u = &cont.u[i * m..(i + 1) * m];
                    let (yt, inner) = solver_ref.implicit_step(cont.c[i], cont.z[i], u, mu_mean);
                    let (y, dk, _) = solver_ref.reflect(k, i, yt, mu_mean);
                    (y, dk, inner)
                })
                .collect();
            let inner = rows.iter().map(|r| r.2).max().unwrap_or(0);
            (rows.into_iter().map(|(y, dk, _)| (y, dk)).collect(), inner)
        };
        let mut y = cont.c.clone();
        let mut rows = Vec::new();
        let mut done = false;
        let mut inner_max = 0;
        for sweep in 1..=opts.max_sweeps {
            let (next, inner) = update(&y);
            inner_max = inner_max.max(inner);
            let scale = 1.0 + next.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
            let change = next.iter().zip(&y).map(|(r, y)| (r.0 - y).abs()).fold(0.0, f64::max);
            y = next.iter().map(|r| r.0).collect();
            rows = next;
            if change <= opts.tol_inner_vec * scale {
                max_sweeps = max_sweeps.max(sweep);
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::Diverged {
                iterations: opts.max_sweeps,
                last_delta: f64::NAN,
                trace: Vec::new(),
            });
        }
        solver.stats.max_inner_iterations = solver.stats.max_inner_iterations.max(inner_max);
        for (i, (y, dk)) in rows.into_iter().enumerate() {
            bundle.set(i, k, y, cont.z[i], &cont.u[i * m..(i + 1) * m], dk);
        }
    }
    Ok(ParticleSolution {
        bundle,
        max_sweeps,
        stats: solver.stats,
    })
}

/// `min_{i,k} (Y^i_k - h(t_k, Y^i_k, L_n[Y_k]))`.
pub fn self_consistency_margin(bundle: &SolutionBundle, coeffs: &CoefficientSet, noise: &NoiseBundle) -> f64 {
    crate::rbsde::obstacle_margin(bundle, coeffs, noise, crate::rbsde::ObstacleFlow::Empirical)
}

/// Entry of the off-diagonal martingale diagnostic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OffDiagonal {
    pub i: usize,
    pub j: usize,
    /// `|sum_k dY^i_k dB^j_k| / sum_k (dB^j_k)^2`: the time-pooled regression
    /// coefficient of particle `i`'s increments on particle `j`'s Brownian
    /// increments. For `i = j` this estimates the average `Z^i`.
    pub coefficient: f64,
}

/// Time-pooled regression of `Y^i` increments on other particles' Brownian
/// increments, for the first `limit` particles.
pub fn off_diagonal_diagnostic(bundle: &SolutionBundle, noise: &NoiseBundle, limit: usize) -> Vec<OffDiagonal> {
    let n = bundle.n_particles().min(limit);
    let steps = noise.grid().steps();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..steps {
                let dy = bundle.y(i, k + 1) - bundle.y(i, k);
                let db = noise.db(j, k);
                num += dy * db;
                den += db * db;
            }
            out.push(OffDiagonal {
                i,
                j,
                coefficient: if den > 0.0 { (num / den).abs() } else { 0.0 },
            });
        }
    }
    out
}

pub fn write_off_diagonal_csv<W: std::io::Write>(rows: &[OffDiagonal], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "coefficient"])?;
    for r in rows {
        w.write_record([r.i.to_string(), r.j.to_string(), format!("{:e}", r.coefficient)])?;
    }
    w.flush()?;
    Ok(())
}
