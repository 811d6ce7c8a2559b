//! Propagation-of-chaos and law-of-large-numbers experiments.
//!
//! For each `(n, rep)` cell, `n` fresh streams drive both the particle system
//! and `n` copies of the mean-field equation solved under the reference flow
//! `mu*` (synchronous coupling: same noise, same terminal values).

use std::io::Write;
use crate::clock::Stopwatch;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::metrics::{mean_stderr, sup_time_wasserstein_pow, DecayRow, DecayTable};
use crate::meanfield::MeanFieldSolution;
use crate::particles::{solve_particle_system, ParticleOptions};
use crate::rbsde::{solve_rbsde, BackwardSolver, RegressionSpec, SolverOptions};
use crate::solution::SolutionBundle;
use crate::stochastics::NoiseBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosConfig {
    pub n_list: Vec<usize>,
    pub reps: usize,
    /// Order of the Wasserstein error on `Y` flows.
    pub wasserstein_p: f64,
    /// `xi^{i,n} = xi^i + terminal_perturbation / n`.
    pub terminal_perturbation: f64,
    /// Wall-clock budget in seconds; cells not started in time are skipped.
    pub budget_seconds: Option<f64>,
    /// Record wall time per cell (disable for byte-identical reports).
    pub record_timing: bool,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 200, 400, 800],
            reps: 20,
            wasserstein_p: 2.0,
            terminal_perturbation: 0.0,
            budget_seconds: None,
            record_timing: true,
        }
    }
}

/// Errors of one `(n, rep)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosRow {
    pub n: usize,
    pub rep: usize,
    /// `max_k W_q^q(L_n[Y^n_k], mu*_k)`.
    pub err_y_supw: f64,
    /// `mean_i max_k |Y^{i,n}_k - Y^i_k|^p`.
    pub err_y_sp: f64,
    /// `mean_i (sum_k |Z^{i,n}_k - Z^i_k|^2 dt)^{p/2}`.
    pub err_z: f64,
    /// `mean_i (sum_k |U^{i,n}_k - U^i_k|_nu^2 dt)^{p/2}`.
    pub err_u: f64,
    /// `mean_i max_k |K^{i,n}_k - K^i_k|^p`.
    pub err_k: f64,
    pub seconds: f64,
}

impl ChaosRow {
    pub fn component_sum(&self) -> f64 {
        self.err_y_sp + self.err_z + self.err_u + self.err_k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosSummary {
    pub n: usize,
    pub reps: usize,
    pub supw_mean: f64,
    pub supw_stderr: f64,
    pub component_mean: f64,
    pub component_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosReport {
    pub rows: Vec<ChaosRow>,
    pub summary: Vec<ChaosSummary>,
    pub seed: u64,
    pub reference_samples: usize,
    /// Set when the budget cut the experiment short.
    pub partial: bool,
    pub seconds: f64,
}

impl ChaosReport {
    pub fn summary_for(&self, n: usize) -> Option<&ChaosSummary> {
        self.summary.iter().find(|s| s.n == n)
    }

    pub fn all_nonnegative(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.err_y_supw, r.err_y_sp, r.err_z, r.err_u, r.err_k]
                .iter()
                .all(|v| *v >= 0.0)
        })
    }

    /// CSV with columns `n, rep, err_Y_supW, err_Y_Sp, err_Z, err_U, err_K, seconds`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "rep", "err_Y_supW", "err_Y_Sp", "err_Z", "err_U", "err_K", "seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.rep.to_string(),
                format!("{:e}", r.err_y_supw),
                format!("{:e}", r.err_y_sp),
                format!("{:e}", r.err_z),
                format!("{:e}", r.err_u),
                format!("{:e}", r.err_k),
                format!("{:.6}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stream ids of cell `(index, rep)`, disjoint from the reference streams
/// `0..reference` and from every other cell.
fn cell_streams(reference: usize, max_n: usize, cells_per_rep: usize, index: usize, rep: usize, n: usize) -> Vec<u64> {
    let base = reference + (rep * cells_per_rep + index) * max_n;
    (base..base + n).map(|s| s as u64).collect()
}

/// Component errors between the particle system and its coupled copies.
pub fn component_errors(system: &SolutionBundle, copies: &SolutionBundle, noise: &NoiseBundle, p: f64) -> [f64; 4] {
    let n = system.n_particles();
    let nodes = system.nodes();
    let dt = noise.grid().dt();
    let nu = noise.jumps();
    let mut acc = [0.0; 4];
    for i in 0..n {
        let (mut sy, mut sz, mut su, mut sk) = (0.0f64, 0.0, 0.0, 0.0f64);
        let (mut ka, mut kb) = (0.0f64, 0.0f64);
        for k in 0..nodes {
            sy = sy.max((system.y(i, k) - copies.y(i, k)).abs());
            sk = sk.max((ka - kb).abs());
            if k + 1 < nodes {
                sz += (system.z(i, k) - copies.z(i, k)).powi(2) * dt;
                let du: Vec<f64> = system.u(i, k).iter().zip(copies.u(i, k)).map(|(a, b)| a - b).collect();
                su += nu.norm_sq(&du) * dt;
                ka += system.dk(i, k);
                kb += copies.dk(i, k);
            }
        }
        sk = sk.max((ka - kb).abs());
        acc[0] += sy.powf(p);
        acc[1] += sz.powf(p / 2.0);
        acc[2] += su.powf(p / 2.0);
        acc[3] += sk.powf(p);
    }
    acc.map(|v| v / n as f64)
}

fn summarize(rows: &[ChaosRow], n_list: &[usize]) -> Vec<ChaosSummary> {
    n_list
        .iter()
        .filter_map(|&n| {
            let cell: Vec<&ChaosRow> = rows.iter().filter(|r| r.n == n).collect();
            if cell.is_empty() {
                return None;
            }
            let supw: Vec<f64> = cell.iter().map(|r| r.err_y_supw).collect();
            let comp: Vec<f64> = cell.iter().map(|r| r.component_sum()).collect();
            let (supw_mean, supw_stderr) = mean_stderr(&supw);
            let (component_mean, component_stderr) = mean_stderr(&comp);
            Some(ChaosSummary {
                n,
                reps: cell.len(),
                supw_mean,
                supw_stderr,
                component_mean,
                component_stderr,
            })
        })
        .collect()
}

fn check_reference(reference: &MeanFieldSolution, n_list: &[usize]) -> Result<usize> {
    let m = reference.flow.sample_count();
    if let Some(&n) = n_list.iter().find(|&&n| n == 0 || !m.is_multiple_of(n)) {
        return Err(Error::param(
            "n_list",
            format!("particle count {n} must be positive and divide the reference sample count {m}"),
        ));
    }
    Ok(m)
}

/// Runs the propagation-of-chaos ladder against a converged mean-field
/// reference.
pub fn run_chaos_experiment(
    coeffs: &CoefficientSet,
    reference: &MeanFieldSolution,
    reference_noise: &NoiseBundle,
    reg: RegressionSpec,
    solver_opts: SolverOptions,
    particle_opts: ParticleOptions,
    cfg: &ChaosConfig,
) -> Result<ChaosReport> {
    let start = Stopwatch::start();
    let m = check_reference(reference, &cfg.n_list)?;
    let max_n = cfg.n_list.iter().copied().max().unwrap_or(0);
    let cells: Vec<(usize, usize, usize)> = (0..cfg.reps)
        .flat_map(|rep| cfg.n_list.iter().enumerate().map(move |(idx, &n)| (rep, idx, n)))
        .collect();
    let grid = reference_noise.grid();
    let seed = reference_noise.seed();
    let results: Vec<Option<Result<ChaosRow>>> = cells
        .par_iter()
        .map(|&(rep, idx, n)| {
            if cfg.budget_seconds.is_some_and(|b| start.seconds() > b) {
                return None;
            }
            let t0 = Stopwatch::start();
            let row = (|| {
                let ids = cell_streams(m, max_n, cfg.n_list.len(), idx, rep, n);
                let noise = NoiseBundle::simulate_streams(grid, &coeffs.jumps, seed, ids)?;
                let copies = solve_rbsde(&noise, coeffs, &reference.flow, reg, solver_opts)?;
                let xi = copies.y_at(grid.steps());
                let terminals: Vec<f64> = xi.iter().map(|x| x + cfg.terminal_perturbation / n as f64).collect();
                let system = solve_particle_system(&noise, coeffs, &terminals, reg, solver_opts, particle_opts)?;
                let err_y_supw = sup_time_wasserstein_pow(&system.flow(), &reference.flow, cfg.wasserstein_p)?;
                let [err_y_sp, err_z, err_u, err_k] = component_errors(&system.bundle, &copies, &noise, coeffs.p);
                Ok(ChaosRow {
                    n,
                    rep,
                    err_y_supw,
                    err_y_sp,
                    err_z,
                    err_u,
                    err_k,
                    seconds: if cfg.record_timing { t0.seconds() } else { 0.0 },
                })
            })();
            Some(row)
        })
        .collect();
    let partial = results.iter().any(Option::is_none);
    let rows = results.into_iter().flatten().collect::<Result<Vec<_>>>()?;
    Ok(ChaosReport {
        summary: summarize(&rows, &cfg.n_list),
        rows,
        seed,
        reference_samples: m,
        partial,
        seconds: if cfg.record_timing { start.seconds() } else { 0.0 },
    })
}

/// For each `n`: `n` copies driven by fresh streams and solved under the
/// reference flow, scored by `max_k W_p^p(L_n[Y_k], mu*_k)`. The bound column
/// is `2^p sup_k int |y|^p mu*_k(dy)`.
pub fn lln_experiment(
    coeffs: &CoefficientSet,
    reference: &MeanFieldSolution,
    reference_noise: &NoiseBundle,
    reg: RegressionSpec,
    solver_opts: SolverOptions,
    n_list: &[usize],
    reps: usize,
    p: f64,
) -> Result<DecayTable> {
    let m = check_reference(reference, n_list)?;
    let max_n = n_list.iter().copied().max().unwrap_or(0);
    let grid = reference_noise.grid();
    let seed = reference_noise.seed();
    let moment = (0..reference.flow.nodes())
        .map(|k| reference.flow.at(k).moment(p))
        .fold(0.0, f64::max);
    let bound = 2f64.powf(p) * moment;
    let mut rows = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let values = (0..reps)
            .into_par_iter()
            .map(|rep| {
                // offset past the chaos cells so both experiments can share a seed
                let ids = cell_streams(m, max_n, n_list.len(), idx, reps + rep, n);
                let noise = NoiseBundle::simulate_streams(grid, &coeffs.jumps, seed, ids)?;
                let copies = solve_rbsde(&noise, coeffs, &reference.flow, reg, solver_opts)?;
                sup_time_wasserstein_pow(&copies.flow(), &reference.flow, p)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, stderr) = mean_stderr(&values);
        rows.push(DecayRow { n, mean, stderr, bound });
    }
    Ok(DecayTable {
        rows,
        reps,
        upper_bound: false,
    })
}

/// Terminal values of `noise` under `coeffs`.
pub fn terminal_values(noise: &NoiseBundle, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
    let solver = BackwardSolver::new(noise, coeffs, RegressionSpec::constant(), SolverOptions::default())?;
    Ok(solver.terminal_values())
}
