//! Mean-field reflected BSDE by Picard iteration over measure flows, plus the
//! diagnostics for the reflection process and the backward Gronwall bound.

use crate::clock::Stopwatch;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::flow::MeasureFlow;
use crate::grid::TimeGrid;
use crate::metrics::wasserstein_p;
use crate::rbsde::{BackwardSolver, RegressionSpec, SolverOptions, SolverStats};
use crate::smallness::{check_smallness, interval_contraction, IntervalContraction, Regime};
use crate::solution::SolutionBundle;
use crate::stochastics::NoiseBundle;

/// One Picard sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    /// Index of the time interval, counted backward from `T` (always 0 in
    /// global mode).
    pub interval: usize,
    /// Sweep index within the interval, starting at 1.
    pub iter: usize,
    /// `max_k W_p(mu^{r+1}_k, mu^r_k)` over the nodes of the interval.
    pub sup_wasserstein_delta: f64,
    /// Seconds since the start of the solve.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PicardMode {
    /// Sweeps over the whole horizon.
    Global,
    /// Backward interval by interval. `delta = None` derives the interval
    /// length from the contraction bound.
    Interval { delta: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardOptions {
    pub tol_picard: f64,
    pub max_iter: usize,
    pub mode: PicardMode,
    /// Run even when the existence smallness condition fails.
    pub allow_outside_regime: bool,
    /// Fraction of the largest admissible interval used in interval mode.
    pub interval_fraction: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol_picard: 1e-10,
            max_iter: 200,
            mode: PicardMode::Global,
            allow_outside_regime: false,
            interval_fraction: 0.5,
        }
    }
}

/// Converged mean-field solution.
#[derive(Debug, Clone)]
pub struct MeanFieldSolution {
    pub bundle: SolutionBundle,
    pub flow: MeasureFlow,
    pub trace: Vec<TraceEntry>,
    /// Interval boundaries as node indices, descending from `N` to `0`.
    pub intervals: Vec<usize>,
    /// Contraction data in interval mode.
    pub contraction: Option<IntervalContraction>,
    pub stats: SolverStats,
}

impl MeanFieldSolution {
    /// Sweep counts per interval.
    pub fn iterations_per_interval(&self) -> Vec<usize> {
        let count = self.intervals.len().saturating_sub(1).max(1);
        (0..count)
            .map(|j| self.trace.iter().filter(|e| e.interval == j).count())
            .collect()
    }

    /// Largest ratio of consecutive deltas within an interval, ignoring
    /// deltas already below `floor`.
    pub fn max_trace_ratio(&self, floor: f64) -> f64 {
        self.trace
            .windows(2)
            .filter(|w| w[0].interval == w[1].interval && w[0].sup_wasserstein_delta > floor)
            .map(|w| w[1].sup_wasserstein_delta / w[0].sup_wasserstein_delta)
            .fold(0.0, f64::max)
    }

    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

/// Trace CSV with columns `interval, iter, sup_wasserstein_delta, wall_time`.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["interval", "iter", "sup_wasserstein_delta", "wall_time"])?;
    for e in trace {
        w.write_record([
            e.interval.to_string(),
            e.iter.to_string(),
            format!("{:e}", e.sup_wasserstein_delta),
            format!("{:.6}", e.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn interval_delta(flow: &MeasureFlow, prev: &MeasureFlow, nodes: std::ops::Range<usize>, p: f64) -> f64 {
    nodes
        .map(|k| wasserstein_p(flow.at(k).samples(), prev.at(k).samples(), p).expect("equal sample counts"))
        .fold(0.0, f64::max)
}

/// Solves the mean-field equation on the streams of `noise`:
/// `mu^0 = delta_0`, `mu^{r+1} = L[Y^{mu^r}]` until the node-sup
/// `W_p` change drops below `tol_picard`.
pub fn solve_meanfield(
    noise: &NoiseBundle,
    coeffs: &CoefficientSet,
    reg: RegressionSpec,
    solver_opts: SolverOptions,
    opts: PicardOptions,
) -> Result<MeanFieldSolution> {
    let start = Stopwatch::start();
    let p = coeffs.p;
    let verdict = check_smallness(p, coeffs.gamma1(), coeffs.gamma2(), Regime::Existence)?;
    if !verdict.pass {
        if !opts.allow_outside_regime {
            return Err(Error::Refused(format!(
                "existence smallness fails: g1^p + g2^p = {} >= {}",
                verdict.value, verdict.threshold
            )));
        }
        log::warn!("solving outside the existence regime (margin {})", verdict.margin);
    }
    let grid = noise.grid();
    let last = grid.steps();
    let (intervals, contraction) = match opts.mode {
        PicardMode::Global => (vec![last, 0], None),
        PicardMode::Interval { delta } => {
            let ic = if verdict.pass {
                Some(interval_contraction(
                    p,
                    coeffs.lipschitz_f(),
                    coeffs.gamma1(),
                    coeffs.gamma2(),
                    grid.horizon(),
                    opts.interval_fraction,
                )?)
            } else {
                None
            };
            let len = match (delta, ic) {
                (Some(d), _) => d,
                (None, Some(ic)) => ic.delta,
                (None, None) => grid.horizon(),
            };
            if !(len > 0.0) {
                return Err(Error::param("delta", format!("interval length must be positive, got {len}")));
            }
            (interval_nodes(grid, len), ic)
        }
    };

    let mut solver = BackwardSolver::new(noise, coeffs, reg, solver_opts)?;
    let terminal = solver.terminal_values();
    solver.check_terminal(&terminal)?;
    let mut bundle = solver.init_bundle(&terminal)?;
    let m = noise.n_particles();
    let mut flow = MeasureFlow::dirac(grid.nodes(), m, 0.0);
    flow.set_node(last, &terminal);
    let mut trace = Vec::new();

    for (j, w) in intervals.windows(2).enumerate() {
        let (hi, lo) = (w[0], w[1]);
        let mut converged = false;
        for iter in 1..=opts.max_iter {
            let prev = flow.clone();
            for k in (lo..hi).rev() {
                solver.step(&mut bundle, k, prev.at(k), true);
            }
            for k in lo..hi {
                flow.set_node(k, &bundle.y_at(k));
            }
            let delta = interval_delta(&flow, &prev, lo..hi, p);
            trace.push(TraceEntry {
                interval: j,
                iter,
                sup_wasserstein_delta: delta,
                wall_time: start.seconds(),
            });
            log::debug!("interval {j} sweep {iter}: delta {delta:e}");
            if delta < opts.tol_picard {
                converged = true;
                break;
            }
            if !delta.is_finite() {
                break;
            }
        }
        if !converged {
            let last_delta = trace.last().map_or(f64::NAN, |e| e.sup_wasserstein_delta);
            return Err(Error::Diverged {
                iterations: trace.iter().filter(|e| e.interval == j).count(),
                last_delta,
                trace,
            });
        }
        // the last sweep was computed under the previous flow; one more
        // solve is unnecessary since the change is below tolerance
    }
    Ok(MeanFieldSolution {
        bundle,
        flow,
        trace,
        intervals,
        contraction,
        stats: solver.stats,
    })
}

/// Node boundaries `N = b_0 > b_1 > ... > b_r = 0` of intervals of length
/// at most `delta` (at least one step each).
pub fn interval_nodes(grid: TimeGrid, delta: f64) -> Vec<usize> {
    let per = ((delta / grid.dt()) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let mut out = vec![grid.steps()];
    let mut b = grid.steps();
    while b > 0 {
        b = b.saturating_sub(per);
        out.push(b);
    }
    out
}

/// Nodes where `dK` exceeds a threshold without a jump of the driving noise
/// in the step: the grid proxy for a predictable jump of `K`.
#[derive(Debug, Clone, Serialize)]
pub struct KContinuityReport {
    pub threshold: f64,
    /// Number of flagged `(particle, node)` pairs.
    pub flagged: usize,
    /// Flagged reflection mass, averaged over particles.
    pub flagged_mass: f64,
    /// Fraction of particles with at least one flag.
    pub flagged_fraction: f64,
    /// Flag count per node.
    pub per_node: Vec<usize>,
}

/// `dK_k` pushes `Y_k` up over step `[t_k, t_{k+1})`, so an event in that
/// step counts as a jump of the noise.
pub fn continuity_of_k_diagnostic(bundle: &SolutionBundle, noise: &NoiseBundle, threshold: f64) -> KContinuityReport {
    let n = bundle.n_particles();
    let last = noise.grid().steps();
    let mut per_node = vec![0; bundle.nodes()];
    let mut mass = 0.0;
    let mut particles = 0;
    for i in 0..n {
        let mut any = false;
        for (k, slot) in per_node.iter_mut().enumerate().take(last) {
            let dk = bundle.dk(i, k);
            if dk > threshold && !noise.has_event(i, k) {
                *slot += 1;
                mass += dk;
                any = true;
            }
        }
        particles += usize::from(any);
    }
    KContinuityReport {
        threshold,
        flagged: per_node.iter().sum(),
        flagged_mass: mass / n as f64,
        flagged_fraction: particles as f64 / n as f64,
        per_node,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GronwallOutcome {
    /// Hypothesis holds and `g` stays below the bound.
    Holds,
    /// `g(t) <= c + int_t^T alpha g` fails at some node; the bound is not
    /// claimed.
    HypothesisViolated,
    /// Hypothesis holds on the grid but `g` exceeds the bound: the inputs are
    /// too coarse for the quadrature to represent the integral inequality.
    Inconsistent,
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallReport {
    /// `c exp(int_t^T alpha)` per node.
    pub bound: Vec<f64>,
    pub outcome: GronwallOutcome,
    /// `max_k (g_k - c - int_{t_k}^T alpha g)`.
    pub hypothesis_residual: f64,
    /// `max_k (g_k - bound_k)`.
    pub bound_residual: f64,
}

impl GronwallReport {
    pub fn satisfied(&self) -> bool {
        self.outcome == GronwallOutcome::Holds
    }
}

/// Backward Gronwall check with trapezoid quadrature. `tol` absorbs the
/// quadrature error on both inequalities.
pub fn backward_gronwall(g: &[f64], alpha: &[f64], c: f64, times: &[f64], tol: f64) -> Result<GronwallReport> {
    let n = times.len();
    if n == 0 || g.len() != n || alpha.len() != n {
        return Err(Error::param("g", "g, alpha and times must have the same nonzero length"));
    }
    if alpha.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::param("alpha", "must be nonnegative"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("times", "must be strictly increasing"));
    }
    let mut int_ag = vec![0.0; n];
    let mut int_a = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let h = times[k + 1] - times[k];
        int_ag[k] = int_ag[k + 1] + 0.5 * h * (alpha[k] * g[k] + alpha[k + 1] * g[k + 1]);
        int_a[k] = int_a[k + 1] + 0.5 * h * (alpha[k] + alpha[k + 1]);
    }
    let bound: Vec<f64> = int_a.iter().map(|a| c * a.exp()).collect();
    let hypothesis_residual = (0..n).map(|k| g[k] - c - int_ag[k]).fold(f64::NEG_INFINITY, f64::max);
    let bound_residual = (0..n).map(|k| g[k] - bound[k]).fold(f64::NEG_INFINITY, f64::max);
    let outcome = if hypothesis_residual > tol {
        GronwallOutcome::HypothesisViolated
    } else if bound_residual > tol {
        GronwallOutcome::Inconsistent
    } else {
        GronwallOutcome::Holds
    };
    Ok(GronwallReport {
        bound,
        outcome,
        hypothesis_residual,
        bound_residual,
    })
}
