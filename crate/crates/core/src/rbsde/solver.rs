//! Backward scheme for a reflected BSDE with jumps under a frozen measure flow.
//!
//! For `k = N-1, ..., 0`:
//! 1. regress `C_k = E[Y_{k+1} | x_k]`, then `Z_k` and `U_k` from the centred
//!    residual `Y_{k+1} - C_k` against `dB_k` and `dN~_k`;
//! 2. implicit driver step `y = C_k + f(t_k, y, Z_k, U_k, mu_k) dt`;
//! 3. reflection onto `{y >= h(t_k, x_k, y, mu_k)}` through the binding point.

use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::flow::{sorted, Measure, MeasureFlow};
use crate::rbsde::regression::{canonical_order, NodeRegression, RegressionSpec};
use crate::solution::SolutionBundle;
use crate::stochastics::NoiseBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Stopping tolerance of the implicit driver step, relative to the first
    /// correction.
    pub tol_inner: f64,
    pub max_inner: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_inner: 1e-12,
            max_inner: 10_000,
        }
    }
}

/// Counters collected during a backward sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub max_inner_iterations: usize,
    pub max_binding_iterations: usize,
    /// Nodes where the regression degree had to be lowered.
    pub reduced_degree_nodes: usize,
}

/// Regressed quantities at one node.
#[derive(Debug, Clone)]
pub struct Continuation {
    pub c: Vec<f64>,
    pub z: Vec<f64>,
    /// `n x m`, row-major.
    pub u: Vec<f64>,
}

/// Backward solver bound to one noise bundle and coefficient set. Regression
/// bases are fitted once per node and reused across sweeps.
pub struct BackwardSolver<'a> {
    noise: &'a NoiseBundle,
    coeffs: &'a CoefficientSet,
    reg: RegressionSpec,
    opts: SolverOptions,
    order: Vec<usize>,
    bases: Vec<Option<NodeRegression>>,
    pub stats: SolverStats,
}

impl<'a> BackwardSolver<'a> {
    pub fn new(
        noise: &'a NoiseBundle,
        coeffs: &'a CoefficientSet,
        reg: RegressionSpec,
        opts: SolverOptions,
    ) -> Result<Self> {
        let grid = noise.grid();
        let cf_dt = coeffs.lipschitz_f() * grid.dt();
        if cf_dt >= 1.0 {
            return Err(Error::Refused(format!(
                "C_f * dt = {cf_dt} >= 1: the implicit driver step is not a contraction"
            )));
        }
        if coeffs.gamma1() >= 1.0 {
            return Err(Error::Refused(format!(
                "gamma1 = {} >= 1: the reflection equation has no unique solution",
                coeffs.gamma1()
            )));
        }
        if coeffs.jumps != *noise.jumps() {
            return Err(Error::param("jumps", "coefficients and noise use different jump measures"));
        }
        Ok(Self {
            noise,
            coeffs,
            reg,
            opts,
            order: canonical_order(noise),
            bases: vec![None; grid.nodes()],
            stats: SolverStats::default(),
        })
    }

    pub fn noise(&self) -> &NoiseBundle {
        self.noise
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        self.coeffs
    }

    /// `xi` evaluated on every particle's terminal state.
    pub fn terminal_values(&self) -> Vec<f64> {
        let last = self.noise.grid().steps();
        (0..self.noise.n_particles())
            .map(|i| self.coeffs.terminal.eval(self.noise.state(i, last)))
            .collect()
    }

    /// Checks `xi^i >= h(T, xi^i, L[xi])` against the empirical law of the
    /// terminal array.
    pub fn check_terminal(&self, terminal: &[f64]) -> Result<()> {
        let law = sorted(terminal);
        let mu = Measure::from_sorted(&law);
        let grid = self.noise.grid();
        let t = grid.horizon();
        for (i, &xi) in terminal.iter().enumerate() {
            let h = self.coeffs.h(t, self.noise.state(i, grid.steps()), xi, mu);
            if xi < h - 1e-12 * (1.0 + xi.abs()) {
                return Err(Error::Refused(format!(
                    "terminal value {xi} of particle {i} lies below the obstacle {h}"
                )));
            }
        }
        Ok(())
    }

    /// Bundle holding `terminal` at the last node.
    pub fn init_bundle(&self, terminal: &[f64]) -> Result<SolutionBundle> {
        let n = self.noise.n_particles();
        if terminal.len() != n {
            return Err(Error::param("terminal", format!("{} values for {n} particles", terminal.len())));
        }
        let nodes = self.noise.grid().nodes();
        let mut b = SolutionBundle::zeros(n, nodes, self.noise.marks());
        let zeros = vec![0.0; self.noise.marks()];
        for (i, &xi) in terminal.iter().enumerate() {
            b.set(i, nodes - 1, xi, 0.0, &zeros, 0.0);
        }
        Ok(b)
    }

    fn basis(&mut self, k: usize) -> &NodeRegression {
        if self.bases[k].is_none() {
            let fit = NodeRegression::fit(self.noise, k, self.reg, &self.order);
            // node 0 has a degenerate state by construction
            if fit.degree < self.reg.degree && k > 0 {
                self.stats.reduced_degree_nodes += 1;
            }
            self.bases[k] = Some(fit);
        }
        self.bases[k].as_ref().expect("basis fitted above")
    }

    /// Regression step at node `k` given next-node values.
    pub fn continuation(&mut self, k: usize, next_y: &[f64]) -> Continuation {
        let noise = self.noise;
        let n = noise.n_particles();
        let m = noise.marks();
        let dt = noise.grid().dt();
        let basis = self.basis(k);
        let c = basis.fitted(next_y);
        let resid: Vec<f64> = next_y.iter().zip(&c).map(|(y, c)| y - c).collect();
        let z_target: Vec<f64> = (0..n).map(|i| resid[i] * noise.db(i, k) / dt).collect();
        let z = basis.fitted(&z_target);
        let mut u = vec![0.0; n * m];
        for j in 0..m {
            let scale = noise.jumps().intensities()[j] * dt;
            let target: Vec<f64> = (0..n).map(|i| resid[i] * noise.dn(i, k, j) / scale).collect();
            for (i, v) in basis.fitted(&target).into_iter().enumerate() {
                u[i * m + j] = v;
            }
        }
        Continuation { c, z, u }
    }

    /// Solves `y = c + f(y, z, u, mu) dt` by fixed-point iteration; returns
    /// the root and the number of correction sweeps.
    #[inline]
    pub fn implicit_step(&self, c: f64, z: f64, u: &[f64], mu_mean: f64) -> (f64, usize) {
        let dt = self.noise.grid().dt();
        let d = &self.coeffs.driver;
        let first = c + d.eval(c, z, u, mu_mean) * dt;
        if d.y == 0.0 && d.sin_y == 0.0 {
            return (first, 0);
        }
        let scale = (first - c).abs().max(1.0);
        let mut y = first;
        for it in 1..=self.opts.max_inner {
            let next = c + d.eval(y, z, u, mu_mean) * dt;
            if (next - y).abs() <= self.opts.tol_inner * scale {
                return (next, it);
            }
            y = next;
        }
        (y, self.opts.max_inner)
    }

    /// Projects `y_tilde` onto the constraint set: returns `(Y, dK, iterations)`.
    #[inline]
    pub fn reflect(&self, k: usize, i: usize, y_tilde: f64, mu_mean: f64) -> (f64, f64, usize) {
        let t = self.noise.grid().time(k);
        let x = self.noise.state(i, k);
        let h = self.coeffs.obstacle.eval(t, x, y_tilde, mu_mean);
        if y_tilde >= h {
            return (y_tilde, 0.0, 0);
        }
        let (y_star, it) = self.coeffs.obstacle.binding_point(t, x, mu_mean, y_tilde);
        (y_star, (y_star - y_tilde).max(0.0), it)
    }

    /// One backward step at node `k < N` under the frozen measure `mu_k`.
    pub fn step(&mut self, bundle: &mut SolutionBundle, k: usize, mu_k: Measure<'_>, reflect: bool) {
        let next = bundle.y_at(k + 1);
        let cont = self.continuation(k, &next);
        let m = self.noise.marks();
        let mu_mean = mu_k.mean();
        let this = &*self;
        let rows: Vec<(f64, f64, usize, usize)> = (0..next.len())
            .into_par_iter()
            .map(|i| {
                let u = &cont.u[i * m..(i + 1) * m];
                let (y_tilde, inner) = this.implicit_step(cont.c[i], cont.z[i], u, mu_mean);
                if reflect {
                    let (y, dk, it) = this.reflect(k, i, y_tilde, mu_mean);
                    (y, dk, inner, it)
                } else {
                    (y_tilde, 0.0, inner, 0)
                }
            })
            .collect();
        for (i, &(y, dk, inner, it)) in rows.iter().enumerate() {
            self.stats.max_inner_iterations = self.stats.max_inner_iterations.max(inner);
            self.stats.max_binding_iterations = self.stats.max_binding_iterations.max(it);
            bundle.set(i, k, y, cont.z[i], &cont.u[i * m..(i + 1) * m], dk);
        }
    }
}

fn check_flow(noise: &NoiseBundle, flow: &MeasureFlow) -> Result<()> {
    if flow.nodes() != noise.grid().nodes() {
        return Err(Error::param(
            "flow",
            format!("flow has {} nodes, grid has {}", flow.nodes(), noise.grid().nodes()),
        ));
    }
    Ok(())
}

/// Solves the reflected BSDE with jumps for the frozen flow `mu`, with
/// terminal values from the coefficient set.
pub fn solve_rbsde(
    noise: &NoiseBundle,
    coeffs: &CoefficientSet,
    mu: &MeasureFlow,
    reg: RegressionSpec,
    opts: SolverOptions,
) -> Result<SolutionBundle> {
    check_flow(noise, mu)?;
    let mut solver = BackwardSolver::new(noise, coeffs, reg, opts)?;
    let terminal = solver.terminal_values();
    solver.check_terminal(&terminal)?;
    let mut bundle = solver.init_bundle(&terminal)?;
    for k in (0..noise.grid().steps()).rev() {
        solver.step(&mut bundle, k, mu.at(k), true);
    }
    Ok(bundle)
}

/// Plain (unreflected) BSDE value `E^f_{t, tau}[terminal]` on nodes
/// `0..=tau`. The returned bundle has `tau + 1` nodes.
pub fn nonlinear_expectation(
    noise: &NoiseBundle,
    coeffs: &CoefficientSet,
    mu: &MeasureFlow,
    reg: RegressionSpec,
    opts: SolverOptions,
    tau: usize,
    terminal: &[f64],
) -> Result<SolutionBundle> {
    check_flow(noise, mu)?;
    if tau > noise.grid().steps() {
        return Err(Error::param("tau", format!("terminal node {tau} beyond the grid")));
    }
    let mut solver = BackwardSolver::new(noise, coeffs, reg, opts)?;
    let n = noise.n_particles();
    if terminal.len() != n {
        return Err(Error::param("terminal", format!("{} values for {n} particles", terminal.len())));
    }
    let mut bundle = SolutionBundle::zeros(n, noise.grid().nodes(), noise.marks());
    let zeros = vec![0.0; noise.marks()];
    for (i, &v) in terminal.iter().enumerate() {
        bundle.set(i, tau, v, 0.0, &zeros, 0.0);
    }
    for k in (0..tau).rev() {
        solver.step(&mut bundle, k, mu.at(k), false);
    }
    Ok(truncate(&bundle, tau + 1))
}

fn truncate(b: &SolutionBundle, nodes: usize) -> SolutionBundle {
    let mut out = SolutionBundle::zeros(b.n_particles(), nodes, b.marks());
    for i in 0..b.n_particles() {
        for k in 0..nodes {
            out.set(i, k, b.y(i, k), b.z(i, k), b.u(i, k), b.dk(i, k));
        }
    }
    out
}

/// Flow used to evaluate the obstacle of a bundle: either an external flow or
/// the bundle's own empirical flow.
pub enum ObstacleFlow<'a> {
    Frozen(&'a MeasureFlow),
    Empirical,
}

fn obstacle_values(
    bundle: &SolutionBundle,
    coeffs: &CoefficientSet,
    noise: &NoiseBundle,
    flow: ObstacleFlow<'_>,
) -> Vec<Vec<f64>> {
    let own;
    let flow = match flow {
        ObstacleFlow::Frozen(f) => f,
        ObstacleFlow::Empirical => {
            own = bundle.flow();
            &own
        }
    };
    let grid = noise.grid();
    (0..bundle.n_particles())
        .map(|i| {
            (0..bundle.nodes())
                .map(|k| coeffs.h(grid.time(k), noise.state(i, k), bundle.y(i, k), flow.at(k)))
                .collect()
        })
        .collect()
}

/// `mean_i sum_k (Y_k - h(t_k, Y_k, mu_k)) dK_k`.
pub fn flatness_residual(
    bundle: &SolutionBundle,
    coeffs: &CoefficientSet,
    noise: &NoiseBundle,
    flow: ObstacleFlow<'_>,
) -> f64 {
    let h = obstacle_values(bundle, coeffs, noise, flow);
    let total: f64 = (0..bundle.n_particles())
        .map(|i| {
            (0..bundle.nodes())
                .map(|k| (bundle.y(i, k) - h[i][k]) * bundle.dk(i, k))
                .sum::<f64>()
        })
        .sum();
    total / bundle.n_particles() as f64
}

/// `min_{i,k} (Y_k - h(t_k, Y_k, mu_k))`.
pub fn obstacle_margin(
    bundle: &SolutionBundle,
    coeffs: &CoefficientSet,
    noise: &NoiseBundle,
    flow: ObstacleFlow<'_>,
) -> f64 {
    let h = obstacle_values(bundle, coeffs, noise, flow);
    (0..bundle.n_particles())
        .flat_map(|i| (0..bundle.nodes()).map(move |k| (i, k)))
        .map(|(i, k)| bundle.y(i, k) - h[i][k])
        .fold(f64::INFINITY, f64::min)
}
