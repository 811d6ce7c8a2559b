//! Empirical check of the `L^p` a priori estimate between two BSDE runs
//! sharing their noise:
//!
//! `|e^{bt} dY_t|^p <= 2^{p/2-1} E[ |e^{bT} dxi|^p + eta^p (int_t^T |e^{bs} df_s|^2 ds)^{p/2} | F_t ]`
//!
//! with `df_s = f1(Y2_s, Z2_s, U2_s) - f2(Y2_s, Z2_s, U2_s)`.

use serde::Serialize;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::flow::MeasureFlow;
use crate::metrics::mean_stderr;
use crate::rbsde::regression::{canonical_order, NodeRegression, RegressionSpec};
use crate::smallness::select_beta_eta;
use crate::solution::SolutionBundle;
use crate::stochastics::NoiseBundle;

/// One side of the estimate for a run with its coefficients.
pub struct Run<'a> {
    pub bundle: &'a SolutionBundle,
    pub coeffs: &'a CoefficientSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResidual {
    pub node: usize,
    /// `mean(RHS - LHS)` over particles.
    pub mean_slack: f64,
    pub stderr: f64,
    /// `max_i (LHS_i - E^[RHS | x_i])`, with the conditional expectation
    /// estimated by regression; positive values are violations up to
    /// regression noise.
    pub max_pointwise_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AprioriReport {
    pub beta: f64,
    pub eta: f64,
    pub probes: Vec<ProbeResidual>,
}

impl AprioriReport {
    /// Whether every probe has `mean_slack + z * stderr >= 0`.
    pub fn holds(&self, z: f64) -> bool {
        self.probes.iter().all(|r| r.mean_slack + z * r.stderr >= 0.0)
    }

    pub fn min_slack(&self) -> f64 {
        self.probes.iter().map(|r| r.mean_slack).fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates both sides of the estimate at the probe nodes. `mu` is the
/// frozen flow both runs were solved under. `beta, eta` come from
/// `select_beta_eta` applied to the Lipschitz constant of the first driver.
pub fn apriori_check(
    noise: &NoiseBundle,
    mu: &MeasureFlow,
    run1: Run<'_>,
    run2: Run<'_>,
    probes: &[usize],
) -> Result<AprioriReport> {
    let n = noise.n_particles();
    let nodes = noise.grid().nodes();
    for b in [run1.bundle, run2.bundle] {
        if b.n_particles() != n || b.nodes() != nodes {
            return Err(Error::param("run", "bundle does not match the noise grid"));
        }
    }
    if mu.nodes() != nodes {
        return Err(Error::param("mu", "flow does not match the noise grid"));
    }
    if let Some(&k) = probes.iter().find(|&&k| k >= nodes) {
        return Err(Error::param("probes", format!("node {k} beyond the grid")));
    }
    let p = run1.coeffs.p.max(run2.coeffs.p);
    let (eta, beta) = select_beta_eta(run1.coeffs.lipschitz_f());
    let grid = noise.grid();
    let dt = grid.dt();
    let last = grid.steps();
    let factor = 2f64.powf(p / 2.0 - 1.0);
    let mut df_sq = vec![0.0; n * nodes];
    for i in 0..n {
        for k in 0..last {
            let (y, z, u) = (run2.bundle.y(i, k), run2.bundle.z(i, k), run2.bundle.u(i, k));
            let d = run1.coeffs.f(y, z, u, mu.at(k)) - run2.coeffs.f(y, z, u, mu.at(k));
            df_sq[i * nodes + k] = (2.0 * beta * grid.time(k)).exp() * d * d;
        }
    }
    let order = canonical_order(noise);
    let mut out = Vec::with_capacity(probes.len());
    for &k in probes {
        let t = grid.time(k);
        let mut lhs = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let dy = run1.bundle.y(i, k) - run2.bundle.y(i, k);
            lhs[i] = ((beta * t).exp() * dy.abs()).powf(p);
            let dxi = run1.bundle.y(i, last) - run2.bundle.y(i, last);
            let integral: f64 = (k..last).map(|s| df_sq[i * nodes + s]).sum::<f64>() * dt;
            rhs[i] = factor * (((beta * grid.horizon()).exp() * dxi.abs()).powf(p) + eta.powf(p) * integral.powf(p / 2.0));
        }
        let slack: Vec<f64> = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
        let (mean_slack, stderr) = mean_stderr(&slack);
        let reg = NodeRegression::fit(noise, k, RegressionSpec::default(), &order);
        let rhs_hat = reg.fitted(&rhs);
        let max_pointwise_violation = lhs
            .iter()
            .zip(&rhs_hat)
            .map(|(l, r)| l - r)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(ProbeResidual {
            node: k,
            mean_slack,
            stderr,
            max_pointwise_violation,
        });
    }
    Ok(AprioriReport { beta, eta, probes: out })
}
