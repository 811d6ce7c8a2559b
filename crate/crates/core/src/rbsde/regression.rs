//! Least-squares estimation of conditional expectations given the Markov
//! state `(B_t, N~_t)` of a particle.
//!
//! Sums over samples always run in the order of the particles' stream ids,
//! so fitted values depend only on which streams are present, not on how the
//! particles are labelled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::stochastics::NoiseBundle;

/// Basis and ridge penalty of the regression estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSpec {
    /// Total degree of the polynomial basis; `0` is the constant basis.
    pub degree: usize,
    /// Ridge penalty on the non-constant coefficients (Gram matrix scaled by
    /// the sample count).
    pub ridge: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self { degree: 3, ridge: 1e-8 }
    }
}

impl RegressionSpec {
    pub fn constant() -> Self {
        Self { degree: 0, ridge: 0.0 }
    }

    pub fn polynomial(degree: usize) -> Self {
        Self { degree, ..Self::default() }
    }
}

/// Reciprocal condition number below which a basis is considered rank
/// deficient and the degree is lowered.
const MIN_RCOND: f64 = 1e-12;

fn monomials(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree as u32, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

/// Fitted basis at one node: standardization, design matrix and Cholesky
/// factor of the (ridged) Gram matrix. Solving for any target is then one
/// accumulation and two triangular solves.
#[derive(Debug, Clone)]
pub struct NodeRegression {
    n: usize,
    width: usize,
    /// Row-major `n x width`.
    design: Vec<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    order: Vec<usize>,
    /// Degree actually used after rank checks.
    pub degree: usize,
}

/// Canonical summation order: particles sorted by stream id.
pub fn canonical_order(noise: &NoiseBundle) -> Vec<usize> {
    let ids = noise.stream_ids();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| ids[i]);
    order
}

impl NodeRegression {
    /// Fits the basis on the states of all particles of `noise` at node `k`.
    pub fn fit(noise: &NoiseBundle, k: usize, spec: RegressionSpec, order: &[usize]) -> Self {
        let n = noise.n_particles();
        let m = noise.marks();
        let raw: Vec<Vec<f64>> = (0..=m)
            .map(|v| {
                (0..n)
                    .map(|i| if v == 0 { noise.brownian(i, k) } else { noise.compensated(i, k)[v - 1] })
                    .collect()
            })
            .collect();
        // standardize and drop (numerically) constant coordinates
        let mut vars: Vec<Vec<f64>> = Vec::new();
        for col in raw {
            let mean = order.iter().map(|&i| col[i]).sum::<f64>() / n as f64;
            let var = order.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + mean.abs()) {
                vars.push(col.iter().map(|x| (x - mean) / sd).collect());
            }
        }
        let max_degree = if vars.is_empty() || n < 2 { 0 } else { spec.degree };
        for degree in (0..=max_degree).rev() {
            if let Some(fit) = Self::try_degree(&vars, n, degree, spec.ridge, order) {
                return fit;
            }
        }
        log::warn!("regression at node {k}: basis rank deficient, falling back to the sample mean");
        Self::try_degree(&[], n, 0, 0.0, order).expect("constant basis is always well posed")
    }

    fn try_degree(vars: &[Vec<f64>], n: usize, degree: usize, ridge: f64, order: &[usize]) -> Option<Self> {
        let exps = if degree == 0 || vars.is_empty() {
            vec![vec![0; vars.len()]]
        } else {
            monomials(vars.len(), degree)
        };
        let width = exps.len();
        let mut design = vec![0.0; n * width];
        for i in 0..n {
            for (c, e) in exps.iter().enumerate() {
                let mut v = 1.0;
                for (var, &p) in vars.iter().zip(e) {
                    if p > 0 {
                        v *= var[i].powi(p as i32);
                    }
                }
                design[i * width + c] = v;
            }
        }
        if width == 1 {
            return Some(Self {
                n,
                width,
                design,
                chol: None,
                order: order.to_vec(),
                degree: 0,
            });
        }
        let mut gram = DMatrix::<f64>::zeros(width, width);
        for &i in order {
            let row = &design[i * width..(i + 1) * width];
            for a in 0..width {
                for b in a..width {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..width {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        gram /= n as f64;
        // rank is judged on the unpenalized Gram matrix
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        if !(lo > MIN_RCOND * hi) {
            return None;
        }
        for a in 1..width {
            gram[(a, a)] += ridge;
        }
        let chol = gram.cholesky()?;
        Some(Self {
            n,
            width,
            design,
            chol: Some(chol),
            order: order.to_vec(),
            degree,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Least-squares coefficients for `target` (one value per particle).
    pub fn coefficients(&self, target: &[f64]) -> DVector<f64> {
        debug_assert_eq!(target.len(), self.n);
        let w = self.width;
        let mut rhs = DVector::<f64>::zeros(w);
        for &i in &self.order {
            let row = &self.design[i * w..(i + 1) * w];
            for a in 0..w {
                rhs[a] += row[a] * target[i];
            }
        }
        rhs /= self.n as f64;
        match &self.chol {
            Some(ch) => ch.solve(&rhs),
            None => rhs,
        }
    }

    #[inline]
    pub fn predict(&self, coef: &DVector<f64>, i: usize) -> f64 {
        let row = &self.design[i * self.width..(i + 1) * self.width];
        row.iter().zip(coef.iter()).map(|(a, b)| a * b).sum()
    }

    /// Fitted values `E^[target | state]` for every particle.
    pub fn fitted(&self, target: &[f64]) -> Vec<f64> {
        let coef = self.coefficients(target);
        (0..self.n).map(|i| self.predict(&coef, i)).collect()
    }
}
