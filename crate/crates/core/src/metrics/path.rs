use serde::Serialize;

use crate::error::{Error, Result};

/// A grid path, read as the piecewise-constant right-continuous function
/// `x(s) = x_k` for `s in [t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample(pub Vec<f64>);

impl PathSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("path", "paths need at least one finite value"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|x|_t = max_{k <= t} |x_k|`.
    pub fn sup_norm(&self, t: usize) -> f64 {
        self.0[..=t].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `|x - y|_t = max_{k <= t} |x_k - y_k|`.
pub fn sup_distance(x: &PathSample, y: &PathSample, t: usize) -> f64 {
    x.0[..=t]
        .iter()
        .zip(&y.0[..=t])
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Result of a path-space transport computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathTransport {
    pub value: f64,
    /// `true` when the value comes from a heuristic coupling and is only an
    /// upper bound on the optimum.
    pub upper_bound: bool,
}

/// Largest sample count solved exactly by assignment enumeration.
pub const EXACT_ASSIGNMENT_LIMIT: usize = 8;

/// Minimal mean cost over permutation couplings, by depth-first search with
/// pruning. Intended for `n <= EXACT_ASSIGNMENT_LIMIT`.
pub fn exact_assignment(cost: &[Vec<f64>]) -> f64 {
    fn dfs(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        if row == cost.len() {
            *best = acc;
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                dfs(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let n = cost.len();
    // identity coupling seeds the bound
    let mut best: f64 = (0..n).map(|i| cost[i][i]).sum();
    dfs(cost, 0, &mut vec![false; n], 0.0, &mut best);
    best / n as f64
}

fn check_sets(p_set: &[PathSample], q_set: &[PathSample], t: usize) -> Result<()> {
    if p_set.len() != q_set.len() {
        return Err(Error::param(
            "paths",
            format!("unequal sample counts {} and {}", p_set.len(), q_set.len()),
        ));
    }
    if p_set.is_empty() {
        return Err(Error::param("paths", "empty path sets"));
    }
    if p_set.iter().chain(q_set).any(|x| x.len() <= t) {
        return Err(Error::param("t", format!("node {t} beyond path length")));
    }
    Ok(())
}

/// Transport between two equal-size path sets under a pairwise cost
/// (already raised to the power `p`). Exact up to
/// [`EXACT_ASSIGNMENT_LIMIT`] samples; beyond that the samples are paired in
/// order of their value at node `t` and the result is flagged as an upper
/// bound.
pub fn path_transport_pow<F>(p_set: &[PathSample], q_set: &[PathSample], t: usize, cost: F) -> Result<PathTransport>
where
    F: Fn(&PathSample, &PathSample) -> f64 + Sync,
{
    check_sets(p_set, q_set, t)?;
    let n = p_set.len();
    if n <= EXACT_ASSIGNMENT_LIMIT {
        let matrix: Vec<Vec<f64>> = p_set
            .iter()
            .map(|x| q_set.iter().map(|y| cost(x, y)).collect())
            .collect();
        return Ok(PathTransport {
            value: exact_assignment(&matrix),
            upper_bound: false,
        });
    }
    let order = |set: &[PathSample]| {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.sort_by(|&a, &b| set[a].0[t].total_cmp(&set[b].0[t]));
        idx
    };
    let (op, oq) = (order(p_set), order(q_set));
    use rayon::prelude::*;
    let total: f64 = op
        .par_iter()
        .zip(oq.par_iter())
        .map(|(&i, &j)| cost(&p_set[i], &q_set[j]))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(PathTransport {
        value: total / n as f64,
        upper_bound: true,
    })
}

/// Empirical `D_t(P, Q)`: `p`-Wasserstein on path space under `|x - y|_t`.
pub fn path_wasserstein_dt(p_set: &[PathSample], q_set: &[PathSample], p: f64, t: usize) -> Result<PathTransport> {
    if !(p >= 1.0) {
        return Err(Error::param("p", format!("need p >= 1, got {p}")));
    }
    let tr = path_transport_pow(p_set, q_set, t, |x, y| sup_distance(x, y, t).powf(p))?;
    Ok(PathTransport {
        value: tr.value.powf(1.0 / p),
        upper_bound: tr.upper_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wasserstein::wasserstein_unsorted;
    use rand::{Rng, SeedableRng};

    fn random_set(rng: &mut impl Rng, n: usize, len: usize) -> Vec<PathSample> {
        (0..n)
            .map(|_| PathSample::new((0..len).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn identical_sets_are_at_distance_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = random_set(&mut rng, 5, 6);
        assert_eq!(path_wasserstein_dt(&p, &p, 2.0, 5).unwrap().value, 0.0);
    }

    #[test]
    fn single_paths_use_the_sup_norm() {
        let x = PathSample::new(vec![0.0, 1.0, -1.0, 0.5]).unwrap();
        let y = PathSample::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let d = path_wasserstein_dt(&[x.clone()], &[y.clone()], 3.0, 3).unwrap();
        assert!((d.value - 2.0).abs() < 1e-12);
        assert!(!d.upper_bound);
        assert_eq!(path_wasserstein_dt(&[x], &[y], 3.0, 1).unwrap().value, 1.0);
    }

    #[test]
    fn monotone_in_time_and_dominates_marginals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let p_set = random_set(&mut rng, n, 5);
            let q_set = random_set(&mut rng, n, 5);
            let pw = rng.random_range(1.0..3.0);
            let mut prev = 0.0;
            for t in 0..5 {
                let d = path_wasserstein_dt(&p_set, &q_set, pw, t).unwrap().value;
                assert!(d + 1e-12 >= prev, "D_s <= D_t violated");
                prev = d;
                let a: Vec<f64> = p_set.iter().map(|x| x.0[t]).collect();
                let b: Vec<f64> = q_set.iter().map(|x| x.0[t]).collect();
                let w = wasserstein_unsorted(&a, &b, pw).unwrap();
                assert!(w <= d + 1e-12, "marginal bound violated: {w} > {d}");
            }
        }
    }

    #[test]
    fn heuristic_is_flagged_and_bounds_the_optimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p_set = random_set(&mut rng, 12, 4);
        let q_set = random_set(&mut rng, 12, 4);
        let d = path_wasserstein_dt(&p_set, &q_set, 2.0, 3).unwrap();
        assert!(d.upper_bound);
        // any coupling is at least the marginal distance at the last node
        let a: Vec<f64> = p_set.iter().map(|x| x.0[3]).collect();
        let b: Vec<f64> = q_set.iter().map(|x| x.0[3]).collect();
        assert!(wasserstein_unsorted(&a, &b, 2.0).unwrap() <= d.value + 1e-12);
    }

    #[test]
    fn unequal_counts_are_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p_set = random_set(&mut rng, 3, 4);
        let q_set = random_set(&mut rng, 2, 4);
        assert!(path_wasserstein_dt(&p_set, &q_set, 2.0, 3).is_err());
    }
}
