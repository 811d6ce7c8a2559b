use crate::error::{Error, Result};
use crate::flow::MeasureFlow;

fn check_sorted(name: &'static str, v: &[f64]) -> Result<()> {
    if v.windows(2).any(|w| w[0] > w[1]) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::param(name, "samples must be finite and sorted ascending"));
    }
    Ok(())
}

/// `W_p^p` between two equal-size empirical measures given as sorted samples.
///
/// In one dimension the monotone (quantile) coupling is optimal, so this is
/// the mean of `|a_(i) - b_(i)|^p`.
pub fn wasserstein_pow(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param("samples", format!("unequal sizes {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::param("samples", "empty measure"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("need p >= 1, got {p}")));
    }
    check_sorted("a", a)?;
    check_sorted("b", b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>() / a.len() as f64)
}

/// `W_p` between two equal-size sorted sample arrays.
pub fn wasserstein_p(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    Ok(wasserstein_pow(a, b, p)?.powf(1.0 / p))
}

/// Sorts copies of the inputs, then calls [`wasserstein_p`].
pub fn wasserstein_unsorted(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    wasserstein_p(&crate::flow::sorted(a), &crate::flow::sorted(b), p)
}

fn check_flows(a: &MeasureFlow, b: &MeasureFlow) -> Result<()> {
    if a.nodes() != b.nodes() {
        return Err(Error::param("flow", format!("grid mismatch: {} vs {} nodes", a.nodes(), b.nodes())));
    }
    Ok(())
}

/// Node-wise `W_p` between two flows on the same grid.
pub fn nodewise_wasserstein(a: &MeasureFlow, b: &MeasureFlow, p: f64) -> Result<Vec<f64>> {
    check_flows(a, b)?;
    (0..a.nodes())
        .map(|k| wasserstein_p(a.at(k).samples(), b.at(k).samples(), p))
        .collect()
}

/// `max_k W_p(a_k, b_k)`.
pub fn sup_time_wasserstein(a: &MeasureFlow, b: &MeasureFlow, p: f64) -> Result<f64> {
    Ok(nodewise_wasserstein(a, b, p)?.into_iter().fold(0.0, f64::max))
}

/// `max_k W_p^p(a_k, b_k)`. Flows of sizes `n` and `q n` are compared after
/// replicating the smaller one.
pub fn sup_time_wasserstein_pow(a: &MeasureFlow, b: &MeasureFlow, p: f64) -> Result<f64> {
    check_flows(a, b)?;
    let (na, nb) = (a.sample_count(), b.sample_count());
    let (a, b) = match na.cmp(&nb) {
        std::cmp::Ordering::Less => (a.upsample_to(nb)?, b.clone()),
        std::cmp::Ordering::Greater => (a.clone(), b.upsample_to(na)?),
        std::cmp::Ordering::Equal => (a.clone(), b.clone()),
    };
    let mut sup: f64 = 0.0;
    for k in 0..a.nodes() {
        sup = sup.max(wasserstein_pow(a.at(k).samples(), b.at(k).samples(), p)?);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exact optimal transport between uniform measures on `a` and `b` by
    /// enumerating all permutation couplings.
    fn brute_force_pow(a: &[f64], b: &[f64], p: f64) -> f64 {
        fn rec(a: &[f64], b: &[f64], p: f64, used: &mut Vec<bool>, i: usize, acc: f64, best: &mut f64) {
            if i == a.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    rec(a, b, p, used, i + 1, acc + (a[i] - b[j]).abs().powf(p), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(a, b, p, &mut vec![false; b.len()], 0, 0.0, &mut best);
        best / a.len() as f64
    }

    #[test]
    fn spec_examples() {
        assert_eq!(wasserstein_p(&[0.0, 1.0], &[0.0, 1.0], 3.0).unwrap(), 0.0);
        assert!((wasserstein_p(&[0.0, 2.0], &[1.0, 3.0], 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((wasserstein_p(&[3.0, 4.0], &[0.0, 0.0], 2.0).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((brute_force_pow(&[0.0, 2.0], &[1.0, 3.0], 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(wasserstein_p(&[0.0], &[0.0, 1.0], 2.0).is_err());
        assert!(wasserstein_p(&[1.0, 0.0], &[0.0, 1.0], 2.0).is_err());
        assert!(wasserstein_p(&[0.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn sup_time_examples() {
        let a = MeasureFlow::from_samples(vec![vec![0.0, 2.0]; 3]).unwrap();
        let b = MeasureFlow::from_samples(vec![vec![1.0, 3.0]; 3]).unwrap();
        assert_eq!(sup_time_wasserstein(&a, &a, 2.0).unwrap(), 0.0);
        assert!((sup_time_wasserstein(&a, &b, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let c = MeasureFlow::from_samples(vec![vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        let d = MeasureFlow::from_samples(vec![vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(sup_time_wasserstein(&c, &d, 1.0).unwrap(), 1.0);
        let e = MeasureFlow::from_samples(vec![vec![0.0]; 2]).unwrap();
        assert!(sup_time_wasserstein(&a, &e, 1.0).is_err());
    }

    #[test]
    fn unequal_sizes_via_replication() {
        let a = MeasureFlow::from_samples(vec![vec![0.0, 1.0]]).unwrap();
        let b = MeasureFlow::from_samples(vec![vec![0.0, 0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(sup_time_wasserstein_pow(&a, &b, 2.0).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn matches_assignment_enumeration(
            a in prop::collection::vec(-10.0f64..10.0, 1..=6),
            shift in prop::collection::vec(-10.0f64..10.0, 6),
            p in 1.0f64..4.0,
        ) {
            let b: Vec<f64> = shift[..a.len()].to_vec();
            let got = wasserstein_pow(&crate::flow::sorted(&a), &crate::flow::sorted(&b), p).unwrap();
            let want = brute_force_pow(&a, &b, p);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }

        #[test]
        fn triangle_inequality(
            a in prop::collection::vec(-10.0f64..10.0, 5),
            b in prop::collection::vec(-10.0f64..10.0, 5),
            c in prop::collection::vec(-10.0f64..10.0, 5),
            p in 1.0f64..4.0,
        ) {
            let ab = wasserstein_unsorted(&a, &b, p).unwrap();
            let bc = wasserstein_unsorted(&b, &c, p).unwrap();
            let ac = wasserstein_unsorted(&a, &c, p).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn sorted_coupling_beats_identity(
            x in prop::collection::vec(-10.0f64..10.0, 1..40),
            noise in prop::collection::vec(-3.0f64..3.0, 40),
            p in 1.0f64..4.0,
        ) {
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
            let lhs = wasserstein_pow(&crate::flow::sorted(&x), &crate::flow::sorted(&y), p).unwrap();
            let rhs = x.iter().zip(&y).map(|(a, b)| (a - b).abs().powf(p)).sum::<f64>() / x.len() as f64;
            prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
        }
    }
}
