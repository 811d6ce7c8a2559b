use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Borrowed view of an empirical measure: samples sorted ascending.
#[derive(Debug, Clone, Copy)]
pub struct Measure<'a>(&'a [f64]);

impl<'a> Measure<'a> {
    /// Wraps samples that are already sorted ascending.
    pub fn from_sorted(samples: &'a [f64]) -> Self {
        debug_assert!(samples.windows(2).all(|w| w[0] <= w[1]));
        Measure(samples)
    }

    pub fn samples(&self) -> &'a [f64] {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mean of the measure. Summation runs in sorted order so that the value
    /// only depends on the multiset of samples.
    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// `int |x|^p mu(dx)`.
    pub fn moment(&self, p: f64) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().map(|x| x.abs().powf(p)).sum::<f64>() / self.0.len() as f64
    }
}

/// Sorts a copy of `values` into an empirical measure sample array.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-node empirical distributions `t_k -> mu_k`, each stored as a sorted
/// sample array of common length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFlow {
    nodes: Vec<Vec<f64>>,
}

impl MeasureFlow {
    /// Builds a flow from unsorted per-node samples.
    pub fn from_samples(per_node: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = per_node.first() else {
            return Err(Error::param("flow", "a flow needs at least one node"));
        };
        let m = first.len();
        if m == 0 {
            return Err(Error::param("flow", "empty sample arrays"));
        }
        if per_node.iter().any(|v| v.len() != m) {
            return Err(Error::param("flow", "sample arrays of unequal length"));
        }
        if per_node.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::param("flow", "non-finite sample"));
        }
        let nodes = per_node
            .into_iter()
            .map(|mut v| {
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Ok(Self { nodes })
    }

    /// Point mass at `value` at every node, represented with `samples` atoms.
    pub fn dirac(nodes: usize, samples: usize, value: f64) -> Self {
        Self {
            nodes: vec![vec![value; samples.max(1)]; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn sample_count(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn at(&self, k: usize) -> Measure<'_> {
        Measure(&self.nodes[k])
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.nodes()).map(|k| self.at(k).mean()).collect()
    }

    /// Same measures with every atom repeated `factor` times. The represented
    /// distributions are unchanged, which lets flows with sample counts `n`
    /// and `factor * n` be compared with equal-size couplings.
    pub fn replicate(&self, factor: usize) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|v| v.iter().flat_map(|&x| std::iter::repeat_n(x, factor)).collect())
            .collect();
        Self { nodes }
    }

    /// Replicates atoms so that the sample count becomes `target`, which must
    /// be a multiple of the current count.
    pub fn upsample_to(&self, target: usize) -> Result<Self> {
        let m = self.sample_count();
        if !target.is_multiple_of(m) {
            return Err(Error::param(
                "samples",
                format!("cannot upsample {m} atoms to {target}: not a multiple"),
            ));
        }
        Ok(self.replicate(target / m))
    }

    /// Keeps the nodes in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            nodes: self.nodes[range].to_vec(),
        }
    }

    pub(crate) fn set_node(&mut self, k: usize, values: &[f64]) {
        let node = &mut self.nodes[k];
        node.clear();
        node.extend_from_slice(values);
        node.sort_by(f64::total_cmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_samples_sorts_each_node() {
        let f = MeasureFlow::from_samples(vec![vec![3.0, 1.0, 2.0], vec![0.0, -1.0, 5.0]]).unwrap();
        assert_eq!(f.at(0).samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.at(1).samples(), &[-1.0, 0.0, 5.0]);
        assert_eq!(f.means(), vec![2.0, 4.0 / 3.0]);
    }

    #[test]
    fn rejects_ragged_flows() {
        assert!(MeasureFlow::from_samples(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(MeasureFlow::from_samples(vec![]).is_err());
        assert!(MeasureFlow::from_samples(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn replication_preserves_the_measure() {
        let f = MeasureFlow::from_samples(vec![vec![0.0, 2.0]]).unwrap();
        let g = f.upsample_to(6).unwrap();
        assert_eq!(g.at(0).samples(), &[0.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
        assert_eq!(g.at(0).mean(), f.at(0).mean());
        assert!(f.upsample_to(5).is_err());
    }
}
