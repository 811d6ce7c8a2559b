use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::flow::MeasureFlow;

/// Discrete solution `(Y, Z, U, K)` on `n` particles and `N + 1` nodes.
///
/// `dK[k]` is the reflection pushed into `Y_k` over step `k`, so that
/// `K_{k+1} = K_k + dK_k` and `K_0 = 0`. `Z` and `U` at the last node are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBundle {
    n: usize,
    nodes: usize,
    marks: usize,
    pub(crate) y: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) u: Vec<f64>,
    pub(crate) dk: Vec<f64>,
}

/// Summary of the structural invariants of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BundleInvariants {
    /// Most negative reflection increment (should be `>= 0`).
    pub min_dk: f64,
    /// Whether every value is finite.
    pub finite: bool,
}

impl SolutionBundle {
    pub fn zeros(n: usize, nodes: usize, marks: usize) -> Self {
        Self {
            n,
            nodes,
            marks,
            y: vec![0.0; n * nodes],
            z: vec![0.0; n * nodes],
            u: vec![0.0; n * nodes * marks],
            dk: vec![0.0; n * nodes],
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn marks(&self) -> usize {
        self.marks
    }

    #[inline]
    pub fn y(&self, i: usize, k: usize) -> f64 {
        self.y[i * self.nodes + k]
    }

    #[inline]
    pub fn z(&self, i: usize, k: usize) -> f64 {
        self.z[i * self.nodes + k]
    }

    #[inline]
    pub fn u(&self, i: usize, k: usize) -> &[f64] {
        let b = (i * self.nodes + k) * self.marks;
        &self.u[b..b + self.marks]
    }

    #[inline]
    pub fn dk(&self, i: usize, k: usize) -> f64 {
        self.dk[i * self.nodes + k]
    }

    /// `K_k = sum_{j < k} dK_j`.
    pub fn k_path(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nodes);
        let mut acc = 0.0;
        for k in 0..self.nodes {
            out.push(acc);
            acc += self.dk(i, k);
        }
        out
    }

    pub fn y_path(&self, i: usize) -> &[f64] {
        &self.y[i * self.nodes..(i + 1) * self.nodes]
    }

    /// All particles' `Y_k`.
    pub fn y_at(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.y(i, k)).collect()
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, k: usize, y: f64, z: f64, u: &[f64], dk: f64) {
        let b = i * self.nodes + k;
        self.y[b] = y;
        self.z[b] = z;
        self.dk[b] = dk;
        self.u[b * self.marks..(b + 1) * self.marks].copy_from_slice(u);
    }

    /// Empirical flow `k -> L_n[Y_k]`.
    pub fn flow(&self) -> MeasureFlow {
        MeasureFlow::from_samples((0..self.nodes).map(|k| self.y_at(k)).collect())
            .expect("bundle values are finite")
    }

    /// Particles reordered: row `i` of the result is row `perm[i]`.
    pub fn select(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(perm.len(), self.nodes, self.marks);
        for (i, &p) in perm.iter().enumerate() {
            for k in 0..self.nodes {
                out.set(i, k, self.y(p, k), self.z(p, k), self.u(p, k), self.dk(p, k));
            }
        }
        out
    }

    pub fn invariants(&self) -> BundleInvariants {
        let min_dk = self.dk.iter().copied().fold(f64::INFINITY, f64::min);
        let finite = self
            .y
            .iter()
            .chain(&self.z)
            .chain(&self.u)
            .chain(&self.dk)
            .all(|v| v.is_finite());
        BundleInvariants {
            min_dk,
            finite,
        }
    }

    /// Total reflection per particle, `K_N`.
    pub fn k_total(&self, i: usize) -> f64 {
        (0..self.nodes).map(|k| self.dk(i, k)).sum()
    }

    /// CSV with columns `particle, node, Y, Z, U_1..U_m, K`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["particle".to_string(), "node".into(), "Y".into(), "Z".into()];
        header.extend((1..=self.marks).map(|j| format!("U_{j}")));
        header.push("K".into());
        w.write_record(&header)?;
        for i in 0..self.n {
            let k_path = self.k_path(i);
            for k in 0..self.nodes {
                let mut rec = vec![i.to_string(), k.to_string(), self.y(i, k).to_string(), self.z(i, k).to_string()];
                rec.extend(self.u(i, k).iter().map(|v| v.to_string()));
                rec.push(k_path[k].to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_path_starts_at_zero_and_accumulates() {
        let mut b = SolutionBundle::zeros(1, 4, 0);
        b.set(0, 1, 0.0, 0.0, &[], 0.5);
        b.set(0, 2, 0.0, 0.0, &[], 0.25);
        assert_eq!(b.k_path(0), vec![0.0, 0.0, 0.5, 0.75]);
        assert_eq!(b.k_total(0), 0.75);
        assert_eq!(b.invariants().min_dk, 0.0);
    }

    #[test]
    fn csv_layout() {
        let b = SolutionBundle::zeros(2, 2, 1);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("particle,node,Y,Z,U_1,K\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
