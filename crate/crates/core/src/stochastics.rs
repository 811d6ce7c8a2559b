//! Driving noise: one Brownian motion and one compensated Poisson random
//! measure (finitely many marks) per particle.
//!
//! Each particle owns a ChaCha8 stream keyed by the run seed and selected by
//! its stream id, so a particle's increments depend only on
//! `(seed, stream id, step)` and never on scheduling or worker count.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::NoiseState;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jumps::JumpMeasure;

/// Simulated increments for `n` particles over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    grid: TimeGrid,
    jumps: JumpMeasure,
    seed: u64,
    stream_ids: Vec<u64>,
    /// `dB[i * N + k]`.
    db: Vec<f64>,
    /// `counts[(i * N + k) * m + j]`.
    counts: Vec<u32>,
    /// `B[i * (N + 1) + k]`.
    brownian: Vec<f64>,
    /// `N~[(i * (N + 1) + k) * m + j]`.
    compensated: Vec<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl NoiseBundle {
    /// Particles `0..n` on streams `0..n`.
    pub fn simulate(grid: TimeGrid, jumps: &JumpMeasure, n_particles: usize, seed: u64) -> Result<Self> {
        Self::simulate_streams(grid, jumps, seed, (0..n_particles as u64).collect())
    }

    /// One particle per entry of `stream_ids`.
    pub fn simulate_streams(grid: TimeGrid, jumps: &JumpMeasure, seed: u64, stream_ids: Vec<u64>) -> Result<Self> {
        if stream_ids.is_empty() {
            return Err(Error::param("n_particles", "need at least one particle"));
        }
        let steps = grid.steps();
        let m = jumps.len();
        let dt = grid.dt();
        let sqrt_dt = dt.sqrt();
        let poissons: Vec<Poisson<f64>> = jumps
            .intensities()
            .iter()
            .map(|l| Poisson::new(l * dt).map_err(|e| Error::param("intensities", e.to_string())))
            .collect::<Result<_>>()?;

        let rows: Vec<(Vec<f64>, Vec<u32>)> = stream_ids
            .par_iter()
            .map(|&stream| {
                let mut rng = stream_rng(seed, stream);
                let mut db = Vec::with_capacity(steps);
                let mut counts = Vec::with_capacity(steps * m);
                for _ in 0..steps {
                    let g: f64 = rng.sample(StandardNormal);
                    db.push(g * sqrt_dt);
                    for pois in &poissons {
                        counts.push(pois.sample(&mut rng) as u32);
                    }
                }
                (db, counts)
            })
            .collect();

        let mut db = Vec::with_capacity(stream_ids.len() * steps);
        let mut counts = Vec::with_capacity(stream_ids.len() * steps * m);
        for (d, c) in rows {
            db.extend(d);
            counts.extend(c);
        }
        Ok(Self::from_increments(grid, jumps.clone(), seed, stream_ids, db, counts))
    }

    /// Builds a bundle from explicit increments (used for tree-shaped test
    /// noises and for relabelings).
    pub fn from_increments(
        grid: TimeGrid,
        jumps: JumpMeasure,
        seed: u64,
        stream_ids: Vec<u64>,
        db: Vec<f64>,
        counts: Vec<u32>,
    ) -> Self {
        let n = stream_ids.len();
        let steps = grid.steps();
        let m = jumps.len();
        assert_eq!(db.len(), n * steps, "dB has wrong length");
        assert_eq!(counts.len(), n * steps * m, "counts have wrong length");
        let dt = grid.dt();
        let mut brownian = vec![0.0; n * (steps + 1)];
        let mut compensated = vec![0.0; n * (steps + 1) * m];
        for i in 0..n {
            for k in 0..steps {
                let b = i * (steps + 1) + k;
                brownian[b + 1] = brownian[b] + db[i * steps + k];
                for j in 0..m {
                    let inc = counts[(i * steps + k) * m + j] as f64 - jumps.intensities()[j] * dt;
                    compensated[(b + 1) * m + j] = compensated[b * m + j] + inc;
                }
            }
        }
        Self {
            grid,
            jumps,
            seed,
            stream_ids,
            db,
            counts,
            brownian,
            compensated,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn jumps(&self) -> &JumpMeasure {
        &self.jumps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_particles(&self) -> usize {
        self.stream_ids.len()
    }

    pub fn marks(&self) -> usize {
        self.jumps.len()
    }

    pub fn stream_ids(&self) -> &[u64] {
        &self.stream_ids
    }

    #[inline]
    pub fn db(&self, i: usize, k: usize) -> f64 {
        self.db[i * self.grid.steps() + k]
    }

    #[inline]
    pub fn count(&self, i: usize, k: usize, j: usize) -> u32 {
        self.counts[(i * self.grid.steps() + k) * self.marks() + j]
    }

    /// `N~^j` increment over step `k`.
    #[inline]
    pub fn dn(&self, i: usize, k: usize, j: usize) -> f64 {
        self.count(i, k, j) as f64 - self.jumps.intensities()[j] * self.grid.dt()
    }

    /// Whether any Poisson event fell in step `k` for particle `i`.
    pub fn has_event(&self, i: usize, k: usize) -> bool {
        (0..self.marks()).any(|j| self.count(i, k, j) > 0)
    }

    #[inline]
    pub fn brownian(&self, i: usize, k: usize) -> f64 {
        self.brownian[i * (self.grid.steps() + 1) + k]
    }

    #[inline]
    pub fn compensated(&self, i: usize, k: usize) -> &[f64] {
        let m = self.marks();
        let b = (i * (self.grid.steps() + 1) + k) * m;
        &self.compensated[b..b + m]
    }

    #[inline]
    pub fn state(&self, i: usize, k: usize) -> NoiseState<'_> {
        NoiseState {
            brownian: self.brownian(i, k),
            compensated: self.compensated(i, k),
        }
    }

    /// Relabels particles: particle `i` of the result is particle `perm[i]`
    /// of `self`. `perm` may also select a subset.
    pub fn select(&self, perm: &[usize]) -> Self {
        let steps = self.grid.steps();
        let m = self.marks();
        let mut db = Vec::with_capacity(perm.len() * steps);
        let mut counts = Vec::with_capacity(perm.len() * steps * m);
        for &p in perm {
            db.extend_from_slice(&self.db[p * steps..(p + 1) * steps]);
            counts.extend_from_slice(&self.counts[p * steps * m..(p + 1) * steps * m]);
        }
        let ids = perm.iter().map(|&p| self.stream_ids[p]).collect();
        Self::from_increments(self.grid, self.jumps.clone(), self.seed, ids, db, counts)
    }

    /// CSV dump with columns `particle, step, dB, count_1..count_m`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["particle".to_string(), "step".into(), "dB".into()];
        header.extend((1..=self.marks()).map(|j| format!("count_{j}")));
        w.write_record(&header)?;
        for i in 0..self.n_particles() {
            for k in 0..self.grid.steps() {
                let mut rec = vec![i.to_string(), k.to_string(), format!("{:e}", self.db(i, k))];
                rec.extend((0..self.marks()).map(|j| self.count(i, k, j).to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Average over particles of the total compensated increment, per mark and
/// for the Brownian motion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleResiduals {
    pub jumps: Vec<f64>,
    pub brownian: f64,
    pub n_particles: usize,
}

pub fn martingale_check(noise: &NoiseBundle) -> MartingaleResiduals {
    let n = noise.n_particles();
    let last = noise.grid.steps();
    let brownian = (0..n).map(|i| noise.brownian(i, last)).sum::<f64>() / n as f64;
    let jumps = (0..noise.marks())
        .map(|j| (0..n).map(|i| noise.compensated(i, last)[j]).sum::<f64>() / n as f64)
        .collect();
    MartingaleResiduals {
        jumps,
        brownian,
        n_particles: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nu(l: f64) -> JumpMeasure {
        JumpMeasure::new(vec![1.0], vec![l]).unwrap()
    }

    #[test]
    fn degenerate_single_step_has_no_jumps() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        let nb = NoiseBundle::simulate(g, &JumpMeasure::none(), 1, 3).unwrap();
        assert_eq!(nb.n_particles(), 1);
        assert!(nb.db(0, 0).is_finite());
        assert!(!nb.has_event(0, 0));
        assert!(martingale_check(&nb).jumps.is_empty());
    }

    #[test]
    fn deterministic_in_seed_and_stream() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        let a = NoiseBundle::simulate(g, &nu(3.0), 50, 11).unwrap();
        let b = NoiseBundle::simulate(g, &nu(3.0), 50, 11).unwrap();
        assert_eq!(a, b);
        // a particle's path does not depend on how many particles are drawn
        let c = NoiseBundle::simulate_streams(g, &nu(3.0), 11, vec![7]).unwrap();
        assert_eq!(c.db(0, 5), a.db(7, 5));
        assert_eq!(c.count(0, 9, 0), a.count(7, 9, 0));
        let d = NoiseBundle::simulate(g, &nu(3.0), 50, 12).unwrap();
        assert_ne!(a.db(0, 0), d.db(0, 0));
    }

    #[test]
    fn zero_particles_is_an_error() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(NoiseBundle::simulate(g, &nu(1.0), 0, 0).is_err());
    }

    #[test]
    fn select_relabels_rows() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let a = NoiseBundle::simulate(g, &nu(2.0), 3, 5).unwrap();
        let b = a.select(&[2, 0, 1]);
        assert_eq!(b.db(0, 3), a.db(2, 3));
        assert_eq!(b.brownian(1, 4), a.brownian(0, 4));
        assert_eq!(b.compensated(2, 4), a.compensated(1, 4));
        assert_eq!(b.stream_ids(), &[2, 0, 1]);
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let a = NoiseBundle::simulate(g, &nu(2.0), 2, 5).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "particle,step,dB,count_1");
        assert_eq!(lines.count(), 4);
    }
}
