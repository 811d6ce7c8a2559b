//! Scenario files (TOML).
//!
//! ```toml
//! horizon = 1.0
//! steps = 50
//! p = 2.0
//! seed = 7
//! samples = 10000      # Monte Carlo streams of the mean-field solve
//! particles = 100      # size of a single particle-system run
//!
//! [jumps]
//! marks = [1.0]
//! intensities = [2.0]
//!
//! [driver]             # f = y*Y + sin_y*sin(Y) + z*Z + <u, U> + mean*E[Y] + constant
//! mean = 0.5
//!
//! [obstacle]           # h = gamma_y*phi(Y) + gamma_mean*phi(E[Y]) + level(t) + ...
//! gamma_y = 0.1
//! gamma_mean = 0.1
//! level = { kind = "step", before = 3.0, after = 0.0, switch = 0.5 }
//!
//! [terminal]
//! kind = "linear"
//! constant = 1.0
//! brownian = 1.0
//!
//! [regression]
//! degree = 3
//! ridge = 1e-8
//!
//! [solver]
//! tol_picard = 1e-10
//! mode = "interval"    # or "global"
//!
//! [chaos]
//! n_list = [50, 100, 200, 400, 800]
//! reps = 20
//!
//! [lln]
//! n_list = [50, 200, 800]
//! reps = 20
//! ```
//!
//! Unknown keys are rejected. Parse errors carry the line and column of the
//! offending item.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chaos::ChaosConfig;
use crate::coeffs::{CoefficientSet, Driver, Obstacle, Terminal};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jumps::JumpMeasure;
use crate::meanfield::{PicardMode, PicardOptions};
use crate::particles::ParticleOptions;
use crate::rbsde::{RegressionSpec, SolverOptions};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpsConfig {
    pub marks: Vec<f64>,
    pub intensities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Global,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_inner: f64,
    pub max_inner: usize,
    pub tol_picard: f64,
    pub max_iter: usize,
    pub mode: ModeName,
    /// Interval length in interval mode; derived from the contraction bound
    /// when absent.
    pub delta: Option<f64>,
    pub interval_fraction: f64,
    pub allow_outside_regime: bool,
    pub tol_inner_vec: f64,
    pub max_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        let pi = PicardOptions::default();
        let pa = ParticleOptions::default();
        Self {
            tol_inner: s.tol_inner,
            max_inner: s.max_inner,
            tol_picard: pi.tol_picard,
            max_iter: pi.max_iter,
            mode: ModeName::Global,
            delta: None,
            interval_fraction: pi.interval_fraction,
            allow_outside_regime: pi.allow_outside_regime,
            tol_inner_vec: pa.tol_inner_vec,
            max_sweeps: pa.max_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlnConfig {
    pub n_list: Vec<usize>,
    pub reps: usize,
}

impl Default for LlnConfig {
    fn default() -> Self {
        Self {
            n_list: vec![50, 200, 800],
            reps: 20,
        }
    }
}

fn default_p() -> f64 {
    2.0
}

fn default_samples() -> usize {
    10_000
}

fn default_particles() -> usize {
    100
}

fn default_obstacle() -> Obstacle {
    Obstacle::inactive()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Exponent of the full-solution chaos regime.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub jumps: JumpsConfig,
    #[serde(default)]
    pub driver: Driver,
    #[serde(default = "default_obstacle")]
    pub obstacle: Obstacle,
    pub terminal: Terminal,
    #[serde(default)]
    pub regression: RegressionSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub chaos: ChaosConfig,
    #[serde(default)]
    pub lln: LlnConfig,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Config {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        self.grid()?;
        self.coefficients()?;
        if self.samples == 0 || self.particles == 0 {
            return Err(Error::param("samples", "sample and particle counts must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn jump_measure(&self) -> Result<JumpMeasure> {
        JumpMeasure::new(self.jumps.marks.clone(), self.jumps.intensities.clone())
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        CoefficientSet::new(
            self.driver.clone(),
            self.obstacle.clone(),
            self.terminal.clone(),
            self.jump_measure()?,
            self.p,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol_inner: self.solver.tol_inner,
            max_inner: self.solver.max_inner,
        }
    }

    pub fn picard_options(&self) -> PicardOptions {
        PicardOptions {
            tol_picard: self.solver.tol_picard,
            max_iter: self.solver.max_iter,
            mode: match self.solver.mode {
                ModeName::Global => PicardMode::Global,
                ModeName::Interval => PicardMode::Interval {
                    delta: self.solver.delta,
                },
            },
            allow_outside_regime: self.solver.allow_outside_regime,
            interval_fraction: self.solver.interval_fraction,
        }
    }

    pub fn particle_options(&self) -> ParticleOptions {
        ParticleOptions {
            tol_inner_vec: self.solver.tol_inner_vec,
            max_sweeps: self.solver.max_sweeps,
        }
    }
}

/// FNV-1a hash of the configuration text, used to tag reports.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Level;

    const STEP: &str = r#"
horizon = 1.0
steps = 10

[obstacle]
gamma_y = 0.1
gamma_mean = 0.1
level = { kind = "step", before = 3.0, after = 0.0, switch = 0.5 }

[terminal]
kind = "constant"
value = 2.0
"#;

    #[test]
    fn parses_the_step_scenario() {
        let s = Scenario::from_toml(STEP).unwrap();
        assert_eq!(s.p, 2.0);
        assert_eq!(s.obstacle.level, Level::Step { before: 3.0, after: 0.0, switch: 0.5 });
        assert_eq!(s.regression, RegressionSpec::default());
        let c = s.coefficients().unwrap();
        assert_eq!(c.gamma1(), 0.1);
        assert!(c.jumps.is_empty());
    }

    #[test]
    fn missing_obstacle_is_inactive() {
        let s = Scenario::from_toml("horizon = 1.0\nsteps = 4\n[terminal]\nkind = \"constant\"\nvalue = 0.0\n").unwrap();
        assert!(s.obstacle.is_inactive());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = "horizon = 1.0\nsteps = 4\nbogus = 3\n[terminal]\nkind = \"constant\"\nvalue = 0.0\n";
        match Scenario::from_toml(text) {
            Err(Error::Config { line, message, .. }) => {
                assert_eq!(line, 3, "{message}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
        let text = "horizon = 1.0\nsteps = 4\n[terminal]\nkind = \"constant\"\nvalue = 0.0\n[driver]\nmu = 1\n";
        assert!(matches!(Scenario::from_toml(text), Err(Error::Config { line: 7, .. })));
    }

    #[test]
    fn semantic_errors_surface() {
        let text = "horizon = -1.0\nsteps = 4\n[terminal]\nkind = \"constant\"\nvalue = 0.0\n";
        assert!(matches!(Scenario::from_toml(text), Err(Error::Parameter { .. })));
        let text = "horizon = 1.0\nsteps = 4\np = 1.0\n[terminal]\nkind = \"constant\"\nvalue = 0.0\n";
        assert!(matches!(Scenario::from_toml(text), Err(Error::Parameter { name: "p", .. })));
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
