//! Simulation of mean-field reflected backward SDEs with jumps.
//!
//! * [`rbsde`]: backward regression scheme for a reflected BSDE with jumps
//!   under a frozen law, with an implicit driver step and exact reflection
//!   onto an obstacle that may depend on `Y` and its law.
//! * [`meanfield`]: Picard iteration over measure flows for the mean-field
//!   equation, globally or backward interval by interval.
//! * [`particles`]: the weakly interacting `n`-particle system.
//! * [`chaos`]: propagation-of-chaos and law-of-large-numbers experiments.
//! * [`metrics`]: Wasserstein distances on the line and on path space,
//!   Skorohod distances and the modulus `w'`.

pub mod chaos;
pub mod clock;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod export;
pub mod flow;
pub mod grid;
pub mod jumps;
pub mod meanfield;
pub mod metrics;
pub mod particles;
pub mod rbsde;
pub mod smallness;
pub mod solution;
pub mod stochastics;

pub use coeffs::{CoefficientSet, Driver, Level, NoiseState, Obstacle, Terminal, INACTIVE_OBSTACLE};
pub use config::Scenario;
pub use error::{Error, Result};
pub use flow::{Measure, MeasureFlow};
pub use grid::TimeGrid;
pub use jumps::JumpMeasure;
pub use meanfield::{solve_meanfield, MeanFieldSolution, PicardMode, PicardOptions, TraceEntry};
pub use particles::{empirical_flow, solve_particle_system, ParticleOptions, ParticleSolution};
pub use rbsde::{nonlinear_expectation, solve_rbsde, RegressionSpec, SolverOptions};
pub use smallness::{check_smallness, select_beta_eta, Regime, Verdict};
pub use solution::SolutionBundle;
pub use stochastics::{martingale_check, NoiseBundle};
