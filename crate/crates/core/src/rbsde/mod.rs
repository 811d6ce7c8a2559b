//! Backward solver for reflected BSDEs with jumps under a frozen law.

pub mod apriori;
pub mod regression;
pub mod solver;

pub use apriori::{apriori_check, AprioriReport, ProbeResidual, Run};
pub use regression::{canonical_order, NodeRegression, RegressionSpec};
pub use solver::{
    flatness_residual, nonlinear_expectation, obstacle_margin, solve_rbsde, BackwardSolver, Continuation,
    ObstacleFlow, SolverOptions, SolverStats,
};
