#![allow(dead_code)]

use mfrbsde::rbsde::{flatness_residual, obstacle_margin, ObstacleFlow};
use mfrbsde::{CoefficientSet, Driver, JumpMeasure, Level, MeasureFlow, NoiseBundle, Obstacle, SolutionBundle, Terminal};

/// Structural invariants every bundle must satisfy.
pub fn assert_bundle_invariants(
    bundle: &SolutionBundle,
    coeffs: &CoefficientSet,
    noise: &NoiseBundle,
    flow: ObstacleFlow<'_>,
    tol: f64,
) {
    let inv = bundle.invariants();
    assert!(inv.finite, "non-finite values in bundle");
    assert!(inv.min_dk >= 0.0, "negative reflection increment {}", inv.min_dk);
    for i in 0..bundle.n_particles() {
        assert_eq!(bundle.k_path(i)[0], 0.0);
    }
    let (margin, flat) = match flow {
        ObstacleFlow::Frozen(f) => (
            obstacle_margin(bundle, coeffs, noise, ObstacleFlow::Frozen(f)),
            flatness_residual(bundle, coeffs, noise, ObstacleFlow::Frozen(f)),
        ),
        ObstacleFlow::Empirical => (
            obstacle_margin(bundle, coeffs, noise, ObstacleFlow::Empirical),
            flatness_residual(bundle, coeffs, noise, ObstacleFlow::Empirical),
        ),
    };
    assert!(margin >= -tol, "obstacle violated by {margin}");
    assert!(flat.abs() <= tol, "flatness residual {flat}");
}

/// `f = 0`, `xi = 2`, `h = 0.1 y + 0.1 mean + 3 1_{t < T/2}`.
pub fn step_obstacle(p: f64) -> CoefficientSet {
    CoefficientSet::new(
        Driver::zero(),
        Obstacle::deterministic(
            0.1,
            0.1,
            Level::Step {
                before: 3.0,
                after: 0.0,
                switch: 0.5,
            },
        ),
        Terminal::Constant { value: 2.0 },
        JumpMeasure::none(),
        p,
    )
    .unwrap()
}

/// `f = a mean(mu)`, no obstacle, `xi = b + sigma B_T`.
pub fn linear_mean(a: f64, b: f64, sigma: f64, p: f64) -> CoefficientSet {
    CoefficientSet::new(
        Driver::linear_mean(a),
        Obstacle::inactive(),
        Terminal::Linear {
            constant: b,
            brownian: sigma,
            jumps: vec![],
        },
        JumpMeasure::none(),
        p,
    )
    .unwrap()
}

/// The exact solution flow of the step-obstacle scenario.
pub fn step_flow(times: &[f64], samples: usize) -> MeasureFlow {
    MeasureFlow::from_samples(
        times
            .iter()
            .map(|&t| vec![if t < 0.5 { 3.75 } else { 2.0 }; samples])
            .collect(),
    )
    .unwrap()
}
