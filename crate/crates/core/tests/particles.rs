mod common;

use common::{assert_bundle_invariants, linear_mean, step_obstacle};
use mfrbsde::flow::sorted;
use mfrbsde::metrics::wasserstein_pow;
use mfrbsde::particles::{off_diagonal_diagnostic, self_consistency_margin};
use mfrbsde::rbsde::ObstacleFlow;
use mfrbsde::{
    empirical_flow, solve_particle_system, CoefficientSet, Driver, Error, JumpMeasure, Level, NoiseBundle, Obstacle,
    ParticleOptions, RegressionSpec, SolverOptions, Terminal, TimeGrid,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn run(noise: &NoiseBundle, coeffs: &CoefficientSet, xi: &[f64]) -> mfrbsde::Result<mfrbsde::ParticleSolution> {
    solve_particle_system(noise, coeffs, xi, RegressionSpec::default(), SolverOptions::default(), ParticleOptions::default())
}

#[test]
fn identical_particles_reproduce_the_mean_field_solution() {
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let coeffs = step_obstacle(2.0);
    for n in [1, 8] {
        let noise = NoiseBundle::simulate(grid, &JumpMeasure::none(), n, 1).unwrap();
        let sol = run(&noise, &coeffs, &vec![2.0; n]).unwrap();
        for i in 0..n {
            for k in 0..=10 {
                let expect = if k < 5 { 3.75 } else { 2.0 };
                assert!((sol.bundle.y(i, k) - expect).abs() < 1e-12);
            }
            assert!((sol.bundle.k_total(i) - 1.75).abs() < 1e-12);
        }
        assert_bundle_invariants(&sol.bundle, &coeffs, &noise, ObstacleFlow::Empirical, 1e-12);
        let flow = empirical_flow(&sol.bundle);
        for k in 0..=10 {
            let s = flow.at(k).samples();
            assert!(s[s.len() - 1] - s[0] < 1e-12);
        }
    }
}

#[test]
fn particle_average_solves_the_mean_ode() {
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let noise = NoiseBundle::simulate(grid, &JumpMeasure::none(), 400, 2).unwrap();
    let coeffs = linear_mean(0.5, 1.0, 1.0, 2.0);
    let xi: Vec<f64> = (0..400).map(|i| coeffs.terminal.eval(noise.state(i, 50))).collect();
    let sol = run(&noise, &coeffs, &xi).unwrap();
    let mean_xi = xi.iter().sum::<f64>() / 400.0;
    let mean_y0 = sol.bundle.y_at(0).iter().sum::<f64>() / 400.0;
    let expect = mean_xi * (1.0f64 - 0.5 * grid.dt()).powi(-50);
    assert!((mean_y0 - expect).abs() < 1e-10, "{mean_y0} vs {expect}");
    assert!((mean_y0 - 0.5f64.exp()).abs() < 0.2);
}

fn interacting_coeffs() -> CoefficientSet {
    let nu = JumpMeasure::new(vec![1.0, -0.5], vec![1.0, 0.5]).unwrap();
    CoefficientSet::new(
        Driver { y: -0.3, sin_y: 0.2, z: 0.1, u: vec![0.2, -0.1], mean: 0.4, constant: 0.1 },
        Obstacle {
            gamma_y: 0.1,
            gamma_mean: 0.15,
            bounded: true,
            level: Level::Step { before: 0.4, after: 0.0, switch: 0.5 },
            brownian: 0.0,
            put_strike: 0.1,
            put_scale: 1.0,
        },
        Terminal::Put { constant: 0.5, strike: 0.1, scale: 1.0 },
        nu,
        2.0,
    )
    .unwrap()
}

#[test]
fn exchangeability_is_bit_exact() {
    let coeffs = interacting_coeffs();
    let grid = TimeGrid::new(1.0, 12).unwrap();
    let noise = NoiseBundle::simulate(grid, &coeffs.jumps, 8, 3).unwrap();
    let xi: Vec<f64> = (0..8).map(|i| coeffs.terminal.eval(noise.state(i, 12)) + 0.01 * i as f64).collect();
    let base = run(&noise, &coeffs, &xi).unwrap();
    assert_bundle_invariants(&base.bundle, &coeffs, &noise, ObstacleFlow::Empirical, 1e-10);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..8).collect();
        perm.shuffle(&mut rng);
        let xi_p: Vec<f64> = perm.iter().map(|&p| xi[p]).collect();
        let out = run(&noise.select(&perm), &coeffs, &xi_p).unwrap();
        assert_eq!(out.bundle, base.bundle.select(&perm));
    }
}

#[test]
fn empirical_measure_inequalities() {
    let coeffs = interacting_coeffs();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let noise = NoiseBundle::simulate(grid, &coeffs.jumps, 64, 5).unwrap();
    let xi: Vec<f64> = (0..64).map(|i| coeffs.terminal.eval(noise.state(i, 10))).collect();
    let xi2: Vec<f64> = xi.iter().enumerate().map(|(i, x)| x + 0.05 * (i % 3) as f64).collect();
    let a = run(&noise, &coeffs, &xi).unwrap();
    let b = run(&noise, &coeffs, &xi2).unwrap();
    let (fa, fb) = (a.flow(), b.flow());
    for p in [2.0, 3.0] {
        for k in 0..=10 {
            let lhs = wasserstein_pow(fa.at(k).samples(), fb.at(k).samples(), p).unwrap();
            let rhs = (0..64).map(|i| (a.bundle.y(i, k) - b.bundle.y(i, k)).abs().powf(p)).sum::<f64>() / 64.0;
            assert!(lhs <= rhs + 1e-14);
            // transport to a point mass has a single coupling
            let zero = vec![0.0; 64];
            let to_zero = wasserstein_pow(fa.at(k).samples(), &zero, p).unwrap();
            let moment = a.bundle.y_at(k).iter().map(|y| y.abs().powf(p)).sum::<f64>() / 64.0;
            assert!((to_zero - moment).abs() < 1e-12 * (1.0 + moment));
        }
    }
    assert!(self_consistency_margin(&a.bundle, &coeffs, &noise) >= -1e-10);
    // permutation invariance of the flow
    let perm: Vec<usize> = (0..64).rev().collect();
    assert_eq!(empirical_flow(&a.bundle.select(&perm)), fa);
}

#[test]
fn failures_are_reported() {
    let coeffs = interacting_coeffs();
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let noise = NoiseBundle::simulate(grid, &coeffs.jumps, 16, 6).unwrap();
    let xi: Vec<f64> = (0..16).map(|i| coeffs.terminal.eval(noise.state(i, 5))).collect();
    let tight = ParticleOptions { max_sweeps: 1, ..ParticleOptions::default() };
    assert!(matches!(
        solve_particle_system(&noise, &coeffs, &xi, RegressionSpec::default(), SolverOptions::default(), tight),
        Err(Error::Diverged { .. })
    ));
    let low = vec![-10.0; 16];
    assert!(matches!(run(&noise, &coeffs, &low), Err(Error::Refused(_))));
    assert!(run(&noise, &coeffs, &xi[..4]).is_err());
}

#[test]
fn off_diagonal_terms_are_small() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let noise = NoiseBundle::simulate(grid, &JumpMeasure::none(), 200, 7).unwrap();
    let coeffs = linear_mean(0.3, 0.0, 1.0, 2.0);
    let xi: Vec<f64> = (0..200).map(|i| coeffs.terminal.eval(noise.state(i, 100))).collect();
    let sol = run(&noise, &coeffs, &xi).unwrap();
    let rows = off_diagonal_diagnostic(&sol.bundle, &noise, 10);
    let diag: Vec<f64> = rows.iter().filter(|r| r.i == r.j).map(|r| r.coefficient).collect();
    let off: Vec<f64> = rows.iter().filter(|r| r.i != r.j).map(|r| r.coefficient).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&diag) - 1.0).abs() < 0.1);
    assert!(mean(&off) < 0.2);
    let mut sorted_diag = sorted(&diag);
    sorted_diag.reverse();
    assert!(sorted_diag[0] < 2.0);
}
