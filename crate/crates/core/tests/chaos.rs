mod common;

use common::linear_mean;
use mfrbsde::chaos::{lln_experiment, run_chaos_experiment, ChaosConfig};
use mfrbsde::{
    solve_meanfield, CoefficientSet, Driver, JumpMeasure, NoiseBundle, Obstacle, ParticleOptions, PicardOptions,
    RegressionSpec, SolverOptions, Terminal, TimeGrid,
};

fn reference(coeffs: &CoefficientSet, steps: usize, m: usize, seed: u64) -> (NoiseBundle, mfrbsde::MeanFieldSolution) {
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let noise = NoiseBundle::simulate(grid, &coeffs.jumps, m, seed).unwrap();
    let sol = solve_meanfield(&noise, coeffs, RegressionSpec::default(), SolverOptions::default(), PicardOptions::default())
        .unwrap();
    (noise, sol)
}

fn chaos(coeffs: &CoefficientSet, noise: &NoiseBundle, sol: &mfrbsde::MeanFieldSolution, cfg: &ChaosConfig) -> mfrbsde::chaos::ChaosReport {
    run_chaos_experiment(
        coeffs,
        sol,
        noise,
        RegressionSpec::default(),
        SolverOptions::default(),
        ParticleOptions::default(),
        cfg,
    )
    .unwrap()
}

#[test]
fn decoupled_system_has_no_component_error() {
    let coeffs = CoefficientSet::new(
        Driver { y: -0.2, sin_y: 0.1, z: 0.0, u: vec![], mean: 0.0, constant: 0.3 },
        Obstacle::inactive(),
        Terminal::Linear { constant: 1.0, brownian: 0.5, jumps: vec![] },
        JumpMeasure::none(),
        2.0,
    )
    .unwrap();
    let (noise, sol) = reference(&coeffs, 10, 400, 1);
    let cfg = ChaosConfig { n_list: vec![1, 4, 20], reps: 3, record_timing: false, ..ChaosConfig::default() };
    let report = chaos(&coeffs, &noise, &sol, &cfg);
    assert_eq!(report.rows.len(), 9);
    for row in &report.rows {
        assert!(row.component_sum() < 1e-20, "{row:?}");
    }
    assert!(report.all_nonnegative());
}

#[test]
fn small_ladder_is_reproducible_and_well_formed() {
    let coeffs = linear_mean(0.5, 1.0, 1.0, 2.0);
    let (noise, sol) = reference(&coeffs, 20, 800, 2);
    let cfg = ChaosConfig { n_list: vec![10, 40, 160], reps: 4, record_timing: false, ..ChaosConfig::default() };
    let a = chaos(&coeffs, &noise, &sol, &cfg);
    let b = chaos(&coeffs, &noise, &sol, &cfg);
    assert!(!a.partial);
    assert_eq!(a.summary.len(), 3);
    assert!(a.all_nonnegative());
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,rep,err_Y_supW,err_Y_Sp,err_Z,err_U,err_K,seconds");
    assert_eq!(text.lines().count(), 13);
    assert!(a.summary_for(160).unwrap().supw_mean < a.summary_for(10).unwrap().supw_mean);
}

#[test]
fn n_must_divide_the_reference_size() {
    let coeffs = linear_mean(0.5, 1.0, 1.0, 2.0);
    let (noise, sol) = reference(&coeffs, 5, 100, 3);
    let cfg = ChaosConfig { n_list: vec![30], reps: 1, ..ChaosConfig::default() };
    let out = run_chaos_experiment(
        &coeffs,
        &sol,
        &noise,
        RegressionSpec::default(),
        SolverOptions::default(),
        ParticleOptions::default(),
        &cfg,
    );
    assert!(out.is_err());
}

#[test]
fn deterministic_lln_vanishes() {
    let coeffs = CoefficientSet::new(
        Driver { y: -0.5, sin_y: 0.0, z: 0.0, u: vec![], mean: 0.2, constant: 1.0 },
        Obstacle::inactive(),
        Terminal::Constant { value: 0.7 },
        JumpMeasure::none(),
        2.0,
    )
    .unwrap();
    let (noise, sol) = reference(&coeffs, 10, 200, 4);
    let table = lln_experiment(
        &coeffs,
        &sol,
        &noise,
        RegressionSpec::default(),
        SolverOptions::default(),
        &[10, 50],
        3,
        2.0,
    )
    .unwrap();
    for row in &table.rows {
        assert!(row.mean < 1e-20);
        assert!(row.bound > 0.0);
    }
}

#[test]
fn lln_decays_for_random_terminal() {
    let coeffs = linear_mean(0.5, 0.0, 1.0, 2.0);
    let (noise, sol) = reference(&coeffs, 10, 1600, 5);
    let table = lln_experiment(
        &coeffs,
        &sol,
        &noise,
        RegressionSpec::default(),
        SolverOptions::default(),
        &[10, 160],
        10,
        2.0,
    )
    .unwrap();
    assert!(table.within_bounds());
    assert!(table.rows[1].mean < table.rows[0].mean);
}
