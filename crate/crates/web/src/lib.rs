//! Browser bindings: smallness verdicts, a mean-field solve of a TOML
//! scenario, and distances between two paths. Results are JSON strings.

use mfrbsde::metrics::{mean_stderr, skorohod_d, skorohod_do, sup_distance, PathSample};
use mfrbsde::{check_smallness, select_beta_eta, solve_meanfield, NoiseBundle, Regime, Scenario};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest Monte Carlo sample accepted from the page.
pub const MAX_SAMPLES: usize = 4000;

pub fn smallness_json(p: f64, gamma1: f64, gamma2: f64, kappa: f64) -> Result<String, String> {
    let mut rows = Vec::new();
    for (name, regime) in [
        ("existence", Regime::Existence),
        ("chaos_Y", Regime::ChaosY),
        ("chaos_full", Regime::ChaosFull { kappa }),
    ] {
        rows.push(match check_smallness(p, gamma1, gamma2, regime) {
            Ok(v) => json!({ "regime": name, "pass": v.pass, "threshold": v.threshold, "value": v.value, "margin": v.margin }),
            Err(e) => json!({ "regime": name, "error": e.to_string() }),
        });
    }
    Ok(json!({ "verdicts": rows }).to_string())
}

pub fn solve_json(config: &str) -> Result<String, String> {
    let s = Scenario::from_toml(config).map_err(|e| e.to_string())?;
    if s.samples > MAX_SAMPLES {
        return Err(format!("samples = {} exceeds the browser limit {MAX_SAMPLES}", s.samples));
    }
    let coeffs = s.coefficients().map_err(|e| e.to_string())?;
    let grid = s.grid().map_err(|e| e.to_string())?;
    let noise = NoiseBundle::simulate(grid, &coeffs.jumps, s.samples, s.seed).map_err(|e| e.to_string())?;
    let sol = solve_meanfield(&noise, &coeffs, s.regression, s.solver_options(), s.picard_options())
        .map_err(|e| e.to_string())?;
    let quantile = |v: &[f64], q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    let mut mean = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for k in 0..grid.nodes() {
        let m = sol.flow.at(k);
        mean.push(m.mean());
        lo.push(quantile(m.samples(), 0.1));
        hi.push(quantile(m.samples(), 0.9));
    }
    let k_mean: Vec<f64> = {
        let paths: Vec<Vec<f64>> = (0..s.samples).map(|i| sol.bundle.k_path(i)).collect();
        (0..grid.nodes()).map(|k| mean_stderr(&paths.iter().map(|p| p[k]).collect::<Vec<_>>()).0).collect()
    };
    let (eta, beta) = select_beta_eta(coeffs.lipschitz_f());
    Ok(json!({
        "t": grid.times(),
        "mean": mean,
        "q10": lo,
        "q90": hi,
        "k_mean": k_mean,
        "y0": mean[0],
        "sweeps": sol.trace.iter().map(|e| e.sup_wasserstein_delta).collect::<Vec<_>>(),
        "eta": eta,
        "beta": beta,
    })
    .to_string())
}

pub fn path_distances_json(times: &[f64], x: &[f64], y: &[f64]) -> Result<String, String> {
    if times.len() != x.len() || times.len() != y.len() || times.is_empty() {
        return Err("times and both paths must have the same nonzero length".into());
    }
    let x = PathSample::new(x.to_vec()).map_err(|e| e.to_string())?;
    let y = PathSample::new(y.to_vec()).map_err(|e| e.to_string())?;
    let sup = sup_distance(&x, &y, times.len() - 1);
    let d_o = skorohod_do(&x, &y, times).map_err(|e| e.to_string())?;
    let d = skorohod_d(&x, &y, times).map_err(|e| e.to_string())?;
    Ok(json!({ "sup": sup, "d_o": d_o, "d": d }).to_string())
}

/// Verdicts of the three smallness regimes.
#[wasm_bindgen]
pub fn smallness(p: f64, gamma1: f64, gamma2: f64, kappa: f64) -> Result<String, JsValue> {
    smallness_json(p, gamma1, gamma2, kappa).map_err(|e| JsValue::from_str(&e))
}

/// Solves the mean-field equation of a TOML scenario; returns the flow
/// summary per node.
#[wasm_bindgen]
pub fn solve(config: &str) -> Result<String, JsValue> {
    solve_json(config).map_err(|e| JsValue::from_str(&e))
}

/// Sup-norm and Skorohod distances between two paths on a shared grid.
#[wasm_bindgen]
pub fn path_distances(times: &[f64], x: &[f64], y: &[f64]) -> Result<String, JsValue> {
    path_distances_json(times, x, y).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn smallness_reports_three_regimes() {
        let v: Value = serde_json::from_str(&smallness_json(4.0, 0.0, 0.0, 2.0).unwrap()).unwrap();
        assert_eq!(v["verdicts"][2]["threshold"].as_f64(), Some(2.44140625e-4));
        let v: Value = serde_json::from_str(&smallness_json(2.0, 0.1, 0.1, 2.0).unwrap()).unwrap();
        assert!(v["verdicts"][2]["error"].is_string());
    }

    #[test]
    fn step_scenario_solves_exactly() {
        let cfg = r#"
horizon = 1.0
steps = 10
samples = 4
[obstacle]
gamma_y = 0.1
gamma_mean = 0.1
level = { kind = "step", before = 3.0, after = 0.0, switch = 0.5 }
[terminal]
kind = "constant"
value = 2.0
"#;
        let v: Value = serde_json::from_str(&solve_json(cfg).unwrap()).unwrap();
        assert!((v["y0"].as_f64().unwrap() - 3.75).abs() < 1e-10);
        assert!((v["k_mean"][10].as_f64().unwrap() - 1.75).abs() < 1e-10);
        assert!(solve_json(&cfg.replace("samples = 4", "samples = 100000")).is_err());
    }

    #[test]
    fn shifted_jump_is_close_in_skorohod() {
        let t = [0.0, 0.25, 0.5, 0.75, 1.0];
        let v: Value = serde_json::from_str(&path_distances_json(&t, &[0.0, 0.0, 1.0, 1.0, 1.0], &[0.0, 1.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(v["sup"].as_f64(), Some(1.0));
        assert!(v["d_o"].as_f64().unwrap() < 1.0);
        assert!(path_distances_json(&t, &[0.0], &[0.0]).is_err());
    }
}
