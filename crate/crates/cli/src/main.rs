//! Command-line front end: smallness checks, mean-field solves, particle
//! systems and the LLN / propagation-of-chaos experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mfrbsde::chaos::{lln_experiment, run_chaos_experiment, terminal_values};
use mfrbsde::config::config_hash;
use mfrbsde::export::{write_file, write_flow_summary_csv};
use mfrbsde::metrics::{
    lln_diagnostic, mean_stderr, skorohod_d, skorohod_do, sup_distance, wasserstein_unsorted, LlnOptions, PathCost,
    PathSample,
};
use mfrbsde::meanfield::write_trace_csv;
use mfrbsde::particles::{off_diagonal_diagnostic, write_off_diagonal_csv};
use mfrbsde::smallness::interval_contraction;
use mfrbsde::{
    check_smallness, select_beta_eta, solve_meanfield, solve_particle_system, solve_rbsde, Error, MeanFieldSolution,
    NoiseBundle, Regime, Scenario,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "mfrbsde", version, about = "Mean-field reflected BSDEs with jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smallness verdicts and contraction constants of a scenario.
    Check {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the mean-field equation by Picard iteration on measure flows.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full per-sample solution.
        #[arg(long)]
        bundle: bool,
    },
    /// Solve one interacting particle system of `particles` particles.
    Particles {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `particles` from the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Propagation-of-chaos ladder against a mean-field reference.
    Chaos {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Law-of-large-numbers decay tables.
    Lln {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances between samples or paths given as CSV files.
    Metrics {
        #[arg(value_enum)]
        kind: MetricKind,
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    /// `W_p` between two samples (first column of each file).
    Wasserstein,
    /// Sup, `d°` and `d` distances between two paths (`t, value` columns).
    Skorohod,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Refused(_) => 2,
        Error::Diverged { .. } => 3,
        _ => 1,
    }
}

fn provenance(text: &str, scenario: &Scenario) -> Value {
    json!({
        "tool": format!("mfrbsde {}", env!("CARGO_PKG_VERSION")),
        "config_hash": config_hash(text),
        "seed": scenario.seed,
    })
}

fn load(path: &Path) -> mfrbsde::Result<(String, Scenario)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))?;
    let scenario = Scenario::from_toml(&text)?;
    Ok((text, scenario))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> mfrbsde::Result<()> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        Ok(())
    })
}

fn check(config: &Path, out: Option<&Path>) -> mfrbsde::Result<()> {
    let (text, s) = load(config)?;
    let coeffs = s.coefficients()?;
    let (g1, g2) = (coeffs.gamma1(), coeffs.gamma2());
    let kappa = s.kappa.unwrap_or(2.0);
    let mut verdicts = Vec::new();
    for (name, regime) in [
        ("existence", Regime::Existence),
        ("chaos_Y", Regime::ChaosY),
        ("chaos_full", Regime::ChaosFull { kappa }),
    ] {
        let line = match check_smallness(s.p, g1, g2, regime) {
            Ok(v) => {
                println!(
                    "{name:<11} {} value {:.6e} threshold {:.6e} margin {:.6e}",
                    if v.pass { "pass" } else { "fail" },
                    v.value,
                    v.threshold,
                    v.margin
                );
                json!({ "regime": name, "verdict": v })
            }
            Err(e) => {
                println!("{name:<11} n/a  {e}");
                json!({ "regime": name, "error": e.to_string() })
            }
        };
        verdicts.push(line);
    }
    let c_f = coeffs.lipschitz_f();
    let (eta, beta) = select_beta_eta(c_f);
    println!("C_f {c_f:.6} eta {eta:.6e} beta {beta:.6e}");
    let contraction = interval_contraction(s.p, c_f, g1, g2, s.horizon, s.solver.interval_fraction).ok();
    if let Some(c) = &contraction {
        println!("interval delta {:.6e} (max {:.6e}) alpha {:.6e}", c.delta, c.delta_max, c.alpha);
    }
    if let Some(dir) = out {
        let report = json!({
            "gamma1": g1,
            "gamma2": g2,
            "p": s.p,
            "lipschitz_f": c_f,
            "eta": eta,
            "beta": beta,
            "verdicts": verdicts,
            "interval_contraction": contraction,
            "provenance": provenance(&text, &s),
        });
        write_json(dir, "check.json", &report)?;
    }
    Ok(())
}

fn reference(s: &Scenario) -> mfrbsde::Result<(NoiseBundle, MeanFieldSolution)> {
    let coeffs = s.coefficients()?;
    let noise = NoiseBundle::simulate(s.grid()?, &coeffs.jumps, s.samples, s.seed)?;
    let sol = solve_meanfield(&noise, &coeffs, s.regression, s.solver_options(), s.picard_options())?;
    Ok((noise, sol))
}

fn solve(config: &Path, out: &Path, bundle: bool) -> mfrbsde::Result<()> {
    let (text, s) = load(config)?;
    let (noise, sol) = match reference(&s) {
        Err(Error::Diverged { iterations, last_delta, trace }) => {
            write_file(out, "trace.csv", |w| write_trace_csv(&trace, &mut *w))?;
            return Err(Error::Diverged { iterations, last_delta, trace });
        }
        r => r?,
    };
    let grid = noise.grid();
    write_file(out, "trace.csv", |w| sol.write_trace_csv(&mut *w))?;
    write_file(out, "flow_summary.csv", |w| write_flow_summary_csv(&sol.flow, grid, &mut *w))?;
    if bundle {
        write_file(out, "solution.csv", |w| sol.bundle.write_csv(&mut *w))?;
    }
    // Y_0 is deterministic; its Monte Carlo error is that of the terminal mean
    let y0 = mean_stderr(&sol.bundle.y_at(0)).0;
    let (xi_mean, xi_se) = mean_stderr(&sol.bundle.y_at(grid.steps()));
    let summary = json!({
        "y0": y0,
        "terminal_mean": xi_mean,
        "terminal_stderr": xi_se,
        "sweeps": sol.trace.len(),
        "intervals": sol.intervals,
        "solver_stats": sol.stats,
        "provenance": provenance(&text, &s),
    });
    write_json(out, "summary.json", &summary)?;
    println!("Y0 {y0:.6} after {} sweeps (terminal mean {xi_mean:.6} ± {xi_se:.1e})", sol.trace.len());
    Ok(())
}

fn particles(config: &Path, out: &Path, n: Option<usize>) -> mfrbsde::Result<()> {
    let (text, s) = load(config)?;
    let coeffs = s.coefficients()?;
    let n = n.unwrap_or(s.particles);
    let noise = NoiseBundle::simulate(s.grid()?, &coeffs.jumps, n, s.seed)?;
    let xi = terminal_values(&noise, &coeffs)?;
    let sol = solve_particle_system(&noise, &coeffs, &xi, s.regression, s.solver_options(), s.particle_options())?;
    write_file(out, "solution.csv", |w| sol.bundle.write_csv(&mut *w))?;
    write_file(out, "flow_summary.csv", |w| write_flow_summary_csv(&sol.flow(), noise.grid(), &mut *w))?;
    let offdiag = off_diagonal_diagnostic(&sol.bundle, &noise, 20);
    write_file(out, "off_diagonal.csv", |w| write_off_diagonal_csv(&offdiag, &mut *w))?;
    let y0 = mean_stderr(&sol.bundle.y_at(0)).0;
    let (xi_mean, xi_se) = mean_stderr(&xi);
    let summary = json!({
        "n": n,
        "y0": y0,
        "terminal_mean": xi_mean,
        "terminal_stderr": xi_se,
        "max_sweeps": sol.max_sweeps,
        "solver_stats": sol.stats,
        "provenance": provenance(&text, &s),
    });
    write_json(out, "summary.json", &summary)?;
    println!("n {n} mean Y0 {y0:.6}, at most {} sweeps per node", sol.max_sweeps);
    Ok(())
}

fn chaos(config: &Path, out: &Path) -> mfrbsde::Result<()> {
    let (text, s) = load(config)?;
    let coeffs = s.coefficients()?;
    let (noise, sol) = reference(&s)?;
    let report = run_chaos_experiment(
        &coeffs,
        &sol,
        &noise,
        s.regression,
        s.solver_options(),
        s.particle_options(),
        &s.chaos,
    )?;
    write_file(out, "chaos.csv", |w| report.write_csv(&mut *w))?;
    let summary = json!({
        "summary": report.summary,
        "partial": report.partial,
        "reference_samples": report.reference_samples,
        "seconds": report.seconds,
        "provenance": provenance(&text, &s),
    });
    write_json(out, "summary.json", &summary)?;
    for r in &report.summary {
        println!(
            "n {:>5} supW {:.4e} ± {:.1e}  components {:.4e} ± {:.1e}",
            r.n, r.supw_mean, r.supw_stderr, r.component_mean, r.component_stderr
        );
    }
    if report.partial {
        println!("budget exhausted: partial report");
    }
    Ok(())
}

fn lln(config: &Path, out: &Path) -> mfrbsde::Result<()> {
    let (text, s) = load(config)?;
    let coeffs = s.coefficients()?;
    let (noise, sol) = reference(&s)?;
    let n_list = &s.lln.n_list;
    let marginal = lln_experiment(
        &coeffs,
        &sol,
        &noise,
        s.regression,
        s.solver_options(),
        n_list,
        s.lln.reps,
        s.p,
    )?;
    // iid path copies on streams disjoint from the reference
    let max_n = n_list.iter().copied().max().unwrap_or(1);
    let grid = noise.grid();
    let ids: Vec<u64> = (0..max_n as u64).map(|i| u64::MAX - i).collect();
    let fresh = NoiseBundle::simulate_streams(grid, &coeffs.jumps, s.seed, ids)?;
    let copies = solve_rbsde(&fresh, &coeffs, &sol.flow, s.regression, s.solver_options())?;
    let paths = |b: &mfrbsde::SolutionBundle| -> Vec<PathSample> {
        (0..b.n_particles()).map(|i| PathSample(b.y_path(i).to_vec())).collect()
    };
    let opts = LlnOptions {
        p: s.p,
        reps: s.lln.reps,
        seed: s.seed,
        cost: PathCost::Sup,
        independent_pairs: 1000,
    };
    let path = lln_diagnostic(&paths(&copies), &paths(&sol.bundle), &grid.times(), n_list, opts)?;
    write_file(out, "lln_marginal.csv", |w| marginal.write_csv(&mut *w))?;
    write_file(out, "lln_path.csv", |w| path.optimal.write_csv(&mut *w))?;
    write_file(out, "lln_path_independent.csv", |w| path.independent.write_csv(&mut *w))?;
    let summary = json!({
        "marginal": marginal,
        "path": path,
        "provenance": provenance(&text, &s),
    });
    write_json(out, "summary.json", &summary)?;
    for r in &marginal.rows {
        println!("n {:>5} sup_k W_p^p {:.4e} ± {:.1e} (bound {:.3e})", r.n, r.mean, r.stderr, r.bound);
    }
    Ok(())
}

fn read_column(path: &Path, columns: usize) -> mfrbsde::Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = vec![Vec::new(); columns];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (c, col) in out.iter_mut().enumerate() {
            let field = record.get(c).ok_or_else(|| Error::Config {
                line: row + 2,
                column: c + 1,
                message: format!("{}: expected {columns} column(s)", path.display()),
            })?;
            let v = field.trim().parse::<f64>().map_err(|e| Error::Config {
                line: row + 2,
                column: c + 1,
                message: format!("{}: {e}", path.display()),
            })?;
            col.push(v);
        }
    }
    Ok(out)
}

fn metrics(kind: MetricKind, a: &Path, b: &Path, p: f64, out: Option<&Path>) -> mfrbsde::Result<()> {
    let report = match kind {
        MetricKind::Wasserstein => {
            let x = read_column(a, 1)?.remove(0);
            let y = read_column(b, 1)?.remove(0);
            let w = wasserstein_unsorted(&x, &y, p)?;
            println!("W_{p} {w:.12e}");
            json!({ "metric": "wasserstein", "p": p, "value": w })
        }
        MetricKind::Skorohod => {
            let mut x = read_column(a, 2)?;
            let mut y = read_column(b, 2)?;
            if x[0] != y[0] {
                return Err(Error::Parameter {
                    name: "paths",
                    reason: "both paths must be sampled on the same times".into(),
                });
            }
            let times = std::mem::take(&mut x[0]);
            let (x, y) = (PathSample::new(x.remove(1))?, PathSample::new(y.remove(1))?);
            let sup = sup_distance(&x, &y, times.len() - 1);
            let d_o = skorohod_do(&x, &y, &times)?;
            let d = skorohod_d(&x, &y, &times)?;
            println!("sup {sup:.12e}\nd_o {d_o:.12e}\nd   {d:.12e}");
            json!({ "metric": "skorohod", "sup": sup, "d_o": d_o, "d": d })
        }
    };
    if let Some(dir) = out {
        write_json(dir, "metrics.json", &report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { config, out } => check(config, out.as_deref()),
        Command::Solve { config, out, bundle } => solve(config, out, *bundle),
        Command::Particles { config, out, n } => particles(config, out, *n),
        Command::Chaos { config, out } => chaos(config, out),
        Command::Lln { config, out } => lln(config, out),
        Command::Metrics { kind, a, b, p, out } => metrics(*kind, a, b, *p, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
