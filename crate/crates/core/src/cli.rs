//! Command-line front end: `<binary> <subcommand> --config <path.json> --out <path.csv>`.
//!
//! Every run writes its CSV and a `<out>.manifest.json` next to it. Exit code 0 means
//! every grid point succeeded, 1 means at least one point failed (completed rows are
//! kept), 2 means the configuration could not be read or validated.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, ExperimentConfig, Regime};
use crate::empirics::{generate, lambda_sweep};
use crate::error::Error;
use crate::prox::property_battery;
use crate::risk::RiskModel;
use crate::se::{self, SEOutcome, Tuning};
use crate::theory::{self, ExpansionReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_POINT_FAILURE: i32 = 1;
pub const EXIT_BAD_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bridge-lab", version, about = "Asymptotic MSE of bridge regression: state evolution, expansions, Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Optimally tuned AMSE over the (q, delta, sigma_w) grid.
    Amse(RunArgs),
    /// Second-order expansions next to the state-evolution AMSE.
    Expand(RunArgs),
    /// C_q curve and its maximizer.
    Qstar(RunArgs),
    /// Monte Carlo lambda sweeps against the state-evolution AMSE.
    Mc(RunArgs),
    /// AMSE across the delta grid at the smallest sigma_w.
    Phase(RunArgs),
    /// Randomized property battery for the proximal map.
    ProxSelftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for sweep points (default: logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_BAD_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let (command, args) = match cli.command {
        CliCommand::Amse(a) => (Command::Amse, a),
        CliCommand::Expand(a) => (Command::Expand, a),
        CliCommand::Qstar(a) => (Command::Qstar, a),
        CliCommand::Mc(a) => (Command::Mc, a),
        CliCommand::Phase(a) => (Command::Phase, a),
        CliCommand::ProxSelftest(a) => return prox_selftest(&a),
    };
    let config = match load_config(&args.config, command) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("bridge-lab: bad config {}: {msg}", args.config.display());
            return EXIT_BAD_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("bridge-lab: cannot start worker pool: {e}");
            return EXIT_POINT_FAILURE;
        }
    };
    let threads = pool.current_num_threads();
    let started = Instant::now();
    let outcome = pool.install(|| match command {
        Command::Amse => run_amse(&config, &args.out),
        Command::Expand => run_expand(&config, &args.out),
        Command::Qstar => run_qstar(&config, &args.out),
        Command::Mc => run_mc(&config, &args.out),
        Command::Phase => run_phase(&config, &args.out),
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => RunOutcome {
            rows: 0,
            failures: vec![json!({ "error": format!("writing {}: {e}", args.out.display()) })],
            summary: json!(null),
        },
    };
    let manifest = json!({
        "subcommand": command.name(),
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "threads": threads,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "rows": outcome.rows,
        "failures": outcome.failures,
        "summary": outcome.summary,
    });
    if let Err(e) = write_manifest(&args.out, &manifest) {
        eprintln!("bridge-lab: cannot write manifest: {e}");
        return EXIT_POINT_FAILURE;
    }
    if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        eprintln!("bridge-lab: {} point(s) failed; see the manifest", outcome.failures.len());
        EXIT_POINT_FAILURE
    }
}

fn load_config(path: &Path, command: Command) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let config = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;
    config.validate(command).map_err(|e| e.to_string())?;
    Ok(config)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_manifest(out: &Path, manifest: &serde_json::Value) -> std::io::Result<()> {
    let mut file = std::fs::File::create(manifest_path(out))?;
    serde_json::to_writer_pretty(&mut file, manifest)?;
    file.write_all(b"\n")
}

struct RunOutcome {
    rows: usize,
    failures: Vec<serde_json::Value>,
    summary: serde_json::Value,
}

fn csv_writer(out: &Path) -> std::io::Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(std::fs::File::create(out)?))
}

fn cartesian(config: &ExperimentConfig) -> Vec<(f64, f64, f64)> {
    let mut points = Vec::new();
    for &q in &config.q_grid {
        for &delta in &config.delta_grid {
            for &sigma_w in &config.sigma_w_grid {
                points.push((q, delta, sigma_w));
            }
        }
    }
    points
}

fn failure(point: serde_json::Value, err: &Error) -> serde_json::Value {
    json!({ "point": point, "error": err.to_string() })
}

fn solve_points(config: &ExperimentConfig, points: &[(f64, f64, f64)], scaled: bool) -> Vec<Result<SEOutcome, Error>> {
    let se_cfg = config.se_config();
    let model = match RiskModel::new(&config.dist, &se_cfg.quadrature) {
        Ok(m) => m,
        Err(e) => return points.iter().map(|_| Err(e.clone())).collect(),
    };
    points
        .par_iter()
        .map(|&(q, delta, sigma_w)| se::solve_with(&model, q, delta, sigma_w, scaled, &se_cfg.solver, Tuning::Optimal))
        .collect()
}

fn write_outcomes(out: &Path, points: &[(f64, f64, f64)], results: Vec<Result<SEOutcome, Error>>) -> std::io::Result<RunOutcome> {
    let mut writer = csv_writer(out)?;
    writer.write_record(["q", "delta", "sigma_w", "scaled", "sigma_bar", "chi_star", "amse", "iterations", "residual"])?;
    let mut rows = 0;
    let mut failures = Vec::new();
    for (&(q, delta, sigma_w), r) in points.iter().zip(results) {
        match r {
            Ok(o) => {
                writer.serialize(o)?;
                rows += 1;
            }
            Err(e) => failures.push(failure(json!({ "q": q, "delta": delta, "sigma_w": sigma_w }), &e)),
        }
    }
    writer.flush()?;
    Ok(RunOutcome {
        rows,
        failures,
        summary: json!(null),
    })
}

fn run_amse(config: &ExperimentConfig, out: &Path) -> std::io::Result<RunOutcome> {
    let points = cartesian(config);
    let results = solve_points(config, &points, config.scaled);
    write_outcomes(out, &points, results)
}

fn run_phase(config: &ExperimentConfig, out: &Path) -> std::io::Result<RunOutcome> {
    let sigma_w = config.sigma_w_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let mut points = Vec::new();
    for &q in &config.q_grid {
        for &delta in &config.delta_grid {
            points.push((q, delta, sigma_w));
        }
    }
    let results = solve_points(config, &points, config.scaled);
    write_outcomes(out, &points, results)
}

#[derive(Serialize)]
struct ExpansionRow {
    q: f64,
    delta: f64,
    sigma_w: f64,
    first_term: f64,
    second_term: f64,
    validity: &'static str,
    se_amse: f64,
    residual_ratio: f64,
}

fn run_expand(config: &ExperimentConfig, out: &Path) -> std::io::Result<RunOutcome> {
    let points = cartesian(config);
    let scaled = config.regime == Regime::LargeDelta;
    let results = solve_points(config, &points, scaled);
    let mut writer = csv_writer(out)?;
    writer.write_record(["q", "delta", "sigma_w", "first_term", "second_term", "validity", "se_amse", "residual_ratio"])?;
    let mut rows = 0;
    let mut failures = Vec::new();
    for (&(q, delta, sigma_w), r) in points.iter().zip(results) {
        let point = json!({ "q": q, "delta": delta, "sigma_w": sigma_w });
        let report: Result<ExpansionReport, Error> = match config.regime {
            Regime::SmallNoise => theory::small_noise_expansion(q, delta, sigma_w, &config.dist),
            Regime::LargeDelta => theory::large_delta_expansion(q, delta, sigma_w, &config.dist),
        };
        match (report, r) {
            (Ok(rep), Ok(o)) => {
                writer.serialize(ExpansionRow {
                    q,
                    delta,
                    sigma_w,
                    first_term: rep.first_term,
                    second_term: rep.second_term,
                    validity: rep.validity.as_str(),
                    se_amse: o.amse,
                    residual_ratio: if rep.second_term != 0.0 {
                        (o.amse - rep.first_term) / rep.second_term
                    } else {
                        f64::NAN
                    },
                })?;
                rows += 1;
            }
            (Err(e), _) | (_, Err(e)) => failures.push(failure(point, &e)),
        }
    }
    writer.flush()?;
    Ok(RunOutcome {
        rows,
        failures,
        summary: json!(null),
    })
}

fn run_qstar(config: &ExperimentConfig, out: &Path) -> std::io::Result<RunOutcome> {
    let mut writer = csv_writer(out)?;
    writer.write_record(["q", "cq"])?;
    match theory::q_star(&config.dist, &config.qstar) {
        Ok(result) => {
            for &(q, c) in &result.curve {
                writer.write_record([q.to_string(), c.to_string()])?;
            }
            writer.flush()?;
            println!("q_star={:.3}", result.q_star);
            let excluded: Vec<_> = result.excluded.iter().map(|(q, why)| json!({ "q": q, "reason": why })).collect();
            Ok(RunOutcome {
                rows: result.curve.len(),
                failures: Vec::new(),
                summary: json!({ "q_star": result.q_star, "cq_max": result.cq_max, "excluded": excluded }),
            })
        }
        Err(e) => {
            writer.flush()?;
            Ok(RunOutcome {
                rows: 0,
                failures: vec![failure(json!("q_star"), &e)],
                summary: json!(null),
            })
        }
    }
}

#[derive(Serialize)]
struct McRow {
    seed: u64,
    n: usize,
    p: usize,
    q: f64,
    lambda: f64,
    iterations: usize,
    grad_norm: f64,
    mse: f64,
    se_amse: f64,
    rel_err: f64,
}

fn run_mc(config: &ExperimentConfig, out: &Path) -> std::io::Result<RunOutcome> {
    let mc = &config.mc;
    let settings = mc.settings();
    let delta = mc.n as f64 / mc.p as f64;
    let se_cfg = config.se_config();
    let mut writer = csv_writer(out)?;
    writer.write_record(["seed", "n", "p", "q", "lambda", "iterations", "grad_norm", "mse", "se_amse", "rel_err"])?;
    let mut rows = 0;
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for &sigma_w in &config.sigma_w_grid {
        let se_values: Vec<Result<f64, Error>> = config
            .q_grid
            .par_iter()
            .map(|&q| se::solve(q, delta, sigma_w, &config.dist, mc.scaled, &se_cfg).map(|o| o.amse))
            .collect();
        // one instance per seed, shared by every q
        let per_seed: Vec<Result<Vec<(f64, Result<crate::empirics::Sweep, Error>)>, Error>> = mc
            .seeds
            .par_iter()
            .map(|&seed| {
                let inst = generate(mc.n, mc.p, &config.dist, sigma_w, mc.scaled, seed)?;
                Ok(config
                    .q_grid
                    .iter()
                    .map(|&q| (q, lambda_sweep(&inst, q, &config.lambda_grid, &settings)))
                    .collect())
            })
            .collect();
        let mut best: Vec<Vec<f64>> = vec![Vec::new(); config.q_grid.len()];
        for (&seed, res) in mc.seeds.iter().zip(per_seed) {
            let sweeps = match res {
                Ok(s) => s,
                Err(e) => {
                    failures.push(failure(json!({ "seed": seed, "sigma_w": sigma_w }), &e));
                    continue;
                }
            };
            for (k, (q, sweep)) in sweeps.into_iter().enumerate() {
                let se_amse = se_values[k].as_ref().copied().unwrap_or(f64::NAN);
                let sweep = match sweep {
                    Ok(s) => s,
                    Err(e) => {
                        failures.push(failure(json!({ "seed": seed, "sigma_w": sigma_w, "q": q }), &e));
                        continue;
                    }
                };
                for (lambda, r) in &sweep.curve {
                    match r {
                        Ok(s) => {
                            writer.serialize(McRow {
                                seed,
                                n: mc.n,
                                p: mc.p,
                                q,
                                lambda: *lambda,
                                iterations: s.iterations,
                                grad_norm: s.grad_norm,
                                mse: s.mse,
                                se_amse,
                                rel_err: (s.mse - se_amse) / se_amse,
                            })?;
                            rows += 1;
                        }
                        Err(e) => failures.push(json!({
                            "point": { "seed": seed, "sigma_w": sigma_w, "q": q, "lambda": lambda },
                            "error": e.to_string(),
                        })),
                    }
                }
                best[k].push(sweep.best.mse);
            }
        }
        for (k, &q) in config.q_grid.iter().enumerate() {
            match &se_values[k] {
                Ok(se_amse) => {
                    let mean = best[k].iter().sum::<f64>() / best[k].len().max(1) as f64;
                    summary.push(json!({
                        "sigma_w": sigma_w,
                        "q": q,
                        "seeds": best[k].len(),
                        "mean_best_mse": mean,
                        "se_amse": se_amse,
                        "rel_err": (mean - se_amse) / se_amse,
                    }));
                }
                Err(e) => failures.push(failure(json!({ "sigma_w": sigma_w, "q": q, "stage": "se" }), e)),
            }
        }
    }
    writer.flush()?;
    Ok(RunOutcome {
        rows,
        failures,
        summary: json!(summary),
    })
}

fn prox_selftest(args: &SelftestArgs) -> i32 {
    let started = Instant::now();
    let report = property_battery(args.points, args.seed);
    println!(
        "prox-selftest: {} points, fixed-point {:.2e}, scale {:.2e}, derivative {:.2e}, symmetry violations {} -> {}",
        report.points,
        report.max_fixed_point_residual,
        report.max_scale_error,
        report.max_derivative_error,
        report.odd_symmetry_violations,
        if report.passed() { "ok" } else { "FAILED" }
    );
    for f in &report.failures {
        eprintln!("  {f}");
    }
    if let Some(out) = &args.out {
        let written = csv_writer(out).and_then(|mut w| {
            w.write_record(["metric", "value"])?;
            w.write_record(["points".to_string(), report.points.to_string()])?;
            w.write_record(["max_fixed_point_residual".to_string(), report.max_fixed_point_residual.to_string()])?;
            w.write_record(["max_scale_error".to_string(), report.max_scale_error.to_string()])?;
            w.write_record(["max_derivative_error".to_string(), report.max_derivative_error.to_string()])?;
            w.write_record(["odd_symmetry_violations".to_string(), report.odd_symmetry_violations.to_string()])?;
            w.write_record(["q1_continuity_gap".to_string(), report.q1_continuity_gap.to_string()])?;
            w.flush()
        });
        let manifest = json!({
            "subcommand": "prox-selftest",
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "config": { "points": args.points, "seed": args.seed },
            "wall_time_s": started.elapsed().as_secs_f64(),
            "failures": report.failures,
            "summary": report,
        });
        if written.and_then(|_| write_manifest(out, &manifest)).is_err() {
            eprintln!("bridge-lab: cannot write {}", out.display());
            return EXIT_POINT_FAILURE;
        }
    }
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_POINT_FAILURE
    }
}
