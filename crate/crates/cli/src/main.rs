//! Experiment driver: parse a JSON config, run one pipeline, emit artifacts.
//!
//! Exit codes: 0 success, 2 configuration/schema error, 3 model-assumption
//! violation, 4 numerical refusal (1 for I/O and other environment errors;
//! `validate` also exits 1 when a criterion fails).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crossing_core::acceptance;
use crossing_core::config::ExperimentConfig;
use crossing_core::error::{Error, Result};
use crossing_core::expansion::{assemble, rate_study, Assembly};
use crossing_core::fluctuation::{estimate_rho, OvershootConstants};
use crossing_core::model::Payoff;
use crossing_core::pde;
use crossing_core::report::{value_hash, CsvReport, FieldCache, format_sig, write_json};
use crossing_core::walk::{mc_expectation, step_cap, visit_counts, DiagnosticsRequest};

#[derive(Parser)]
#[command(
    name = "crossing",
    about = "Corrected Brownian approximations for boundary crossing problems",
    version
)]
struct Cli {
    /// Path to the JSON experiment configuration.
    #[arg(long, global = true, default_value = "experiment.json")]
    config: PathBuf,

    /// Override the output directory from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread count (affects speed only, never results).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Enable near-boundary visit counters during simulation.
    #[arg(long, global = true)]
    diagnostics: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the value, third-derivative, running-cost and coupling fields
    /// and cache them to disk.
    Solve,
    /// Monte Carlo estimates of the payoff expectation at each walk size.
    Simulate,
    /// Estimate the ladder-height constants for the configured distribution.
    Rho,
    /// Assemble the corrected expansion and emit the report.
    Expand,
    /// Compare Monte Carlo against the corrected expansion across n.
    Rates,
    /// Run the acceptance suite and print the pass/fail table.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        // Speed-only knob: results are defined by fixed-batch merges.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Criteria) => ExitCode::from(1),
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

enum CliError {
    Lib(Error),
    /// `validate` completed but at least one criterion failed.
    Criteria,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_path(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.outputs.directory = out.display().to_string();
    }
    let out_dir = PathBuf::from(&cfg.outputs.directory);
    match cli.command {
        Command::Solve => cmd_solve(&cfg, &out_dir)?,
        Command::Simulate => cmd_simulate(&cfg, &out_dir, cli.diagnostics)?,
        Command::Rho => {
            cmd_rho(&cfg, &out_dir)?;
        }
        Command::Expand => {
            cmd_expand(&cfg, &out_dir)?;
        }
        Command::Rates => cmd_rates(&cfg, &out_dir)?,
        Command::Validate => {
            let report = acceptance::run_from_config(&cfg)?;
            print!("{}", report.render());
            if !report.all_passed() {
                return Err(CliError::Criteria);
            }
        }
    }
    Ok(())
}

/// Solve all fields for the configured problem, reusing cached entries.
fn solve_fields(cfg: &ExperimentConfig, out_dir: &Path) -> Result<[pde::Field; 4]> {
    let cache = FieldCache::new(out_dir.join("cache"));
    let boundary = &cfg.problem.boundary;
    let payoff = &cfg.problem.payoff;
    let grid = &cfg.grid;
    let key = |label: &str| value_hash(&(&cfg.problem, grid, label));

    let u_key = key("payoff")?;
    let u = match cache.load(&u_key)? {
        Some(f) => f,
        None => {
            let f = pde::solve_value(
                boundary,
                &|t| payoff.value(t, boundary.value(t)),
                "payoff",
                grid,
            )?;
            cache.store(&u_key, &f)?;
            f
        }
    };
    let delta = pde::compute_delta(&u, payoff)?;
    let u_xxx_key = key("u_xxx")?;
    let u_xxx = match cache.load(&u_xxx_key)? {
        Some(f) => f,
        None => {
            let f = pde::third_derivative(&u)?;
            cache.store(&u_xxx_key, &f)?;
            f
        }
    };
    let w_key = key("w")?;
    let w = match cache.load(&w_key)? {
        Some(f) => f,
        None => {
            let f = pde::solve_running_cost(boundary, &u_xxx, grid)?;
            cache.store(&w_key, &f)?;
            f
        }
    };
    let g_key = key("delta")?;
    let g = match cache.load(&g_key)? {
        Some(f) => f,
        None => {
            let t_hi = delta.t_max();
            let f = pde::solve_value(
                boundary,
                &|t| delta.eval(t.clamp(0.0, t_hi)).expect("clamped"),
                "delta",
                grid,
            )?;
            cache.store(&g_key, &f)?;
            f
        }
    };
    Ok([u, u_xxx, w, g])
}

fn cmd_solve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let [u, u_xxx, w, g] = solve_fields(cfg, out_dir)?;
    println!("u(0,0)     = {}", format_sig(u.at_origin()));
    println!("u_xxx(0,0) = {}", format_sig(u_xxx.at_origin()));
    println!("w(0,0)     = {}", format_sig(w.at_origin()));
    println!("g(0,0)     = {}", format_sig(g.at_origin()));
    println!(
        "truncation P(tau > {}) ~ {}",
        u.grid.t_max,
        format_sig(u.meta.truncation_prob)
    );
    println!("fields cached under {}", out_dir.join("cache").display());
    Ok(())
}

fn payoff_functional(payoff: &Payoff) -> impl Fn(&crossing_core::walk::CrossingRecord) -> f64 + Sync + '_ {
    move |rec| payoff.value(rec.tau, rec.terminal)
}

fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path, diagnostics: bool) -> Result<()> {
    let cap_horizon = cfg.grid.t_max * (1.0 + cfg.grid.tail_factor);
    let config_hash = cfg.hash()?;
    let mut csv = CsvReport::new(&["n", "mean", "stderr", "paths", "seed"])
        .with_provenance("config", config_hash.clone());
    for (idx, &n) in cfg.n_list.iter().enumerate() {
        let est = mc_expectation(
            payoff_functional(&cfg.problem.payoff),
            n,
            &cfg.problem.distribution,
            &cfg.problem.boundary,
            step_cap(n, cap_horizon),
            cfg.mc.paths,
            cfg.mc.master_seed.wrapping_add(idx as u64),
        )?;
        csv.push_row(vec![
            n as f64,
            est.mean,
            est.stderr,
            est.paths as f64,
            est.seed as f64,
        ]);
    }
    let path = out_dir.join("simulate.csv");
    csv.write_to(&path)?;
    println!("wrote {}", path.display());

    if diagnostics {
        let d_values = vec![0.5, 1.0, 2.0, 4.0];
        let mut diag = CsvReport::new(&["n", "d", "mean_visits", "stderr", "edge_weight_mean"])
            .with_provenance("config", config_hash);
        for (idx, &n) in cfg.n_list.iter().enumerate() {
            let req = DiagnosticsRequest {
                d_values: d_values.clone(),
                intervals: Vec::new(),
            };
            let stats = visit_counts(
                n,
                &cfg.problem.distribution,
                &cfg.problem.boundary,
                step_cap(n, cap_horizon),
                &req,
                cfg.mc.paths,
                cfg.mc.master_seed.wrapping_add(1000 + idx as u64),
            )?;
            for &(d, mean, stderr) in &stats.near {
                diag.push_row(vec![n as f64, d, mean, stderr, stats.edge_weight.0]);
            }
        }
        let path = out_dir.join("diagnostics.csv");
        diag.write_to(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_rho(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(OvershootConstants, String)> {
    let constants = estimate_rho(
        &cfg.problem.distribution,
        cfg.fluctuation.epochs,
        cfg.fluctuation.cap,
        cfg.mc.master_seed,
    )?;
    let provenance = vec![
        ("config".to_string(), cfg.hash()?),
        (
            "distribution".to_string(),
            value_hash(&cfg.problem.distribution)?,
        ),
    ];
    let path = out_dir.join("rho.json");
    let hash = write_json(&path, &provenance, &constants)?;
    println!(
        "rho = {} +- {} ({} epochs), wrote {}",
        format_sig(constants.rho),
        format_sig(constants.rho_stderr),
        constants.epochs_used,
        path.display()
    );
    Ok((constants, hash))
}

fn cmd_expand(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Assembly> {
    let (constants, rho_hash) = cmd_rho(cfg, out_dir)?;
    let assembly = assemble(
        &cfg.problem.boundary,
        &cfg.problem.payoff,
        &cfg.problem.distribution,
        &cfg.grid,
        &constants,
    )?;
    let provenance = vec![
        ("config".to_string(), cfg.hash()?),
        ("rho_artifact".to_string(), rho_hash),
    ];
    let path = out_dir.join("expansion.json");
    write_json(&path, &provenance, &assembly.report)?;
    println!(
        "leading = {}, skew term = {}, overshoot term = {}",
        format_sig(assembly.report.leading),
        format_sig(assembly.report.skew_term),
        format_sig(assembly.report.overshoot_term)
    );
    for &n in &cfg.n_list {
        println!("corrected({n}) = {}", format_sig(assembly.report.corrected(n)));
    }
    println!("wrote {}", path.display());
    Ok(assembly)
}

fn cmd_rates(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let assembly = cmd_expand(cfg, out_dir)?;
    let study = rate_study(
        &assembly,
        &cfg.problem.payoff,
        &cfg.problem.distribution,
        &cfg.n_list,
        cfg.mc.paths,
        cfg.mc.master_seed,
    )?;
    let mut csv = CsvReport::new(&[
        "n",
        "paths",
        "mc",
        "mc_stderr",
        "uncorrected",
        "corrected",
        "scaled_residual_corrected",
        "scaled_residual_uncorrected",
    ])
    .with_provenance("config", cfg.hash()?)
    .with_provenance("verdict", format!("{:?}", study.verdict))
    .with_provenance("kendall_tau", format_sig(study.kendall_tau));
    for row in &study.rows {
        csv.push_row(vec![
            row.n as f64,
            cfg.mc.paths as f64,
            row.mc,
            row.mc_stderr,
            row.uncorrected,
            row.corrected,
            row.scaled_residual_corrected,
            row.scaled_residual_uncorrected,
        ]);
    }
    let path = out_dir.join("rates.csv");
    csv.write_to(&path)?;
    println!("verdict: {:?} (kendall tau {})", study.verdict, format_sig(study.kendall_tau));
    println!("wrote {}", path.display());
    Ok(())
}
