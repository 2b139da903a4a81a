//! End-to-end acceptance suite.
//!
//! Nine numbered criteria validate the whole pipeline against closed-form
//! oracles, cross-implementation consistency and property checks, each with
//! pinned tolerances. The suite is deterministic: all Monte Carlo budgets
//! and seeds derive from one master seed, so a rerun reproduces every number
//! (and every emitted byte) exactly.
//!
//! Budget notes for the single-criterion step caps: ladder epochs from a
//! start `x < 0` return in finite time but with `P(T > m) ~ C(x)/sqrt(m)`,
//! so each call site picks a cap making the capped fraction comfortably
//! below the refusal limit while keeping the `E[T ^ cap] ~ 2 C sqrt(cap)`
//! cost affordable.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::expansion::{
    assemble, e_n_diagnostic, convolution_oracle, rate_study, AnalyticExtension, Assembly,
    ConvolutionConfig, RateStudy,
};
use crate::fluctuation::{check_h_harmonic, estimate_rho, OvershootConstants};
use crate::model::{Boundary, IncrementDistribution, Payoff};
use crate::pde::{solve_value, GridConfig};
use crate::report::{format_sig, CsvReport};
use crate::walk::{
    joint_overshoot_stats, mc_expectation, step_cap, visit_counts, ConstantStep,
    DiagnosticsRequest,
};

/// Default master seed of the suite; `validate` uses the config's seed.
pub const SUITE_SEED: u64 = 20_260_826;

/// One pass/fail line of the suite.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {} ({:.0}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// All nine outcomes plus the rendered table.
#[derive(Debug, Clone)]
pub struct AcceptanceReport {
    pub outcomes: Vec<CriterionOutcome>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            let _ = writeln!(s, "{}", o.line());
        }
        let _ = writeln!(
            s,
            "suite: {}/{} criteria passed",
            self.outcomes.iter().filter(|o| o.passed).count(),
            self.outcomes.len()
        );
        s
    }
}

fn outcome(id: u8, name: &'static str, passed: bool, detail: String, t0: Instant) -> CriterionOutcome {
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// The standard problem's exact Brownian value `u(0,0) = exp(1/2 - sqrt(5)/2)`.
fn closed_form_u00() -> f64 {
    (0.5 - 1.25_f64.sqrt()).exp()
}

/// Grid used by the pinned solver criterion. Survival past `t_max = 12` is
/// ~1.6e-2 for this problem, so the default truncation tolerance would
/// refuse; the padded backward march makes the actual terminal bias ~e^-24,
/// so a 2e-2 tolerance is appropriate here.
fn criterion_grid(ny: usize, nt: usize) -> GridConfig {
    let mut grid = GridConfig::new(8.0, 12.0, ny, nt);
    grid.truncation_tol = 0.02;
    grid
}

/// Run the whole suite. When `out_dir` is given, the determinism criterion's
/// artifacts and the rendered table are written there.
pub fn run_suite(master_seed: u64, out_dir: Option<&Path>) -> Result<AcceptanceReport> {
    let boundary = Boundary::standard();
    let payoff = Payoff::standard();
    let normal = IncrementDistribution::StandardNormal;
    let cexp = IncrementDistribution::CenteredExponential;
    let mut outcomes = Vec::with_capacity(9);

    // 1. Closed-form leading term and grid-refinement order.
    let t0 = Instant::now();
    let grid = criterion_grid(512, 1024);
    let coarse = solve_value(&boundary, &|t| payoff.value(t, 0.0), "payoff", &grid)?;
    let fine = solve_value(&boundary, &|t| payoff.value(t, 0.0), "payoff", &grid.refined())?;
    let target = closed_form_u00();
    let err1 = (coarse.at_origin() - target).abs();
    let err2 = (fine.at_origin() - target).abs();
    let elapsed1 = t0.elapsed().as_secs_f64();
    let pass1 = err1 < 2e-3 && err1 >= 3.0 * err2 && elapsed1 < 30.0;
    outcomes.push(outcome(
        1,
        "closed-form leading term",
        pass1,
        format!(
            "|u(0,0) - {}| = {:.2e} (tol 2e-3), refinement ratio {:.1} (>= 3)",
            format_sig(target),
            err1,
            err1 / err2.max(1e-300)
        ),
        t0,
    ));

    // 2. Overshoot constants.
    let t0 = Instant::now();
    let stub = estimate_rho(&ConstantStep(1.0), 10_000, 1_000, master_seed + 100)?;
    // Centered-exponential: capped fraction at cap 4e6 measured ~2.8e-4.
    let rho_cexp = estimate_rho(&cexp, 1_000_000, 4_000_000, master_seed + 110)?;
    // Standard normal: fraction ~5.7e-4 at the default 1e6 cap.
    let rho_n1 = estimate_rho(&normal, 10_000_000, 1_000_000, master_seed + 120)?;
    let rho_n2 = estimate_rho(&normal, 10_000_000, 1_000_000, master_seed + 130)?;
    let elapsed2 = t0.elapsed().as_secs_f64();
    let pass2 = (stub.rho - 0.5).abs() < 1e-15
        && (rho_cexp.rho - 1.0).abs() <= 0.01
        && (rho_n1.rho - rho_n2.rho).abs() <= 0.005
        && elapsed2 < 300.0;
    outcomes.push(outcome(
        2,
        "overshoot constants",
        pass2,
        format!(
            "stub {} (exact 0.5), exp {:.4} (1 +- 0.01), normal {:.5} vs {:.5} (|diff| {:.1e} <= 5e-3), {:.0}s (< 300)",
            format_sig(stub.rho),
            rho_cexp.rho,
            rho_n1.rho,
            rho_n2.rho,
            (rho_n1.rho - rho_n2.rho).abs(),
            elapsed2
        ),
        t0,
    ));

    // 3. Harmonicity of H for x < 0 under normal increments.
    let t0 = Instant::now();
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 1.0); // (x, deviation, stderr)
    let mut pass3 = true;
    for (i, (&x, &cap)) in [-0.5_f64, -1.0, -2.0]
        .iter()
        .zip(&[2_000_000_u64, 4_000_000, 16_000_000])
        .enumerate()
    {
        let dev = check_h_harmonic(
            &normal,
            &[x],
            rho_n1.rho,
            1_000_000,
            cap,
            master_seed + 200 + 10 * i as u64,
        )?;
        let d = dev[0];
        if d.deviation.abs() >= 3.0 * d.stderr {
            pass3 = false;
        }
        if d.deviation.abs() / d.stderr > worst.1.abs() / worst.2 {
            worst = (d.x, d.deviation, d.stderr);
        }
    }
    outcomes.push(outcome(
        3,
        "H-harmonicity",
        pass3,
        format!(
            "worst |EH(x+X) - H(x)| at x = {}: {:.2e} vs 3 stderr = {:.2e}",
            worst.0,
            worst.1.abs(),
            3.0 * worst.2
        ),
        t0,
    ));

    // 4. Corrected-approximation rate check (centered-exponential).
    let t0 = Instant::now();
    // Finer grid than criterion 1: sqrt(n)-scaled comparisons amplify the
    // solver error by a factor 40 at n = 1600.
    let asm_grid = criterion_grid(1025, 2049);
    let assembly = assemble(&boundary, &payoff, &cexp, &asm_grid, &rho_cexp)?;
    // Richardson bound on the remaining u(0,0) discretization error.
    let half = solve_value(&boundary, &|t| payoff.value(t, 0.0), "payoff", &criterion_grid(513, 1025))?;
    let pde_err = (assembly.report.u00 - half.at_origin()).abs() / 3.0;
    let n_list = [100_u64, 400, 1600];
    let study = rate_study(&assembly, &payoff, &cexp, &n_list, 10_000_000, master_seed + 300)?;
    let (pass4, detail4) = criterion_4_checks(&assembly, &study, pde_err, t0.elapsed().as_secs_f64());
    outcomes.push(outcome(4, "corrected rate check", pass4, detail4, t0));

    // 5. Overshoot-coupling consistency at n = 1600.
    let t0 = Instant::now();
    let (pass5, detail5) = criterion_5(
        &assembly,
        &boundary,
        &[(&normal, &rho_n1, "normal"), (&cexp, &rho_cexp, "exp")],
        master_seed + 400,
    )?;
    outcomes.push(outcome(5, "overshoot coupling", pass5, detail5, t0));

    // 6. Convolution oracle vs walk Monte Carlo (normal increments).
    let t0 = Instant::now();
    let delta = assembly.delta.clone();
    let t_hi = delta.t_max();
    let f0 = move |t: f64, x: f64| {
        let tc = t.clamp(0.0, t_hi);
        let d = delta.eval(tc).expect("clamped to the trace window");
        Payoff::standard().value(t, x) - d * (x - Boundary::standard().value(t))
    };
    let conv = convolution_oracle(&boundary, &f0, &normal, 256, &ConvolutionConfig::default())?;
    let mc6 = mc_expectation(
        |rec| f0(rec.tau, rec.terminal),
        256,
        &normal,
        &boundary,
        step_cap(256, 48.0),
        10_000_000,
        master_seed + 500,
    )?;
    let gap6 = (conv.value - mc6.mean).abs();
    let pass6 = gap6 <= 3.0 * mc6.stderr;
    outcomes.push(outcome(
        6,
        "oracle equivalence",
        pass6,
        format!(
            "|recursion - MC| = {:.2e} vs 3 stderr = {:.2e} (recursion {}, MC {})",
            gap6,
            3.0 * mc6.stderr,
            format_sig(conv.value),
            format_sig(mc6.mean)
        ),
        t0,
    ));

    // 7. Near-boundary visit-count shapes.
    let t0 = Instant::now();
    let (pass7, detail7) = criterion_7(&cexp, &boundary, master_seed + 600)?;
    outcomes.push(outcome(7, "diagnostics bounds", pass7, detail7, t0));

    // 8. One-step error diagnostic.
    let t0 = Instant::now();
    let (pass8, detail8) = criterion_8(&boundary, &payoff)?;
    outcomes.push(outcome(8, "one-step error", pass8, detail8, t0));

    // 9. Thread-count determinism of emitted artifacts.
    let t0 = Instant::now();
    let (pass9, detail9) = criterion_9(&boundary, &payoff, &cexp, master_seed + 700, out_dir)?;
    outcomes.push(outcome(9, "determinism", pass9, detail9, t0));

    let report = AcceptanceReport { outcomes };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("acceptance.txt"), report.render())?;
    }
    Ok(report)
}

fn criterion_4_checks(
    assembly: &Assembly,
    study: &RateStudy,
    pde_err: f64,
    elapsed: f64,
) -> (bool, String) {
    let r = &assembly.report;
    let u00 = r.u00;
    // (a) the correction helps wherever the uncorrected residual is signal.
    let mut helps = true;
    for row in &study.rows {
        let uncorr = (row.mc - u00).abs();
        if uncorr > 3.0 * row.mc_stderr && (row.mc - row.corrected).abs() >= uncorr {
            helps = false;
        }
    }
    // (b) sqrt(n)-scaled corrected residuals nonincreasing within 3 stderr.
    let mut monotone = true;
    for pair in study.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let sa = (a.n as f64).sqrt() * a.mc_stderr;
        let sb = (b.n as f64).sqrt() * b.mc_stderr;
        if b.scaled_residual_corrected
            > a.scaled_residual_corrected + 3.0 * sa.hypot(sb)
        {
            monotone = false;
        }
    }
    // (c) the scaled uncorrected residual at the largest n matches the
    // correction magnitude. The combined uncertainty takes the MC noise, the
    // rho noise, and the sqrt(n)-amplified solver error.
    let last = study.rows.last().expect("non-empty study");
    let sqrt_n = (last.n as f64).sqrt();
    let magnitude = (r.skew_term + r.overshoot_term).abs();
    let combined = (sqrt_n * last.mc_stderr).hypot(r.rho_stderr * r.g00.abs())
        + sqrt_n * pde_err;
    let gap_c = (last.scaled_residual_uncorrected - magnitude).abs();
    let matches = gap_c <= 3.0 * combined;
    let elapsed_ok = elapsed < 1800.0;
    let residuals: Vec<String> = study
        .rows
        .iter()
        .map(|row| format!("{:.4}", row.scaled_residual_corrected))
        .collect();
    (
        helps && monotone && matches && elapsed_ok,
        format!(
            "correction helps: {helps}; scaled residuals [{}] nonincreasing: {monotone}; \
             |{:.4} - {:.4}| = {:.1e} vs 3 combined = {:.1e}: {matches}; {:.0}s (< 1800)",
            residuals.join(", "),
            last.scaled_residual_uncorrected,
            magnitude,
            gap_c,
            3.0 * combined,
            elapsed
        ),
    )
}

fn criterion_5(
    assembly: &Assembly,
    boundary: &Boundary,
    cases: &[(&IncrementDistribution, &OvershootConstants, &str)],
    seed: u64,
) -> Result<(bool, String)> {
    let g00 = assembly.report.g00;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (dist, constants, name)) in cases.iter().enumerate() {
        let stats = joint_overshoot_stats(
            1600,
            *dist,
            boundary,
            step_cap(1600, 48.0),
            &assembly.delta,
            1_000_000,
            seed + 10 * i as u64,
        )?;
        let target = constants.rho * g00;
        let se_rd = stats
            .stderr_overshoot_delta
            .hypot(constants.rho_stderr * g00.abs());
        let rd_ok = (stats.mean_overshoot_delta - target).abs() <= 3.0 * se_rd;
        let se_r = stats.stderr_overshoot.hypot(constants.rho_stderr);
        let r_ok = (stats.mean_overshoot - constants.rho).abs() <= 3.0 * se_r;
        let corr_ok = stats.corr_overshoot_tau.abs() < 0.05;
        pass = pass && rd_ok && r_ok && corr_ok;
        parts.push(format!(
            "{name}: E[R Delta] {} vs {} ({}), ER {:.4} vs rho {:.4} ({}), |corr| {:.3} < 0.05 ({})",
            format_sig(stats.mean_overshoot_delta),
            format_sig(target),
            if rd_ok { "ok" } else { "off" },
            stats.mean_overshoot,
            constants.rho,
            if r_ok { "ok" } else { "off" },
            stats.corr_overshoot_tau.abs(),
            if corr_ok { "ok" } else { "off" },
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_7(
    dist: &IncrementDistribution,
    boundary: &Boundary,
    seed: u64,
) -> Result<(bool, String)> {
    let d_values = vec![0.5, 1.0, 2.0, 4.0];
    let mut pass = true;
    let mut worst_ratio = 0.0_f64;
    let mut edge_scaled = Vec::new();
    for (i, &n) in [100_u64, 400, 1600].iter().enumerate() {
        let want_near = n != 1600;
        let req = DiagnosticsRequest {
            d_values: if want_near { d_values.clone() } else { Vec::new() },
            intervals: Vec::new(),
        };
        let stats = visit_counts(
            n,
            dist,
            boundary,
            step_cap(n, 48.0),
            &req,
            200_000,
            seed + i as u64,
        )?;
        if want_near {
            let scaled: Vec<f64> = stats
                .near
                .iter()
                .map(|&(d, mean, _)| mean / (1.0 + d * d))
                .collect();
            let ratio = scaled.iter().cloned().fold(f64::MIN, f64::max)
                / scaled.iter().cloned().fold(f64::MAX, f64::min);
            worst_ratio = worst_ratio.max(ratio);
            if ratio >= 4.0 {
                pass = false;
            }
        }
        edge_scaled.push(stats.edge_weight.0 / (n as f64).ln());
    }
    // "Bounded" across n is checked as a max/min ratio below the same
    // factor-4 slack used for the N_d shape.
    let edge_ratio = edge_scaled.iter().cloned().fold(f64::MIN, f64::max)
        / edge_scaled.iter().cloned().fold(f64::MAX, f64::min);
    if edge_ratio >= 4.0 {
        pass = false;
    }
    Ok((
        pass,
        format!(
            "E N_d/(1+d^2) max/min ratio {:.2} (< 4); edge-sum/log n = [{}] ratio {:.2} (< 4)",
            worst_ratio,
            edge_scaled
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            edge_ratio
        ),
    ))
}

fn criterion_8(boundary: &Boundary, payoff: &Payoff) -> Result<(bool, String)> {
    let ext = AnalyticExtension::new(boundary, payoff)
        .expect("standard problem has a closed-form extension");
    let cexp = IncrementDistribution::CenteredExponential;
    let uniform = IncrementDistribution::UniformSymmetric;
    let probes = [(0.5, -1.0), (1.0, -1.0), (2.0, -2.0)];
    let mut pass = true;
    let mut worst_rel = 0.0_f64;
    for row in e_n_diagnostic(&ext, boundary, &cexp, 10_000, &probes)? {
        // e_n * 6 n sqrt(n) / m3 reproduces u_xxx within 10% exactly when
        // the residual is within 10% of the prediction.
        let rel = (row.residual / row.predicted).abs();
        worst_rel = worst_rel.max(rel);
        if rel > 0.10 {
            pass = false;
        }
    }
    let ns = [100_u64, 1_000, 10_000];
    let es: Vec<f64> = ns
        .iter()
        .map(|&n| {
            e_n_diagnostic(&ext, boundary, &uniform, n, &[(1.0, -1.0)])
                .map(|rows| rows[0].e_n.abs())
        })
        .collect::<Result<_>>()?;
    let slope = (es[2] / es[0]).ln() / ((ns[2] as f64) / (ns[0] as f64)).ln();
    let slope_ok = (slope + 2.0).abs() <= 0.3;
    if !slope_ok {
        pass = false;
    }
    Ok((
        pass,
        format!(
            "worst skew-prediction error {:.1}% (<= 10%); symmetric log-log slope {:.2} (-2 +- 0.3)",
            100.0 * worst_rel,
            slope
        ),
    ))
}

fn criterion_9(
    boundary: &Boundary,
    payoff: &Payoff,
    dist: &IncrementDistribution,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<(bool, String)> {
    let make_artifacts = || -> Result<(String, String)> {
        let est = mc_expectation(
            |rec| payoff.value(rec.tau, rec.terminal),
            100,
            dist,
            boundary,
            step_cap(100, 48.0),
            20_000,
            seed,
        )?;
        let mut csv = CsvReport::new(&["n", "mean", "stderr", "paths", "seed"])
            .with_provenance("master_seed", seed.to_string());
        csv.push_row(vec![
            100.0,
            est.mean,
            est.stderr,
            est.paths as f64,
            est.seed as f64,
        ]);
        let rho = estimate_rho(dist, 20_000, 1_000_000, seed + 1)?;
        Ok((csv.render(), serde_json::to_string_pretty(&rho)?))
    };
    let pool = |k: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool")
    };
    let (csv1, json1) = pool(1).install(make_artifacts)?;
    let (csv4, json4) = pool(4).install(make_artifacts)?;
    let pass = csv1 == csv4 && json1 == json4;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("determinism-simulate.csv"), &csv1)?;
        std::fs::write(dir.join("determinism-rho.json"), &json1)?;
    }
    Ok((
        pass,
        format!(
            "CSV and JSON artifacts byte-identical across 1 vs 4 worker threads: {pass}"
        ),
    ))
}

/// Convenience entry for `validate`: seed and output directory come from the
/// experiment configuration.
pub fn run_from_config(cfg: &ExperimentConfig) -> Result<AcceptanceReport> {
    run_suite(cfg.mc.master_seed, Some(Path::new(&cfg.outputs.directory)))
}
