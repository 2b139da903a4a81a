//! Assembly of the corrected approximation, the one-step error diagnostic,
//! and the discrete convolution oracle.
//!
//! The corrected approximation is
//! `E f(tau_n, W_n(tau_n)) ~= u(0,0) + [m3/6 * w(0,0) + rho * g(0,0)] / sqrt(n)`
//! where `u` solves the Feynman-Kac problem for `f`, `w` is the running cost
//! of `u_xxx`, `g` solves the same problem with boundary data `Delta(t)`,
//! `m3 = EX^3` and `rho` is the ladder overshoot constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuation::OvershootConstants;
use crate::model::{Boundary, DeltaTrace, IncrementDistribution, Payoff};
use crate::pde::{self, closed_form, Field, GridConfig};
use crate::quadrature::ProbabilityRule;
use crate::walk::{self, Increments, McEstimate};

/// Eventual-crossing slack used when validating boundaries for expansion
/// runs: `b(t) + eps * t` must tend to `-infinity`.
pub const CROSSING_EPS: f64 = 0.01;

/// The assembled correction terms; `corrected(n)` is the Theorem-style
/// approximation at scale `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionReport {
    /// `u(0,0)`, the Brownian-limit value.
    pub leading: f64,
    /// `m3/6 * w(0,0)`.
    pub skew_term: f64,
    /// `rho * g(0,0)`.
    pub overshoot_term: f64,
    pub u00: f64,
    pub w00: f64,
    pub g00: f64,
    pub m3: f64,
    pub rho: f64,
    pub rho_stderr: f64,
    /// Estimated `P(tau_0 > t_max)` of the underlying solves.
    pub truncation_prob: f64,
    /// Truncation-bias bound inherited from the value solve.
    pub bias_bound: f64,
}

impl ExpansionReport {
    /// `leading + (skew_term + overshoot_term) / sqrt(n)`.
    pub fn corrected(&self, n: u64) -> f64 {
        self.leading + (self.skew_term + self.overshoot_term) / (n as f64).sqrt()
    }

    /// The uncorrected (Donsker) approximation, independent of `n`.
    pub fn uncorrected(&self) -> f64 {
        self.leading
    }
}

/// An [`ExpansionReport`] together with the solved fields behind it.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub report: ExpansionReport,
    pub u: Field,
    pub u_xxx: Field,
    pub w: Field,
    pub g: Field,
    pub delta: DeltaTrace,
}

/// Run the full PDE pipeline and combine with the distribution moments and
/// ladder constants.
pub fn assemble(
    boundary: &Boundary,
    payoff: &Payoff,
    dist: &IncrementDistribution,
    grid: &GridConfig,
    constants: &OvershootConstants,
) -> Result<Assembly> {
    dist.require_non_lattice()?;
    dist.validate()?;
    boundary.validate()?;
    boundary.ensure_eventual_crossing(CROSSING_EPS)?;
    let u = pde::solve_value(
        boundary,
        &|t| payoff.value(t, boundary.value(t)),
        "payoff",
        grid,
    )?;
    let delta = pde::compute_delta(&u, payoff)?;
    let u_xxx = pde::third_derivative(&u)?;
    let w = pde::solve_running_cost(boundary, &u_xxx, grid)?;
    // The Delta trace only exists on [0, t_max]; the padded march clamps it.
    let t_hi = delta.t_max();
    let g = pde::solve_value(
        boundary,
        &|t| delta.eval(t.clamp(0.0, t_hi)).expect("clamped to the trace window"),
        "delta",
        grid,
    )?;
    let m3 = dist.moments().m3;
    let report = ExpansionReport {
        leading: u.at_origin(),
        skew_term: m3 / 6.0 * w.at_origin(),
        overshoot_term: constants.rho * g.at_origin(),
        u00: u.at_origin(),
        w00: w.at_origin(),
        g00: g.at_origin(),
        m3,
        rho: constants.rho,
        rho_stderr: constants.rho_stderr,
        truncation_prob: u.meta.truncation_prob,
        bias_bound: u.meta.bias_bound,
    };
    Ok(Assembly {
        report,
        u,
        u_xxx,
        w,
        g,
        delta,
    })
}

/// The extension `u-bar` of the value field above the boundary (by `f0`),
/// smooth enough below the boundary for one-step Taylor comparisons.
pub trait SmoothExtension: Sync {
    /// `u-bar(t, x)`: `u` for `x <= b(t)`, `f0(t, x)` above.
    fn value(&self, t: f64, x: f64) -> f64;
    /// `u-bar_xxx(t, x)` below the boundary.
    fn third_derivative(&self, t: f64, x: f64) -> f64;
}

/// Closed-form extension, available when the boundary is affine and the
/// payoff depends on time alone: `u(t,x) = f(t) exp(-c (b(t)-x))` with
/// `c = sqrt(slope^2 + 2 rate) + slope`, and `Delta(t) = -c f(t)`.
///
/// The diagnostic needs this because the one-step error is O(1/(n sqrt n)):
/// at `n = 1e4` the signal is ~1e-8, far below the ~1e-5 accuracy of the
/// discretized field.
pub struct AnalyticExtension {
    boundary: Boundary,
    payoff: Payoff,
    exponent: f64,
}

impl AnalyticExtension {
    pub fn new(boundary: &Boundary, payoff: &Payoff) -> Option<Self> {
        let exponent = closed_form::exponent(boundary, payoff)?;
        Some(AnalyticExtension {
            boundary: boundary.clone(),
            payoff: payoff.clone(),
            exponent,
        })
    }
}

impl SmoothExtension for AnalyticExtension {
    fn value(&self, t: f64, x: f64) -> f64 {
        let b = self.boundary.value(t);
        let f = self.payoff.value(t, b);
        if x <= b {
            f * (-self.exponent * (b - x)).exp()
        } else {
            // f0 = f - Delta(t) (x - b) with Delta = -c f.
            f * (1.0 + self.exponent * (x - b))
        }
    }

    fn third_derivative(&self, t: f64, x: f64) -> f64 {
        self.exponent.powi(3) * self.value(t, x.min(self.boundary.value(t)))
    }
}

/// Extension interpolated from solved fields; usable for coarse diagnostics
/// where the O(1e-5) field error is acceptable.
pub struct FieldExtension<'a> {
    pub u: &'a Field,
    pub u_xxx: &'a Field,
    pub payoff: &'a Payoff,
    pub delta: &'a DeltaTrace,
}

impl SmoothExtension for FieldExtension<'_> {
    fn value(&self, t: f64, x: f64) -> f64 {
        let b = self.u.boundary.value(t);
        if x <= b {
            self.u.eval(t, x).unwrap_or(0.0)
        } else {
            let t_c = t.clamp(self.delta.t_min(), self.delta.t_max());
            let d = self.delta.eval(t_c).unwrap_or(0.0);
            self.payoff.value(t, x) - d * (x - b)
        }
    }

    fn third_derivative(&self, t: f64, x: f64) -> f64 {
        self.u_xxx.eval(t, x).unwrap_or(0.0)
    }
}

/// One probe of the one-step error `e_n(t, x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeResult {
    pub t: f64,
    pub x: f64,
    pub n: u64,
    /// `E u-bar(t + 1/n, x + X/sqrt n) - u-bar(t, x)` by Gauss quadrature.
    pub e_n: f64,
    /// `m3 * u-bar_xxx(t, x) / (6 n sqrt n)`.
    pub predicted: f64,
    pub residual: f64,
    /// `1/n^2` envelope.
    pub envelope_bulk: f64,
    /// `(1/n) / (1 + n (b(t) - x)^2)` near-boundary envelope.
    pub envelope_near: f64,
}

/// Quadrature order used for the one-step error; the rules are exact far
/// beyond the polynomial degree that matters, so the O(1/(n sqrt n)) signal
/// is not contaminated.
pub const E_N_QUADRATURE_ORDER: usize = 64;

/// Compute the one-step error at interior probe points.
pub fn e_n_diagnostic(
    extension: &dyn SmoothExtension,
    boundary: &Boundary,
    dist: &IncrementDistribution,
    n: u64,
    probes: &[(f64, f64)],
) -> Result<Vec<ProbeResult>> {
    if n == 0 {
        return Err(Error::schema("expansion.n", "require n >= 1"));
    }
    let rule = ProbabilityRule::for_distribution(dist, E_N_QUADRATURE_ORDER)?;
    let m3 = dist.moments().m3;
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let mut out = Vec::with_capacity(probes.len());
    for &(t, x) in probes {
        let gap = boundary.value(t) - x;
        if gap <= 0.0 {
            return Err(Error::schema(
                "expansion.probes",
                format!("probe (t={t}, x={x}) is on or above the boundary; e_n is 0 there"),
            ));
        }
        if nf * gap * gap < 1.0 {
            return Err(Error::schema(
                "expansion.probes",
                format!(
                    "probe (t={t}, x={x}) too close to the boundary: n (b-x)^2 = {:.3} < 1",
                    nf * gap * gap
                ),
            ));
        }
        let base = extension.value(t, x);
        let e_n = rule.expectation(|xi| extension.value(t + 1.0 / nf, x + xi / sqrt_n)) - base;
        let predicted = m3 * extension.third_derivative(t, x) / (6.0 * nf * sqrt_n);
        out.push(ProbeResult {
            t,
            x,
            n,
            e_n,
            predicted,
            residual: e_n - predicted,
            envelope_bulk: 1.0 / (nf * nf),
            envelope_near: (1.0 / nf) / (1.0 + nf * gap * gap),
        });
    }
    Ok(out)
}

/// Discretization of the convolution recursion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvolutionConfig {
    /// Time horizon of the backward recursion (survival past it is assigned
    /// the boundary data, mirroring the PDE's constant extension).
    pub horizon: f64,
    /// Depth of the `z = x - b(t)` grid below the boundary.
    pub z_depth: f64,
    /// Space resolution: node spacing is about `sigma / points_per_sigma`
    /// with `sigma = 1/sqrt(n)` the per-step standard deviation.
    pub points_per_sigma: f64,
    /// Gaussian coverage of the per-step integral, in units of `sigma`.
    pub tail_sigmas: f64,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        ConvolutionConfig {
            horizon: 48.0,
            z_depth: 8.0,
            points_per_sigma: 8.0,
            tail_sigmas: 8.0,
        }
    }
}

/// Result of the convolution recursion, with its resolution provenance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvolutionValue {
    /// `u_n(0, 0)`.
    pub value: f64,
    pub h: f64,
    pub nodes: usize,
    pub steps: u64,
    /// `|1 - sum of kernel weights|`: tail truncation plus cell-quadrature
    /// defect of the per-step transition kernel.
    pub kernel_mass_defect: f64,
}

/// Lagrange basis weights at `u` for nodes at the given offsets.
fn lagrange_weights(nodes: [f64; 4], u: f64) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for j in 0..4 {
            if j != i {
                p *= (u - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        *wi = p;
    }
    w
}

/// Exact-in-distribution dynamic-programming oracle for
/// `E f0(tau_n, W_n(tau_n))` with standard-normal increments:
/// `u_n(t, x) = f0(t, x)` for `x >= b(t)`, else `E u_n(t + 1/n, x + X/sqrt n)`.
///
/// The recursion runs on a uniform grid in `z = x - b(t)`; each step is a
/// correlation against a Gaussian kernel built from per-cell integrals of
/// the piecewise-cubic interpolant. Cells touching `z = 0` use one-sided
/// stencils so the kink of `u_n` at the boundary is never interpolated
/// across.
pub fn convolution_oracle(
    boundary: &Boundary,
    f0: &(dyn Fn(f64, f64) -> f64 + Sync),
    dist: &IncrementDistribution,
    n: u64,
    cfg: &ConvolutionConfig,
) -> Result<ConvolutionValue> {
    if *dist != IncrementDistribution::StandardNormal {
        return Err(Error::Refusal(
            "the convolution oracle supports standard-normal increments only".into(),
        ));
    }
    if n == 0 || n > 512 {
        return Err(Error::schema("oracle.n", "require 1 <= n <= 512"));
    }
    boundary.validate()?;
    let nf = n as f64;
    let sigma = 1.0 / nf.sqrt();
    let b0 = boundary.b0();
    // Snap the spacing so that z = -b0 and z = 0 are both grid nodes.
    let cells_to_b0 = (cfg.points_per_sigma * b0 / sigma).ceil() as usize;
    let h = b0 / cells_to_b0 as f64;
    if h > sigma / 2.0 {
        return Err(Error::Refusal(format!(
            "convolution grid under-resolved: h = {h:.3e} > sigma/2 = {:.3e}",
            sigma / 2.0
        )));
    }
    let j0 = (cfg.z_depth / h).ceil() as usize; // index of z = 0
    let reach = cfg.tail_sigmas * sigma;
    let above = (reach / h).ceil() as usize + 8;
    let nodes = j0 + 1 + above;
    let z = |j: usize| (j as f64 - j0 as f64) * h;
    let steps = (nf * cfg.horizon).ceil() as u64;

    let normal_pdf = |v: f64| (-0.5 * v * v / (sigma * sigma)).exp()
        / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let (gl_x, gl_w) = crate::quadrature::gauss_legendre(4);
    // GL nodes mapped to the unit cell [0, 1].
    let gl: Vec<(f64, f64)> = gl_x
        .iter()
        .zip(&gl_w)
        .map(|(&xi, &wi)| (0.5 * (xi + 1.0), 0.5 * wi))
        .collect();

    let centered: [f64; 4] = [-1.0, 0.0, 1.0, 2.0];
    let below: [f64; 4] = [-2.0, -1.0, 0.0, 1.0]; // cell just below the kink
    let above_k: [f64; 4] = [0.0, 1.0, 2.0, 3.0]; // cell starting at the kink

    // Backward recursion state: u at nodes strictly below the boundary.
    let mut u: Vec<f64> = (0..j0)
        .map(|i| {
            let t_k = steps as f64 / nf;
            f0(t_k, boundary.value(t_k) + z(i))
        })
        .collect();
    let mut g_row = vec![0.0_f64; nodes];
    let mut mass_defect = 0.0;

    for k in (0..steps).rev() {
        let t = k as f64 / nf;
        let t2 = (k + 1) as f64 / nf;
        let shift = boundary.value(t) - boundary.value(t2);
        // Next-step function: solved values below the boundary, f0 at and
        // above it.
        g_row[..j0].copy_from_slice(&u);
        let b2 = boundary.value(t2);
        for (j, gj) in g_row.iter_mut().enumerate().skip(j0) {
            *gj = f0(t2, b2 + z(j));
        }

        // Cell offsets q = c - i covered by the Gaussian: the cell spans
        // [q h - shift, q h - shift + h] relative to the target point.
        let q_lo = ((-reach + shift) / h).floor() as i64 - 1;
        let q_hi = ((reach + shift) / h).ceil() as i64;
        let n_q = (q_hi - q_lo + 1) as usize;
        // Per-cell basis integrals for the three stencil variants.
        let mut b_cent = vec![[0.0_f64; 4]; n_q];
        let mut b_below = vec![[0.0_f64; 4]; n_q];
        let mut b_above = vec![[0.0_f64; 4]; n_q];
        for (qi, q) in (q_lo..=q_hi).enumerate() {
            let left = q as f64 * h - shift;
            for &(ug, wg) in &gl {
                let weight = wg * h * normal_pdf(left + ug * h);
                let lc = lagrange_weights(centered, ug);
                let lb = lagrange_weights(below, ug);
                let la = lagrange_weights(above_k, ug);
                for m in 0..4 {
                    b_cent[qi][m] += weight * lc[m];
                    b_below[qi][m] += weight * lb[m];
                    b_above[qi][m] += weight * la[m];
                }
            }
        }
        // Combined correlation kernel for the centered stencil: tap r maps
        // G[i + r] into u[i].
        let r_lo = q_lo - 1;
        let r_hi = q_hi + 2;
        let mut kernel = vec![0.0_f64; (r_hi - r_lo + 1) as usize];
        for (qi, bq) in b_cent.iter().enumerate() {
            let q = q_lo + qi as i64;
            for (m, &bm) in bq.iter().enumerate() {
                kernel[(q - 1 + m as i64 - r_lo) as usize] += bm;
            }
        }
        if k == 0 {
            let total: f64 = kernel.iter().sum();
            mass_defect = (1.0 - total).abs();
        }

        let grab = |idx: i64| -> f64 {
            let clamped = idx.clamp(0, nodes as i64 - 1) as usize;
            g_row[clamped]
        };
        for (i, ui) in u.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (ri, &kr) in kernel.iter().enumerate() {
                acc += kr * grab(i as i64 + r_lo + ri as i64);
            }
            // Swap in one-sided stencils for the two cells whose centered
            // stencil would straddle the kink at z = 0.
            for (c, basis, s_off) in [
                (j0 as i64 - 1, &b_below, -2_i64),
                (j0 as i64, &b_above, 0_i64),
            ] {
                let q = c - i as i64;
                if q < q_lo || q > q_hi {
                    continue;
                }
                let bq_std = b_cent[(q - q_lo) as usize];
                let bq_one = basis[(q - q_lo) as usize];
                for m in 0..4 {
                    acc += bq_one[m] * grab(c + s_off + m as i64)
                        - bq_std[m] * grab(c - 1 + m as i64);
                }
            }
            *ui = acc;
        }
    }

    let i_start = j0 - cells_to_b0; // z = -b0, i.e. (t, x) = (0, 0)
    Ok(ConvolutionValue {
        value: u[i_start],
        h,
        nodes,
        steps,
        kernel_mass_defect: mass_defect,
    })
}

/// One row of a rate study.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u64,
    pub mc: f64,
    pub mc_stderr: f64,
    pub uncorrected: f64,
    pub corrected: f64,
    /// `sqrt(n) |mc - corrected|`.
    pub scaled_residual_corrected: f64,
    /// `sqrt(n) |mc - uncorrected|`.
    pub scaled_residual_uncorrected: f64,
}

/// Trend verdict for the corrected residual column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendVerdict {
    /// Residuals are MC signal and their Kendall tau against `n` is <= 0.
    Decreasing,
    /// Residuals are within 3 MC stderr of zero: nothing to rank.
    InconclusivePass,
    /// Residuals are signal and increase with `n`.
    Increasing,
}

/// Full-pipeline comparison over a list of scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    pub kendall_tau: f64,
    pub verdict: TrendVerdict,
}

/// Kendall rank correlation of `ys` against their index order.
pub fn kendall_tau(ys: &[f64]) -> f64 {
    let k = ys.len();
    if k < 2 {
        return 0.0;
    }
    let mut s = 0i64;
    for i in 0..k {
        for j in (i + 1)..k {
            s += match ys[j].partial_cmp(&ys[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s as f64 / (k * (k - 1) / 2) as f64
}

/// Run the Monte Carlo / expansion comparison at each `n`.
pub fn rate_study<I: Increments + ?Sized>(
    assembly: &Assembly,
    payoff: &Payoff,
    increments: &I,
    n_list: &[u64],
    paths: u64,
    master_seed: u64,
) -> Result<RateStudy> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::schema(
            "rates.n_list",
            "require at least 3 strictly increasing scales",
        ));
    }
    let boundary = &assembly.u.boundary;
    let cap_horizon = assembly.u.grid.t_max * (1.0 + assembly.u.grid.tail_factor);
    let mut rows = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let mc = walk::mc_expectation(
            |rec| payoff.value(rec.tau, rec.terminal),
            n,
            increments,
            boundary,
            walk::step_cap(n, cap_horizon),
            paths,
            master_seed.wrapping_add(idx as u64),
        )?;
        let corrected = assembly.report.corrected(n);
        let uncorrected = assembly.report.uncorrected();
        let sqrt_n = (n as f64).sqrt();
        rows.push(RateRow {
            n,
            mc: mc.mean,
            mc_stderr: mc.stderr,
            uncorrected,
            corrected,
            scaled_residual_corrected: sqrt_n * (mc.mean - corrected).abs(),
            scaled_residual_uncorrected: sqrt_n * (mc.mean - uncorrected).abs(),
        });
    }
    // Residuals count as signal only beyond 3 MC stderr plus a small floor
    // for solver round-off (relevant when MC is exact, e.g. constant f).
    let signal = rows
        .iter()
        .any(|r| (r.mc - r.corrected).abs() > 3.0 * r.mc_stderr + 1e-7 * r.mc.abs().max(1.0));
    let tau = kendall_tau(
        &rows
            .iter()
            .map(|r| r.scaled_residual_corrected)
            .collect::<Vec<_>>(),
    );
    let verdict = if !signal {
        TrendVerdict::InconclusivePass
    } else if tau <= 0.0 {
        TrendVerdict::Decreasing
    } else {
        TrendVerdict::Increasing
    };
    Ok(RateStudy {
        rows,
        kendall_tau: tau,
        verdict,
    })
}

/// `McEstimate` of `E f(tau_n, W_n(tau_n))` under the assembly's boundary.
pub fn mc_payoff_expectation<I: Increments + ?Sized>(
    assembly: &Assembly,
    payoff: &Payoff,
    increments: &I,
    n: u64,
    paths: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    let cap_horizon = assembly.u.grid.t_max * (1.0 + assembly.u.grid.tail_factor);
    walk::mc_expectation(
        |rec| payoff.value(rec.tau, rec.terminal),
        n,
        increments,
        &assembly.u.boundary,
        walk::step_cap(n, cap_horizon),
        paths,
        master_seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn test_grid() -> GridConfig {
        let mut grid = GridConfig::new(8.0, 12.0, 257, 513);
        grid.truncation_tol = 0.05;
        grid
    }

    fn stub_constants(rho: f64) -> OvershootConstants {
        OvershootConstants {
            rho,
            rho_stderr: 0.0,
            ey: 1.0,
            ey2: 2.0 * rho,
            ey3: 0.0,
            epochs_used: 0,
            cap: 0,
            capped_fraction: 0.0,
        }
    }

    #[test]
    fn constant_payoff_assembles_to_constant() {
        let assembly = assemble(
            &Boundary::standard(),
            &Payoff::constant(2.0),
            &IncrementDistribution::CenteredExponential,
            &test_grid(),
            &stub_constants(1.0),
        )
        .unwrap();
        let r = &assembly.report;
        assert_relative_eq!(r.leading, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.skew_term, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.overshoot_term, 0.0, epsilon = 1e-8);
        assert_relative_eq!(r.corrected(100), 2.0, epsilon = 1e-7);
    }

    #[test]
    fn lattice_distribution_is_refused() {
        let err = assemble(
            &Boundary::standard(),
            &Payoff::standard(),
            &IncrementDistribution::TwoPointLattice,
            &test_grid(),
            &stub_constants(0.5),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn standard_problem_terms_match_closed_forms() {
        // u(0,0) = exp(1/2 - sqrt(5)/2); w(0,0) = B b0 u00 with
        // B = c^3/(1/2 + c); g(0,0) = -c u00, all with c = sqrt(5)/2 - 1/2.
        let assembly = assemble(
            &Boundary::standard(),
            &Payoff::standard(),
            &IncrementDistribution::CenteredExponential,
            &test_grid(),
            &stub_constants(1.0),
        )
        .unwrap();
        let r = &assembly.report;
        let c = 1.25_f64.sqrt() - 0.5;
        let u00 = (0.5 - 1.25_f64.sqrt()).exp();
        let w00 = c.powi(3) / (0.5 + c) * u00;
        let g00 = -c * u00;
        assert_relative_eq!(r.u00, u00, max_relative = 2e-3);
        assert_relative_eq!(r.w00, w00, max_relative = 2e-2);
        assert_relative_eq!(r.g00, g00, max_relative = 5e-3);
        // m3 = 2 for the centered exponential: skew term is w00 / 3.
        assert_relative_eq!(r.skew_term, r.w00 / 3.0);
        assert_relative_eq!(r.overshoot_term, r.g00);
    }

    #[test]
    fn corrected_values_scale_exactly_as_inverse_sqrt_n() {
        let assembly = assemble(
            &Boundary::standard(),
            &Payoff::standard(),
            &IncrementDistribution::CenteredExponential,
            &test_grid(),
            &stub_constants(1.0),
        )
        .unwrap();
        let r = &assembly.report;
        let total = r.skew_term + r.overshoot_term;
        assert_relative_eq!(
            r.corrected(100) - r.corrected(400),
            total * (1.0 / 10.0 - 1.0 / 20.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn e_n_vanishes_for_constant_payoffs() {
        let boundary = Boundary::standard();
        let payoff = Payoff::constant(3.0);
        let ext = AnalyticExtension::new(&boundary, &payoff).unwrap();
        let probes = [(0.5, -1.0), (1.0, 0.0)];
        for dist in [
            IncrementDistribution::StandardNormal,
            IncrementDistribution::CenteredExponential,
            IncrementDistribution::UniformSymmetric,
        ] {
            let rows = e_n_diagnostic(&ext, &boundary, &dist, 100, &probes).unwrap();
            for row in rows {
                assert_abs_diff_eq!(row.e_n, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn e_n_probe_preconditions_are_enforced() {
        let boundary = Boundary::standard();
        let payoff = Payoff::standard();
        let ext = AnalyticExtension::new(&boundary, &payoff).unwrap();
        let dist = IncrementDistribution::StandardNormal;
        // Above the boundary.
        let err = e_n_diagnostic(&ext, &boundary, &dist, 100, &[(0.0, 1.5)]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        // Too close to the boundary: n (b-x)^2 < 1.
        let err = e_n_diagnostic(&ext, &boundary, &dist, 100, &[(0.0, 0.95)]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn e_n_matches_skew_prediction_for_asymmetric_increments() {
        let boundary = Boundary::standard();
        let payoff = Payoff::standard();
        let ext = AnalyticExtension::new(&boundary, &payoff).unwrap();
        let dist = IncrementDistribution::CenteredExponential;
        let rows = e_n_diagnostic(&ext, &boundary, &dist, 10_000, &[(1.0, -1.0)]).unwrap();
        let row = &rows[0];
        assert!(
            (row.e_n - row.predicted).abs() < 0.1 * row.predicted.abs(),
            "e_n {} vs predicted {}",
            row.e_n,
            row.predicted
        );
    }

    #[test]
    fn e_n_decays_like_n_squared_for_symmetric_increments() {
        let boundary = Boundary::standard();
        let payoff = Payoff::standard();
        let ext = AnalyticExtension::new(&boundary, &payoff).unwrap();
        let dist = IncrementDistribution::UniformSymmetric;
        let ns = [100_u64, 1000, 10_000];
        let es: Vec<f64> = ns
            .iter()
            .map(|&n| {
                e_n_diagnostic(&ext, &boundary, &dist, n, &[(1.0, -1.0)]).unwrap()[0]
                    .e_n
                    .abs()
            })
            .collect();
        let slope = (es[2] / es[0]).ln() / ((ns[2] as f64) / (ns[0] as f64)).ln();
        assert!(
            (slope + 2.0).abs() < 0.3,
            "log-log slope {slope} (values {es:?})"
        );
    }

    #[test]
    fn convolution_oracle_preserves_constants() {
        let f0 = |_: f64, _: f64| 1.5;
        let v = convolution_oracle(
            &Boundary::standard(),
            &f0,
            &IncrementDistribution::StandardNormal,
            64,
            &ConvolutionConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(v.value, 1.5, epsilon = 1e-8);
        assert!(v.kernel_mass_defect < 1e-9);
    }

    #[test]
    fn convolution_oracle_refuses_other_distributions() {
        let f0 = |_: f64, _: f64| 1.0;
        let err = convolution_oracle(
            &Boundary::standard(),
            &f0,
            &IncrementDistribution::CenteredExponential,
            64,
            &ConvolutionConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let err = convolution_oracle(
            &Boundary::standard(),
            &f0,
            &IncrementDistribution::StandardNormal,
            1024,
            &ConvolutionConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn convolution_oracle_agrees_with_walk_monte_carlo() {
        let boundary = Boundary::standard();
        let c = 1.25_f64.sqrt() - 0.5;
        let f0 = move |t: f64, x: f64| {
            let b = 1.0 - t / 2.0;
            (-t / 2.0).exp() * (1.0 + c * (x - b))
        };
        let n = 64;
        let oracle = convolution_oracle(
            &boundary,
            &f0,
            &IncrementDistribution::StandardNormal,
            n,
            &ConvolutionConfig::default(),
        )
        .unwrap();
        let mc = walk::mc_expectation(
            |rec| f0(rec.tau, rec.terminal),
            n,
            &IncrementDistribution::StandardNormal,
            &boundary,
            walk::step_cap(n, 48.0),
            1_000_000,
            41,
        )
        .unwrap();
        assert!(
            (oracle.value - mc.mean).abs() < 3.0 * mc.stderr,
            "oracle {} vs mc {} (stderr {})",
            oracle.value,
            mc.mean,
            mc.stderr
        );
    }

    #[test]
    fn kendall_tau_ranks_orderings() {
        assert_relative_eq!(kendall_tau(&[3.0, 2.0, 1.0]), -1.0);
        assert_relative_eq!(kendall_tau(&[1.0, 2.0, 3.0]), 1.0);
        assert_relative_eq!(kendall_tau(&[1.0, 3.0, 2.0]), 1.0 / 3.0);
    }

    #[test]
    fn rate_study_is_quiet_for_constant_payoffs() {
        let payoff = Payoff::constant(1.0);
        let assembly = assemble(
            &Boundary::standard(),
            &payoff,
            &IncrementDistribution::UniformSymmetric,
            &test_grid(),
            &stub_constants(0.5),
        )
        .unwrap();
        let study = rate_study(
            &assembly,
            &payoff,
            &IncrementDistribution::UniformSymmetric,
            &[16, 64, 256],
            20_000,
            51,
        )
        .unwrap();
        for row in &study.rows {
            // f is constant on every path, so MC is exact and both
            // approximations agree with it to solver accuracy.
            assert_eq!(row.mc_stderr, 0.0);
            assert_abs_diff_eq!(row.mc, 1.0);
            assert!(row.scaled_residual_corrected < 1e-6);
        }
        assert_eq!(study.verdict, TrendVerdict::InconclusivePass);
    }

    #[test]
    fn rate_study_requires_increasing_scales() {
        let payoff = Payoff::constant(1.0);
        let assembly = assemble(
            &Boundary::standard(),
            &payoff,
            &IncrementDistribution::UniformSymmetric,
            &test_grid(),
            &stub_constants(0.5),
        )
        .unwrap();
        let err = rate_study(
            &assembly,
            &payoff,
            &IncrementDistribution::UniformSymmetric,
            &[64, 16, 256],
            1000,
            0,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn assembled_overshoot_term_uses_the_supplied_rho() {
        // Same fields, two rho values: the overshoot term scales linearly.
        let grid = test_grid();
        let a = assemble(
            &Boundary::standard(),
            &Payoff::standard(),
            &IncrementDistribution::StandardNormal,
            &grid,
            &stub_constants(0.5),
        )
        .unwrap();
        let b = assemble(
            &Boundary::standard(),
            &Payoff::standard(),
            &IncrementDistribution::StandardNormal,
            &grid,
            &stub_constants(1.0),
        )
        .unwrap();
        assert_relative_eq!(2.0 * a.report.overshoot_term, b.report.overshoot_term);
        // m3 = 0 for the normal: no skew term.
        assert_eq!(a.report.skew_term, 0.0);
    }
}
