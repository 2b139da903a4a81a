//! Random-walk crossing simulation and the Brownian-limit oracle.
//!
//! A walk `S_k` with zero-mean unit-variance increments stops at
//! `tau_n = inf{k >= 0 : S_k >= b_k} / n` with levels `b_k = sqrt(n) b(k/n)`.
//! This module simulates exact discrete first passage at scale `n`, estimates
//! expectations of crossing functionals by Monte Carlo, simulates the
//! Brownian limit with a bridge-corrected Euler scheme, and collects the
//! near-boundary visit diagnostics behind the expansion's error bounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Boundary, DeltaTrace, IncrementDistribution};
use crate::pde::Field;
use crate::rng::path_rng;
use crate::stats::{run_batched, Accumulator, Moments, Moments2};

/// Source of walk increments. The distribution catalogue implements this;
/// deterministic steps are available for hand-checkable tests and stubs.
pub trait Increments: Sync {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

impl Increments for IncrementDistribution {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample(rng)
    }
}

/// Degenerate increments `X = step` with probability one. A test stub: it is
/// neither zero-mean nor non-lattice, so it never enters expansion runs.
#[derive(Debug, Clone, Copy)]
pub struct ConstantStep(pub f64);

impl Increments for ConstantStep {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
        self.0
    }
}

/// Default step-cap multiplier: a path may take at most
/// `ceil(CAP_FACTOR * n * t_max)` steps before aborting.
pub const CAP_FACTOR: f64 = 50.0;

/// Step cap for scale `n` and nominal horizon `t_max`.
pub fn step_cap(n: u64, t_max: f64) -> u64 {
    (CAP_FACTOR * n as f64 * t_max).ceil() as u64
}

/// Optional per-path boundary-visit counters.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsRequest {
    /// Distances `d`: count pre-crossing steps with `S_k > b_k - d`.
    pub d_values: Vec<f64>,
    /// `(alpha, lo, hi)`: count steps `k <= alpha * stop_index` with
    /// `b_k - S_k` in `[lo, hi)`.
    pub intervals: Vec<(f64, f64, f64)>,
}

/// Counters produced when a [`DiagnosticsRequest`] is supplied.
#[derive(Debug, Clone)]
pub struct PathDiagnostics {
    /// `N_d` aligned with `d_values`.
    pub near_counts: Vec<u64>,
    /// `M_B(alpha)` aligned with `intervals`.
    pub interval_counts: Vec<u64>,
    /// `sum_{k < stop} 1 / (1 + (b_k - S_k)^2)`.
    pub edge_weight_sum: f64,
}

/// Outcome of one simulated crossing.
#[derive(Debug, Clone)]
pub struct CrossingRecord {
    /// `n tau_n`, the stopping step.
    pub stop_index: u64,
    /// `tau_n = stop_index / n`.
    pub tau: f64,
    /// `W_n(tau_n) = S_stop / sqrt(n)`.
    pub terminal: f64,
    /// `R_n = S_stop - sqrt(n) b(tau_n) >= 0`.
    pub overshoot: f64,
    pub diagnostics: Option<PathDiagnostics>,
}

/// A Monte Carlo mean with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_moments(m: &Moments, seed: u64) -> Self {
        McEstimate {
            mean: m.mean,
            stderr: m.stderr(),
            paths: m.count,
            seed,
        }
    }
}

/// Exact discrete first passage of the walk over the scaled levels.
///
/// Although the scaled walk `W_n` is a piecewise-linear interpolant, its
/// crossing time reduces exactly to the discrete rule `S_k >= b_k`: between
/// steps the interpolant is a chord below two sub-boundary endpoints only
/// when both endpoints are sub-boundary, so no interpolated crossing can
/// occur first. The loop therefore checks grid points only.
pub fn simulate_crossing<I: Increments + ?Sized>(
    n: u64,
    increments: &I,
    boundary: &Boundary,
    cap: u64,
    master_seed: u64,
    path: u64,
    request: Option<&DiagnosticsRequest>,
) -> Result<CrossingRecord> {
    let mut rng = path_rng(master_seed, path);
    simulate_crossing_with(n, increments, boundary, cap, &mut rng, path, request)
}

fn simulate_crossing_with<I: Increments + ?Sized>(
    n: u64,
    increments: &I,
    boundary: &Boundary,
    cap: u64,
    rng: &mut ChaCha8Rng,
    path: u64,
    request: Option<&DiagnosticsRequest>,
) -> Result<CrossingRecord> {
    let sqrt_n = (n as f64).sqrt();
    let mut s = 0.0_f64;
    let mut k = 0_u64;
    let mut near: Vec<u64> = Vec::new();
    let mut members: Vec<Vec<u64>> = Vec::new();
    let mut edge = 0.0_f64;
    if let Some(req) = request {
        near = vec![0; req.d_values.len()];
        members = vec![Vec::new(); req.intervals.len()];
    }
    loop {
        let bk = sqrt_n * boundary.value(k as f64 / n as f64);
        if s >= bk {
            let diagnostics = request.map(|req| {
                let interval_counts = req
                    .intervals
                    .iter()
                    .zip(&members)
                    .map(|(&(alpha, _, _), ks)| {
                        let cutoff = (alpha * k as f64).floor() as u64;
                        ks.iter().filter(|&&kk| kk <= cutoff).count() as u64
                    })
                    .collect();
                PathDiagnostics {
                    near_counts: near.clone(),
                    interval_counts,
                    edge_weight_sum: edge,
                }
            });
            return Ok(CrossingRecord {
                stop_index: k,
                tau: k as f64 / n as f64,
                terminal: s / sqrt_n,
                overshoot: s - bk,
                diagnostics,
            });
        }
        if let Some(req) = request {
            let gap = bk - s;
            for (c, &d) in near.iter_mut().zip(&req.d_values) {
                if gap < d {
                    *c += 1;
                }
            }
            for (ks, &(_, lo, hi)) in members.iter_mut().zip(&req.intervals) {
                if gap >= lo && gap < hi {
                    ks.push(k);
                }
            }
            edge += 1.0 / (1.0 + gap * gap);
        }
        if k >= cap {
            return Err(Error::StepCapExceeded { path, cap });
        }
        s += increments.draw(rng);
        k += 1;
    }
}

/// Monte Carlo mean of a crossing functional over independent per-path
/// substreams. Bit-identical for any worker count; any path hitting the step
/// cap aborts the whole estimate rather than biasing it.
pub fn mc_expectation<I, F>(
    functional: F,
    n: u64,
    increments: &I,
    boundary: &Boundary,
    cap: u64,
    paths: u64,
    master_seed: u64,
) -> Result<McEstimate>
where
    I: Increments + ?Sized,
    F: Fn(&CrossingRecord) -> f64 + Sync,
{
    let m: Moments = run_batched(paths, master_seed, |path, rng, acc: &mut Moments| {
        let rec = simulate_crossing_with(n, increments, boundary, cap, rng, path, None)?;
        acc.push(functional(&rec));
        Ok(())
    })?;
    Ok(McEstimate::from_moments(&m, master_seed))
}

/// What the Brownian oracle estimates.
pub enum BrownianFunctional<'a> {
    /// `E f(tau_0, W(tau_0))`; on paths truncated at the horizon the data is
    /// extended constantly, i.e. evaluated at `(t_max, b(t_max))`.
    Terminal(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    /// `E integral_0^{tau_0 ^ t_max} q(t, W_t) dt` with `q` interpolated
    /// from a solved field (clamped to the field's domain).
    RunningIntegral(&'a Field),
}

/// Discretization and budget for [`brownian_oracle`].
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub dt: f64,
    pub t_max: f64,
    pub paths: u64,
    pub master_seed: u64,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1e-3) {
            return Err(Error::schema("oracle.dt", "require 0 < dt <= 1e-3"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::schema("oracle.t_max", "require t_max > 0"));
        }
        if self.paths < 2 {
            return Err(Error::schema("oracle.paths", "require paths >= 2"));
        }
        Ok(())
    }
}

fn field_value_clamped(field: &Field, t: f64, x: f64) -> f64 {
    let tc = t.clamp(0.0, field.grid.t_max);
    let y = (field.boundary.value(tc) - x).clamp(0.0, field.grid.y_max);
    field.eval_ty(tc, y).unwrap_or(0.0)
}

/// Euler-discretized Brownian first passage with a Brownian-bridge crossing
/// check between grid points, killing the O(sqrt(dt)) passage bias.
pub fn brownian_oracle(
    functional: &BrownianFunctional<'_>,
    boundary: &Boundary,
    cfg: &OracleConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let per_path = |_: u64, rng: &mut ChaCha8Rng, acc: &mut Moments| {
        let mut t = 0.0_f64;
        let mut w = 0.0_f64;
        let mut b1 = boundary.value(0.0);
        let mut integral = 0.0_f64;
        let value = loop {
            if t >= cfg.t_max - 1e-12 {
                break match functional {
                    BrownianFunctional::Terminal(f) => f(cfg.t_max, boundary.value(cfg.t_max)),
                    BrownianFunctional::RunningIntegral(_) => integral,
                };
            }
            let z: f64 = rng.sample(StandardNormal);
            let t2 = (t + dt).min(cfg.t_max);
            let h = t2 - t;
            let w2 = w + sqrt_dt * z;
            let b2 = boundary.value(t2);
            let a1 = b1 - w;
            let a2 = b2 - w2;
            // Crossing time within the step: either the endpoint is over the
            // boundary (chord intersection), or the bridge crossed inside the
            // step with probability exp(-2 a1 a2 / h).
            let crossing = if a2 <= 0.0 {
                Some(t + h * a1 / (a1 - a2))
            } else if rng.random::<f64>() < (-2.0 * a1 * a2 / h).exp() {
                Some(t + 0.5 * h)
            } else {
                None
            };
            if let Some(tc) = crossing {
                let bc = boundary.value(tc);
                break match functional {
                    BrownianFunctional::Terminal(f) => f(tc, bc),
                    BrownianFunctional::RunningIntegral(q) => {
                        integral
                            + 0.5
                                * (field_value_clamped(q, t, w) + field_value_clamped(q, tc, bc))
                                * (tc - t)
                    }
                };
            }
            if let BrownianFunctional::RunningIntegral(q) = functional {
                integral +=
                    0.5 * (field_value_clamped(q, t, w) + field_value_clamped(q, t2, w2)) * h;
            }
            t = t2;
            w = w2;
            b1 = b2;
        };
        acc.push(value);
        Ok(())
    };
    let m: Moments = run_batched(cfg.paths, cfg.master_seed, per_path)?;
    Ok(McEstimate::from_moments(&m, cfg.master_seed))
}

/// Monte Carlo means of the near-boundary visit counts.
#[derive(Debug, Clone)]
pub struct VisitStats {
    /// `(d, mean N_d, stderr)` aligned with the request.
    pub near: Vec<(f64, f64, f64)>,
    /// `(mean M_B(alpha), stderr)` aligned with the request intervals.
    pub intervals: Vec<(f64, f64)>,
    /// Mean and stderr of `sum_k 1/(1 + (b_k - S_k)^2)`.
    pub edge_weight: (f64, f64),
    pub paths: u64,
}

#[derive(Default)]
struct VisitAcc {
    near: Vec<Moments>,
    intervals: Vec<Moments>,
    edge: Moments,
}

impl Accumulator for VisitAcc {
    fn merge(&mut self, other: &Self) {
        self.near.merge(&other.near);
        self.intervals.merge(&other.intervals);
        self.edge.merge(&other.edge);
    }
}

/// Estimate `E N_d` and `E M_B(alpha)` over `paths` crossings.
pub fn visit_counts<I: Increments + ?Sized>(
    n: u64,
    increments: &I,
    boundary: &Boundary,
    cap: u64,
    request: &DiagnosticsRequest,
    paths: u64,
    master_seed: u64,
) -> Result<VisitStats> {
    let acc: VisitAcc = run_batched(paths, master_seed, |path, rng, acc: &mut VisitAcc| {
        if acc.near.is_empty() {
            acc.near = vec![Moments::default(); request.d_values.len()];
            acc.intervals = vec![Moments::default(); request.intervals.len()];
        }
        let rec =
            simulate_crossing_with(n, increments, boundary, cap, rng, path, Some(request))?;
        let d = rec.diagnostics.expect("diagnostics were requested");
        for (m, &c) in acc.near.iter_mut().zip(&d.near_counts) {
            m.push(c as f64);
        }
        for (m, &c) in acc.intervals.iter_mut().zip(&d.interval_counts) {
            m.push(c as f64);
        }
        acc.edge.push(d.edge_weight_sum);
        Ok(())
    })?;
    Ok(VisitStats {
        near: request
            .d_values
            .iter()
            .zip(&acc.near)
            .map(|(&d, m)| (d, m.mean, m.stderr()))
            .collect(),
        intervals: acc.intervals.iter().map(|m| (m.mean, m.stderr())).collect(),
        edge_weight: (acc.edge.mean, acc.edge.stderr()),
        paths,
    })
}

/// Joint overshoot / crossing-time statistics feeding the Theorem-4 check.
#[derive(Debug, Clone, Copy)]
pub struct OvershootStats {
    pub mean_overshoot: f64,
    pub stderr_overshoot: f64,
    pub var_overshoot: f64,
    pub mean_overshoot_sq: f64,
    pub stderr_overshoot_sq: f64,
    pub mean_tau: f64,
    pub stderr_tau: f64,
    pub corr_overshoot_tau: f64,
    /// `E[R_n * Delta(tau_n)]` with the trace clamped to its window.
    pub mean_overshoot_delta: f64,
    pub stderr_overshoot_delta: f64,
    pub paths: u64,
}

#[derive(Default)]
struct JointAcc {
    rt: Moments2,
    r2: Moments,
    rd: Moments,
}

impl Accumulator for JointAcc {
    fn merge(&mut self, other: &Self) {
        self.rt.merge(&other.rt);
        self.r2.merge(&other.r2);
        self.rd.merge(&other.rd);
    }
}

/// Plug-in MC statistics of `(R_n, tau_n, R_n Delta(tau_n))`.
pub fn joint_overshoot_stats<I: Increments + ?Sized>(
    n: u64,
    increments: &I,
    boundary: &Boundary,
    cap: u64,
    delta: &DeltaTrace,
    paths: u64,
    master_seed: u64,
) -> Result<OvershootStats> {
    let acc: JointAcc = run_batched(paths, master_seed, |path, rng, acc: &mut JointAcc| {
        let rec = simulate_crossing_with(n, increments, boundary, cap, rng, path, None)?;
        let t = rec.tau.clamp(delta.t_min(), delta.t_max());
        let dv = delta.eval(t)?;
        acc.rt.push(rec.overshoot, rec.tau);
        acc.r2.push(rec.overshoot * rec.overshoot);
        acc.rd.push(rec.overshoot * dv);
        Ok(())
    })?;
    Ok(OvershootStats {
        mean_overshoot: acc.rt.mean_x,
        stderr_overshoot: (acc.rt.var_x() / acc.rt.count as f64).sqrt(),
        var_overshoot: acc.rt.var_x(),
        mean_overshoot_sq: acc.r2.mean,
        stderr_overshoot_sq: acc.r2.stderr(),
        mean_tau: acc.rt.mean_y,
        stderr_tau: (acc.rt.var_y() / acc.rt.count as f64).sqrt(),
        corr_overshoot_tau: acc.rt.correlation(),
        mean_overshoot_delta: acc.rd.mean,
        stderr_overshoot_delta: acc.rd.stderr(),
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Payoff;
    use crate::pde::{synthetic_field, GridConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn constant_boundary(level: f64) -> Boundary {
        Boundary::Affine {
            intercept: level,
            slope: 0.0,
        }
    }

    #[test]
    fn stub_plus_two_crosses_level_one_immediately() {
        let rec = simulate_crossing(
            1,
            &ConstantStep(2.0),
            &constant_boundary(1.0),
            1000,
            0,
            0,
            None,
        )
        .unwrap();
        assert_eq!(rec.stop_index, 1);
        assert_abs_diff_eq!(rec.tau, 1.0);
        assert_abs_diff_eq!(rec.overshoot, 1.0);
        assert_abs_diff_eq!(rec.terminal, 2.0);
    }

    #[test]
    fn stub_plus_one_on_declining_boundary() {
        // n=4, b(t)=1-t/2: levels b_k = 2 - k/4; S_1 = 1 < 1.75, S_2 = 2 >= 1.5.
        let rec = simulate_crossing(
            4,
            &ConstantStep(1.0),
            &Boundary::standard(),
            1000,
            0,
            0,
            None,
        )
        .unwrap();
        assert_eq!(rec.stop_index, 2);
        assert_abs_diff_eq!(rec.tau, 0.5);
        assert_abs_diff_eq!(rec.overshoot, 0.5);
        assert_abs_diff_eq!(rec.terminal, rec.tau.mul_add(-0.5, 1.0) + rec.overshoot / 2.0);
    }

    #[test]
    fn stub_visit_counts_match_hand_tally() {
        let req = DiagnosticsRequest {
            d_values: vec![1.0, 1e12],
            intervals: vec![(1.0, 0.0, 1.0)],
        };
        let rec = simulate_crossing(
            4,
            &ConstantStep(1.0),
            &Boundary::standard(),
            1000,
            0,
            0,
            Some(&req),
        )
        .unwrap();
        let d = rec.diagnostics.unwrap();
        // k=0: gap 2 (not within 1); k=1: gap 0.75 (within 1).
        assert_eq!(d.near_counts, vec![1, 2]);
        // d -> infinity counts every pre-crossing step, i.e. stop_index.
        assert_eq!(d.near_counts[1], rec.stop_index);
        assert_eq!(d.interval_counts, vec![1]);
        assert_relative_eq!(
            d.edge_weight_sum,
            1.0 / 5.0 + 1.0 / (1.0 + 0.75 * 0.75),
            epsilon = 1e-12
        );
    }

    #[test]
    fn record_invariants_hold_on_random_paths() {
        let n = 64;
        let boundary = Boundary::standard();
        let dist = IncrementDistribution::StandardNormal;
        let cap = step_cap(n, 12.0);
        let req = DiagnosticsRequest {
            d_values: vec![f64::INFINITY],
            intervals: vec![],
        };
        for path in 0..200 {
            let rec =
                simulate_crossing(n, &dist, &boundary, cap, 1234, path, Some(&req)).unwrap();
            assert!(rec.overshoot >= 0.0);
            assert_relative_eq!(
                rec.terminal,
                boundary.value(rec.tau) + rec.overshoot / (n as f64).sqrt(),
                epsilon = 1e-12
            );
            // First-passage property: every pre-stop step is strictly below
            // the level, so the d=inf counter equals the stop index.
            assert_eq!(rec.diagnostics.unwrap().near_counts[0], rec.stop_index);
        }
    }

    #[test]
    fn never_crossing_walk_hits_step_cap() {
        let err = simulate_crossing(
            4,
            &ConstantStep(-1.0),
            &constant_boundary(1.0),
            100,
            0,
            0,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::StepCapExceeded { cap: 100, .. }));
        let err = mc_expectation(
            |r| r.tau,
            4,
            &ConstantStep(-1.0),
            &constant_boundary(1.0),
            100,
            64,
            0,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn constant_functional_has_zero_stderr() {
        let est = mc_expectation(
            |_| 2.5,
            16,
            &IncrementDistribution::StandardNormal,
            &Boundary::standard(),
            step_cap(16, 12.0),
            5000,
            7,
        )
        .unwrap();
        assert_eq!(est.mean, 2.5);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.paths, 5000);
    }

    #[test]
    fn estimates_are_worker_count_invariant() {
        let run = || {
            mc_expectation(
                |r| r.tau,
                100,
                &IncrementDistribution::CenteredExponential,
                &Boundary::standard(),
                step_cap(100, 12.0),
                40_000,
                99,
            )
            .unwrap()
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(single.mean.to_bits(), quad.mean.to_bits());
        assert_eq!(single.stderr.to_bits(), quad.stderr.to_bits());
    }

    #[test]
    fn mean_tau_satisfies_the_stopped_martingale_identity() {
        // For b(t) = 1 - t/2 the levels are b_k = sqrt(n) - k/(2 sqrt n), so
        // optional stopping gives E tau_n = 2 + 2 E R_n / sqrt(n) exactly.
        let n = 100;
        let sqrt_n = (n as f64).sqrt();
        let est = mc_expectation(
            |r| r.tau - 2.0 * r.overshoot / sqrt_n - 2.0,
            n,
            &IncrementDistribution::StandardNormal,
            &Boundary::standard(),
            step_cap(n, 12.0),
            200_000,
            11,
        )
        .unwrap();
        assert!(
            est.mean.abs() < 3.5 * est.stderr,
            "identity residual {} vs stderr {}",
            est.mean,
            est.stderr
        );

        // The scaled mean itself sits within the known O(1/sqrt n) band of
        // the Brownian value E tau_0 = 2.
        let tau = mc_expectation(
            |r| r.tau,
            n,
            &IncrementDistribution::StandardNormal,
            &Boundary::standard(),
            step_cap(n, 12.0),
            200_000,
            11,
        )
        .unwrap();
        assert!(
            (tau.mean - 2.0).abs() < 3.0 * tau.stderr + 0.15,
            "mean tau {} stderr {}",
            tau.mean,
            tau.stderr
        );
    }

    #[test]
    fn centered_exponential_overshoot_is_exactly_exp_one() {
        // The increment's upper tail is exponential, so by memorylessness the
        // excess over the level is Exp(1) at every finite n.
        let n = 100;
        let stats = joint_overshoot_stats(
            n,
            &IncrementDistribution::CenteredExponential,
            &Boundary::standard(),
            step_cap(n, 12.0),
            &DeltaTrace::zero(0.0, 12.0),
            100_000,
            21,
        )
        .unwrap();
        assert!(
            (stats.mean_overshoot - 1.0).abs() < 3.0 * stats.stderr_overshoot,
            "mean overshoot {}",
            stats.mean_overshoot
        );
        assert!(
            (stats.mean_overshoot_sq - 2.0).abs() < 3.0 * stats.stderr_overshoot_sq,
            "mean squared overshoot {}",
            stats.mean_overshoot_sq
        );
        // Zero trace forces the Theorem-4 statistic to vanish identically.
        assert_eq!(stats.mean_overshoot_delta, 0.0);
        assert_eq!(stats.stderr_overshoot_delta, 0.0);
    }

    #[test]
    fn visit_count_means_scale_like_one_plus_d_squared() {
        let n = 100;
        let req = DiagnosticsRequest {
            d_values: vec![0.5, 1.0, 2.0, 4.0],
            intervals: vec![(1.0, 0.0, 1.0)],
        };
        let stats = visit_counts(
            n,
            &IncrementDistribution::StandardNormal,
            &Boundary::standard(),
            step_cap(n, 12.0),
            &req,
            20_000,
            31,
        )
        .unwrap();
        let ratios: Vec<f64> = stats
            .near
            .iter()
            .map(|&(d, mean, _)| mean / (1.0 + d * d))
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0_f64, f64::max);
        assert!(lo > 0.0 && hi / lo < 4.0, "ratios {ratios:?}");
        // M_B(1) over B=[0,1) is N_1 restricted to the full path.
        let n1 = stats.near[1].1;
        assert_relative_eq!(stats.intervals[0].0, n1, max_relative = 1e-12);
        assert!(stats.edge_weight.0 > 0.0);
    }

    #[test]
    fn brownian_oracle_constant_payoff_is_exact() {
        let f = |_: f64, _: f64| 0.75;
        let est = brownian_oracle(
            &BrownianFunctional::Terminal(&f),
            &Boundary::standard(),
            &OracleConfig {
                dt: 1e-3,
                t_max: 12.0,
                paths: 1000,
                master_seed: 3,
            },
        )
        .unwrap();
        assert_eq!(est.mean, 0.75);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn brownian_oracle_matches_closed_form_value() {
        // b(t) = 1 - t/2, f = e^{-t/2}: E f(tau_0, W(tau_0)) = exp(1/2 - sqrt(5)/2).
        let payoff = Payoff::standard();
        let f = move |t: f64, x: f64| payoff.value(t, x);
        let est = brownian_oracle(
            &BrownianFunctional::Terminal(&f),
            &Boundary::standard(),
            &OracleConfig {
                dt: 1e-3,
                t_max: 48.0,
                paths: 100_000,
                master_seed: 17,
            },
        )
        .unwrap();
        let exact = (0.5 - 1.25_f64.sqrt()).exp();
        assert!(
            (est.mean - exact).abs() < 3.0 * est.stderr + 2e-3,
            "oracle {} vs exact {} (stderr {})",
            est.mean,
            exact,
            est.stderr
        );
    }

    #[test]
    fn running_integral_oracle_agrees_with_pde_occupation_time() {
        // q = 1, b = 1: the functional is E[tau_0 ^ horizon], where the PDE
        // march integrates out to its padded horizon (4 * t_max by default).
        let boundary = constant_boundary(1.0);
        let grid = GridConfig::new(10.0, 3.0, 321, 241);
        let source = synthetic_field(&boundary, &grid, |_, _| 1.0);
        let w = crate::pde::solve_running_cost(&boundary, &source, &grid).unwrap();
        let est = brownian_oracle(
            &BrownianFunctional::RunningIntegral(&source),
            &boundary,
            &OracleConfig {
                dt: 1e-3,
                t_max: 12.0,
                paths: 100_000,
                master_seed: 23,
            },
        )
        .unwrap();
        assert!(
            (est.mean - w.at_origin()).abs() < 3.0 * est.stderr + 0.03,
            "oracle {} vs pde {} (stderr {})",
            est.mean,
            w.at_origin(),
            est.stderr
        );
    }
}
