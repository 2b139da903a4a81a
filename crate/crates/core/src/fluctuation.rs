//! Ladder-variable fluctuation theory: the overshoot constant `rho`, the
//! harmonic function `H`, and renewal-measure diagnostics.
//!
//! For a zero-mean unit-variance walk, the ascending ladder time is
//! `T_0 = inf{k >= 1 : S_k >= 0}` and the ladder height is `Y = S_{T_0}`.
//! The limiting overshoot mean is `rho = EY^2 / (2 EY)`. For a start
//! `x <= 0`, `T_x = inf{k >= 1 : x + S_k >= 0}` defines the overshoot above
//! zero, the harmonic function `H`, and (by iteration) the ladder-height
//! renewal measure.
//!
//! Ladder epochs have infinite mean, so every sampler carries a step cap;
//! capped draws are excluded from the moments, counted, and refused when
//! their fraction reaches 1e-3 (censoring would otherwise bias the moments
//! silently).

use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{run_batched, Accumulator, Moments, Moments2};
use crate::walk::Increments;

/// Fraction of capped draws above which an estimate is refused.
pub const CAPPED_FRACTION_LIMIT: f64 = 1e-3;

/// Default ladder-walk step cap.
pub const DEFAULT_LADDER_CAP: u64 = 1_000_000;

/// One ascending-ladder draw.
#[derive(Debug, Clone, Copy)]
pub struct LadderSample {
    /// `T_x` (number of steps), or the cap if capped.
    pub epoch: u64,
    /// `x + S_{T_x} >= 0`, the overshoot above zero; meaningless if capped.
    pub height: f64,
    pub capped: bool,
}

/// Draw the first nonnegative level of `x + S_k`, `k >= 1`, from `x <= 0`.
pub fn sample_ladder<I, R>(increments: &I, x: f64, cap: u64, rng: &mut R) -> LadderSample
where
    I: Increments + ?Sized,
    R: Rng + ?Sized,
{
    debug_assert!(x <= 0.0 && cap >= 1);
    let mut s = x;
    for k in 1..=cap {
        s += increments.draw(rng);
        if s >= 0.0 {
            return LadderSample {
                epoch: k,
                height: s,
                capped: false,
            };
        }
    }
    LadderSample {
        epoch: cap,
        height: 0.0,
        capped: true,
    }
}

/// Ladder-height moments and the overshoot constant.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OvershootConstants {
    /// `rho = EY^2 / (2 EY)`.
    pub rho: f64,
    /// Delta-method standard error of `rho` (the two moments are strongly
    /// dependent, so the empirical covariance of `(Y, Y^2)` enters).
    pub rho_stderr: f64,
    pub ey: f64,
    pub ey2: f64,
    pub ey3: f64,
    pub epochs_used: u64,
    pub cap: u64,
    pub capped_fraction: f64,
}

#[derive(Default)]
struct LadderAcc {
    yy2: Moments2,
    y3: Moments,
    capped: u64,
}

impl Accumulator for LadderAcc {
    fn merge(&mut self, other: &Self) {
        self.yy2.merge(&other.yy2);
        self.y3.merge(&other.y3);
        self.capped += other.capped;
    }
}

fn refuse_capped(capped: u64, total: u64, cap: u64) -> Result<f64> {
    let fraction = capped as f64 / total as f64;
    if fraction >= CAPPED_FRACTION_LIMIT {
        return Err(Error::Refusal(format!(
            "capped ladder fraction {fraction:.2e} >= {CAPPED_FRACTION_LIMIT:.0e}; \
             step cap {cap} is too small for this distribution"
        )));
    }
    Ok(fraction)
}

/// Plug-in estimate of `rho` and the ladder-height moments.
pub fn estimate_rho<I: Increments + ?Sized>(
    increments: &I,
    epochs: u64,
    cap: u64,
    master_seed: u64,
) -> Result<OvershootConstants> {
    if epochs < 10_000 {
        return Err(Error::schema("fluctuation.epochs", "require epochs >= 1e4"));
    }
    let acc: LadderAcc = run_batched(epochs, master_seed, |_, rng, acc: &mut LadderAcc| {
        let s = sample_ladder(increments, 0.0, cap, rng);
        if s.capped {
            acc.capped += 1;
        } else {
            acc.yy2.push(s.height, s.height * s.height);
            acc.y3.push(s.height.powi(3));
        }
        Ok(())
    })?;
    let capped_fraction = refuse_capped(acc.capped, epochs, cap)?;
    let m1 = acc.yy2.mean_x;
    let m2 = acc.yy2.mean_y;
    let rho = m2 / (2.0 * m1);
    // Gradient of (m1, m2) -> m2/(2 m1).
    let g1 = -m2 / (2.0 * m1 * m1);
    let g2 = 1.0 / (2.0 * m1);
    let n = acc.yy2.count as f64;
    let var = (g1 * g1 * acc.yy2.var_x()
        + g2 * g2 * acc.yy2.var_y()
        + 2.0 * g1 * g2 * acc.yy2.covariance())
        / n;
    Ok(OvershootConstants {
        rho,
        rho_stderr: var.max(0.0).sqrt(),
        ey: m1,
        ey2: m2,
        ey3: acc.y3.mean,
        epochs_used: acc.yy2.count,
        cap,
        capped_fraction,
    })
}

/// A value of `H` with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy)]
pub struct HEstimate {
    pub x: f64,
    pub value: f64,
    pub stderr: f64,
}

/// `H(x) = x - rho` for `x >= 0` (exact), `E[x + S_{T_x}] - rho` for `x < 0`.
pub fn estimate_h<I: Increments + ?Sized>(
    increments: &I,
    x: f64,
    rho: f64,
    epochs: u64,
    cap: u64,
    master_seed: u64,
) -> Result<HEstimate> {
    if x >= 0.0 {
        return Ok(HEstimate {
            x,
            value: x - rho,
            stderr: 0.0,
        });
    }
    let acc: LadderAcc = run_batched(epochs, master_seed, |_, rng, acc: &mut LadderAcc| {
        let s = sample_ladder(increments, x, cap, rng);
        if s.capped {
            acc.capped += 1;
        } else {
            acc.yy2.push(s.height, 0.0);
        }
        Ok(())
    })?;
    refuse_capped(acc.capped, epochs, cap)?;
    Ok(HEstimate {
        x,
        value: acc.yy2.mean_x - rho,
        stderr: (acc.yy2.var_x() / acc.yy2.count as f64).sqrt(),
    })
}

/// Per-point result of the harmonicity check `H(x) = E H(x + X)`, `x < 0`.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicDeviation {
    pub x: f64,
    /// `Ê H(x+X) - Ĥ(x)`; `rho` cancels exactly in the difference.
    pub deviation: f64,
    /// Combined standard error of the two estimates.
    pub stderr: f64,
}

/// Worst-case deviation of the conditioning identity over a grid of `x < 0`.
///
/// The outer expectation draws `X` fresh per replicate; when `x + X >= 0`
/// the inner value `H(x+X) = (x+X) - rho` is exact, otherwise the same
/// replicate stream continues into a ladder walk from `x + X`.
pub fn check_h_harmonic<I: Increments + ?Sized>(
    increments: &I,
    xs: &[f64],
    rho: f64,
    epochs: u64,
    cap: u64,
    master_seed: u64,
) -> Result<Vec<HarmonicDeviation>> {
    let mut out = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        if x >= 0.0 {
            return Err(Error::schema(
                "fluctuation.harmonic_grid",
                format!("x = {x} not negative; the identity is claimed for x < 0 only"),
            ));
        }
        let seed_outer = master_seed.wrapping_add(2 * i as u64);
        let seed_direct = master_seed.wrapping_add(2 * i as u64 + 1);
        let acc: LadderAcc =
            run_batched(epochs, seed_outer, |_, rng, acc: &mut LadderAcc| {
                let step = increments.draw(rng);
                let x2 = x + step;
                if x2 >= 0.0 {
                    acc.yy2.push(x2 - rho, 0.0);
                } else {
                    let s = sample_ladder(increments, x2, cap, rng);
                    if s.capped {
                        acc.capped += 1;
                        return Ok(());
                    }
                    acc.yy2.push(s.height - rho, 0.0);
                }
                Ok(())
            })?;
        refuse_capped(acc.capped, epochs, cap)?;
        let smoothed = HEstimate {
            x,
            value: acc.yy2.mean_x,
            stderr: (acc.yy2.var_x() / acc.yy2.count as f64).sqrt(),
        };
        let direct = estimate_h(increments, x, rho, epochs, cap, seed_direct)?;
        out.push(HarmonicDeviation {
            x,
            deviation: smoothed.value - direct.value,
            stderr: smoothed.stderr.hypot(direct.stderr),
        });
    }
    Ok(out)
}

/// A renewal-measure estimate over a window `[lo, hi)`.
#[derive(Debug, Clone, Copy)]
pub struct RenewalEstimate {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub stderr: f64,
    pub replicates_used: u64,
}

/// Direct estimate of `mu([lo, hi)) = sum_k P(V_k in [lo, hi))` where `V_k`
/// are ladder-height renewals from `V_0 = 0`.
pub fn renewal_measure<I: Increments + ?Sized>(
    increments: &I,
    lo: f64,
    hi: f64,
    replicates: u64,
    cap: u64,
    master_seed: u64,
) -> Result<RenewalEstimate> {
    if !(0.0 <= lo && lo < hi && hi.is_finite()) {
        return Err(Error::schema(
            "fluctuation.window",
            "require a bounded window 0 <= lo < hi",
        ));
    }
    let acc: LadderAcc = run_batched(replicates, master_seed, |_, rng, acc: &mut LadderAcc| {
        let mut v = 0.0_f64;
        let mut count = if lo == 0.0 { 1_u64 } else { 0 };
        loop {
            let s = sample_ladder(increments, 0.0, cap, rng);
            if s.capped {
                acc.capped += 1;
                return Ok(());
            }
            v += s.height;
            if v >= hi {
                break;
            }
            if v >= lo {
                count += 1;
            }
        }
        acc.yy2.push(count as f64, 0.0);
        Ok(())
    })?;
    refuse_capped(acc.capped, replicates, cap)?;
    Ok(RenewalEstimate {
        lo,
        hi,
        mean: acc.yy2.mean_x,
        stderr: (acc.yy2.var_x() / acc.yy2.count as f64).sqrt(),
        replicates_used: acc.yy2.count,
    })
}

/// Wald-identity route to the same quantity: `mu([0, w)) = E S_{T_{-w}} / EY`
/// with `S_{T_{-w}} = (overshoot above zero) + w`, estimated from
/// independent samples of the numerator and denominator.
pub fn renewal_via_wald<I: Increments + ?Sized>(
    increments: &I,
    w: f64,
    epochs: u64,
    cap: u64,
    master_seed: u64,
) -> Result<RenewalEstimate> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::schema("fluctuation.window", "require w > 0"));
    }
    let numer = estimate_h(increments, -w, 0.0, epochs, cap, master_seed)?;
    let denom = estimate_rho(increments, epochs, cap, master_seed.wrapping_add(1))?;
    let a = numer.value + w;
    let b = denom.ey;
    let se_b = {
        // Standard error of EY from the same delta-method inputs.
        let var_y = denom.ey2 - denom.ey * denom.ey;
        (var_y.max(0.0) / denom.epochs_used as f64).sqrt()
    };
    let mean = a / b;
    let var = (numer.stderr / b).powi(2) + (a * se_b / (b * b)).powi(2);
    Ok(RenewalEstimate {
        lo: 0.0,
        hi: w,
        mean,
        stderr: var.sqrt(),
        replicates_used: epochs,
    })
}
