//! Problem-definition types: crossing boundaries, payoffs and increment
//! distributions, together with the pure helpers they induce.
//!
//! All families are closed parametric catalogues so that exact derivatives
//! (`b'`, `f_x`, `f_t`, `f_xx`) and exact moments are available analytically.
//! Everything here is immutable after construction and safe to share across
//! worker threads.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Crossing boundary `b(t)`, assumed smooth with bounded first derivative
/// and `b(0) > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Boundary {
    /// `b(t) = intercept + slope * t`
    Affine { intercept: f64, slope: f64 },
    /// `b(t) = intercept + slope * t + amplitude * sin(frequency * t)`
    AffinePerturbed {
        intercept: f64,
        slope: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// `b(t) = c0 + c1 t + ... + ck t^k`, evaluated on a bounded horizon.
    /// `horizon` caps where the polynomial is trusted; the derivative bound
    /// is taken over `[0, horizon]`.
    Polynomial { coeffs: Vec<f64>, horizon: f64 },
}

impl Boundary {
    /// Standard test boundary `b(t) = 1 - t/2`.
    pub fn standard() -> Self {
        Boundary::Affine {
            intercept: 1.0,
            slope: -0.5,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Boundary::Affine { intercept, slope } => intercept + slope * t,
            Boundary::AffinePerturbed {
                intercept,
                slope,
                amplitude,
                frequency,
            } => intercept + slope * t + amplitude * (frequency * t).sin(),
            Boundary::Polynomial { coeffs, .. } => {
                coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Boundary::Affine { slope, .. } => *slope,
            Boundary::AffinePerturbed {
                slope,
                amplitude,
                frequency,
                ..
            } => slope + amplitude * frequency * (frequency * t).cos(),
            Boundary::Polynomial { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &c)| acc * t + k as f64 * c),
        }
    }

    /// `b(0)`.
    pub fn b0(&self) -> f64 {
        self.value(0.0)
    }

    /// Bound on `|b'(t)|` over the trusted horizon.
    pub fn derivative_bound(&self) -> f64 {
        match self {
            Boundary::Affine { slope, .. } => slope.abs(),
            Boundary::AffinePerturbed {
                slope,
                amplitude,
                frequency,
                ..
            } => slope.abs() + (amplitude * frequency).abs(),
            Boundary::Polynomial { horizon, .. } => {
                // Dense scan; the catalogue keeps degrees small.
                let m = 4096;
                (0..=m)
                    .map(|i| self.derivative(horizon * i as f64 / m as f64).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Discrete boundary level `b_k = sqrt(n) * b(k/n)`.
    pub fn level(&self, k: u64, n: u64) -> f64 {
        let n_f = n as f64;
        n_f.sqrt() * self.value(k as f64 / n_f)
    }

    /// Validate structural assumptions: `b(0) > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.b0() > 0.0) {
            return Err(Error::assumption(
                "boundary positivity",
                format!("b(0) = {} must be positive", self.b0()),
            ));
        }
        Ok(())
    }

    /// Check that `b(t) + eps * t -> -infinity`, which guarantees the walk
    /// eventually crosses. The configured `eps` is recorded by the caller.
    /// For the affine families this is `slope < -eps`; polynomials must have
    /// a negative leading coefficient of odd-or-higher degree, checked by
    /// linear growth comparison on the horizon tail.
    pub fn ensure_eventual_crossing(&self, eps: f64) -> Result<()> {
        let ok = match self {
            Boundary::Affine { slope, .. } => *slope < -eps,
            Boundary::AffinePerturbed { slope, .. } => *slope < -eps,
            Boundary::Polynomial { horizon, .. } => {
                let t0 = 0.9 * horizon;
                let t1 = *horizon;
                (self.value(t1) - self.value(t0)) / (t1 - t0) < -eps
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::assumption(
                "eventual crossing",
                format!("b(t) + {eps} t does not drift to -infinity"),
            ))
        }
    }
}

/// Payoff `f(t, x)` with bounded, continuous first and second partials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payoff {
    /// `f(t, x) = scale * exp(-rate * t)`; `rate = 0` gives a constant.
    TimeExponential { scale: f64, rate: f64 },
    /// `f(t, x) = scale * exp(-(x - center)^2 / (2 width^2)) * exp(-rate * t)`
    GaussianBump {
        scale: f64,
        center: f64,
        width: f64,
        rate: f64,
    },
    /// `f(t, x) = p(x) * exp(-x^2 / (2 window^2)) * exp(-rate * t)` with
    /// `p(x) = c0 + c1 x + c2 x^2`. The Gaussian window keeps f bounded.
    WindowedPolynomial {
        c0: f64,
        c1: f64,
        c2: f64,
        window: f64,
        rate: f64,
    },
}

impl Payoff {
    /// Standard test payoff `f(t, x) = exp(-t/2)`.
    pub fn standard() -> Self {
        Payoff::TimeExponential {
            scale: 1.0,
            rate: 0.5,
        }
    }

    pub fn constant(c: f64) -> Self {
        Payoff::TimeExponential { scale: c, rate: 0.0 }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            Payoff::TimeExponential { scale, rate } => scale * (-rate * t).exp(),
            Payoff::GaussianBump {
                scale,
                center,
                width,
                rate,
            } => {
                let z = (x - center) / width;
                scale * (-0.5 * z * z).exp() * (-rate * t).exp()
            }
            Payoff::WindowedPolynomial {
                c0,
                c1,
                c2,
                window,
                rate,
            } => {
                let z = x / window;
                (c0 + c1 * x + c2 * x * x) * (-0.5 * z * z).exp() * (-rate * t).exp()
            }
        }
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        let rate = match self {
            Payoff::TimeExponential { rate, .. } => *rate,
            Payoff::GaussianBump { rate, .. } => *rate,
            Payoff::WindowedPolynomial { rate, .. } => *rate,
        };
        -rate * self.value(t, x)
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        match self {
            Payoff::TimeExponential { .. } => 0.0,
            Payoff::GaussianBump { center, width, .. } => {
                -(x - center) / (width * width) * self.value(t, x)
            }
            Payoff::WindowedPolynomial {
                c0,
                c1,
                c2,
                window,
                rate,
            } => {
                let w2 = window * window;
                let p = c0 + c1 * x + c2 * x * x;
                let dp = c1 + 2.0 * c2 * x;
                (dp - p * x / w2) * (-0.5 * x * x / w2).exp() * (-rate * t).exp()
            }
        }
    }

    pub fn dxx(&self, t: f64, x: f64) -> f64 {
        match self {
            Payoff::TimeExponential { .. } => 0.0,
            Payoff::GaussianBump { center, width, .. } => {
                let w2 = width * width;
                let z = x - center;
                (z * z / (w2 * w2) - 1.0 / w2) * self.value(t, x)
            }
            Payoff::WindowedPolynomial {
                c0,
                c1,
                c2,
                window,
                rate,
            } => {
                let w2 = window * window;
                let p = c0 + c1 * x + c2 * x * x;
                let dp = c1 + 2.0 * c2 * x;
                let ddp = 2.0 * c2;
                let g = (-0.5 * x * x / w2).exp();
                (ddp - 2.0 * dp * x / w2 + p * (x * x / (w2 * w2) - 1.0 / w2))
                    * g
                    * (-rate * t).exp()
            }
        }
    }

    /// Sup-norm bounds on (f, f_x, f_t, f_xx), scanned on a dense grid over
    /// the region of interest. Used only for validation diagnostics.
    pub fn bounds(&self, t_max: f64, x_lo: f64, x_hi: f64) -> PayoffBounds {
        let m = 256;
        let mut b = PayoffBounds::default();
        for i in 0..=m {
            let t = t_max * i as f64 / m as f64;
            for j in 0..=m {
                let x = x_lo + (x_hi - x_lo) * j as f64 / m as f64;
                b.f = b.f.max(self.value(t, x).abs());
                b.fx = b.fx.max(self.dx(t, x).abs());
                b.ft = b.ft.max(self.dt(t, x).abs());
                b.fxx = b.fxx.max(self.dxx(t, x).abs());
            }
        }
        b
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PayoffBounds {
    pub f: f64,
    pub fx: f64,
    pub ft: f64,
    pub fxx: f64,
}

/// Zero-mean unit-variance increment distribution with exact third and
/// fourth moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IncrementDistribution {
    StandardNormal,
    /// `X = E - 1`, `E ~ Exp(1)`.
    CenteredExponential,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    UniformSymmetric,
    /// Scale mixture: `N(0, s1^2)` w.p. `p`, `N(0, s2^2)` otherwise, with
    /// `p s1^2 + (1-p) s2^2 = 1` enforced at validation.
    GaussianMixture { p: f64, sigma1: f64, sigma2: f64 },
    /// `+1` or `-1` with equal probability. Lattice: kept in the catalogue
    /// so that assumption-1 refusals are testable.
    TwoPointLattice,
}

/// Exact central moments `EX^3`, `EX^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub m3: f64,
    pub m4: f64,
}

impl IncrementDistribution {
    pub fn moments(&self) -> MomentRecord {
        match self {
            IncrementDistribution::StandardNormal => MomentRecord { m3: 0.0, m4: 3.0 },
            IncrementDistribution::CenteredExponential => MomentRecord { m3: 2.0, m4: 9.0 },
            IncrementDistribution::UniformSymmetric => MomentRecord { m3: 0.0, m4: 1.8 },
            IncrementDistribution::GaussianMixture { p, sigma1, sigma2 } => {
                let s14 = sigma1.powi(4);
                let s24 = sigma2.powi(4);
                MomentRecord {
                    m3: 0.0,
                    m4: 3.0 * (p * s14 + (1.0 - p) * s24),
                }
            }
            IncrementDistribution::TwoPointLattice => MomentRecord { m3: 0.0, m4: 1.0 },
        }
    }

    pub fn non_lattice(&self) -> bool {
        !matches!(self, IncrementDistribution::TwoPointLattice)
    }

    /// Expansion operations call this to enforce Theorem-1 assumption 1.
    pub fn require_non_lattice(&self) -> Result<()> {
        if self.non_lattice() {
            Ok(())
        } else {
            Err(Error::assumption(
                "assumption 1 (strongly non-lattice)",
                "the two-point lattice distribution violates Cramer's condition",
            ))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let IncrementDistribution::GaussianMixture { p, sigma1, sigma2 } = self {
            if !(0.0..=1.0).contains(p) || *sigma1 <= 0.0 || *sigma2 <= 0.0 {
                return Err(Error::schema(
                    "distribution",
                    "mixture requires p in [0,1] and positive sigmas",
                ));
            }
            let var = p * sigma1 * sigma1 + (1.0 - p) * sigma2 * sigma2;
            if (var - 1.0).abs() > 1e-12 {
                return Err(Error::schema(
                    "distribution",
                    format!("mixture variance {var} != 1"),
                ));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            IncrementDistribution::StandardNormal => rng.sample(StandardNormal),
            IncrementDistribution::CenteredExponential => {
                let e: f64 = rng.sample(Exp1);
                e - 1.0
            }
            IncrementDistribution::UniformSymmetric => {
                const A: f64 = 1.732050807568877; // sqrt(3)
                rng.random::<f64>() * (2.0 * A) - A
            }
            IncrementDistribution::GaussianMixture { p, sigma1, sigma2 } => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < *p {
                    z * sigma1
                } else {
                    z * sigma2
                }
            }
            IncrementDistribution::TwoPointLattice => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Boundary trace of `Delta(t) = f_x(t,b(t)) - u_x(t,b(t)-)`, sampled at the
/// PDE time nodes with monotone-cubic (Fritsch-Carlson) interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTrace {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    /// Node derivatives of the monotone cubic interpolant.
    slopes: Vec<f64>,
}

impl DeltaTrace {
    /// Build from uniformly spaced samples `values[j] = Delta(t0 + j dt)`.
    pub fn from_uniform(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || dt <= 0.0 {
            return Err(Error::schema("delta_trace", "need >= 2 nodes and dt > 0"));
        }
        let slopes = pchip_slopes(dt, &values);
        Ok(DeltaTrace {
            t0,
            dt,
            values,
            slopes,
        })
    }

    pub fn zero(t0: f64, t1: f64) -> Self {
        DeltaTrace::from_uniform(t0, t1 - t0, vec![0.0, 0.0]).unwrap()
    }

    pub fn t_min(&self) -> f64 {
        self.t0
    }

    pub fn t_max(&self) -> f64 {
        self.t0 + self.dt * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.t_min(), self.t_max());
        // Tolerate rounding at the window edges.
        let eps = 1e-12 * (1.0 + hi.abs());
        if t < lo - eps || t > hi + eps {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        let s = (t - self.t0) / self.dt;
        let j = (s.floor() as usize).min(self.values.len() - 2);
        let u = s - j as f64;
        let h = self.dt;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
        // Cubic Hermite basis.
        let u2 = u * u;
        let u3 = u2 * u;
        Ok(y0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + h * d0 * (u3 - 2.0 * u2 + u)
            + y1 * (-2.0 * u3 + 3.0 * u2)
            + h * d1 * (u3 - u2))
    }
}

/// Fritsch-Carlson monotone slopes for uniform spacing `h`.
fn pchip_slopes(h: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            // Harmonic mean keeps the interpolant monotone on each interval.
            m[i] = 2.0 / (1.0 / d[i - 1] + 1.0 / d[i]);
        }
    }
    // Limit endpoint slopes (standard PCHIP endpoint treatment).
    for (i, di) in [(0usize, d[0]), (n - 1, d[n - 2])] {
        if m[i] * di <= 0.0 {
            m[i] = 0.0;
        } else if m[i].abs() > 3.0 * di.abs() {
            m[i] = 3.0 * di;
        }
    }
    m
}

/// The payoff split `f = f0 + f1` induced by a boundary trace of Delta:
/// `f1(t,x) = Delta(t) (x - b(t))`, `f0 = f - f1`.
#[derive(Debug, Clone)]
pub struct SplitPayoff<'a> {
    pub payoff: &'a Payoff,
    pub boundary: &'a Boundary,
    pub delta: &'a DeltaTrace,
}

impl<'a> SplitPayoff<'a> {
    pub fn new(payoff: &'a Payoff, boundary: &'a Boundary, delta: &'a DeltaTrace) -> Self {
        SplitPayoff {
            payoff,
            boundary,
            delta,
        }
    }

    pub fn f0(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.payoff.value(t, x) - self.f1(t, x)?)
    }

    pub fn f1(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.delta.eval(t)? * (x - self.boundary.value(t)))
    }

    /// `d f0 / dx`.
    pub fn f0_dx(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.payoff.dx(t, x) - self.delta.eval(t)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn boundary_levels_match_spec_examples() {
        let b = Boundary::standard();
        assert_relative_eq!(b.level(0, 4), 2.0);
        assert_relative_eq!(b.level(2, 4), 1.5);
        let c = Boundary::Affine {
            intercept: 1.0,
            slope: 0.0,
        };
        assert_relative_eq!(c.level(100, 9), 3.0);
    }

    #[test]
    fn boundary_level_rescales_to_curve() {
        let b = Boundary::AffinePerturbed {
            intercept: 2.0,
            slope: -0.3,
            amplitude: 0.1,
            frequency: 2.0,
        };
        for n in [4u64, 64, 1024] {
            for k in 0..200 {
                let lhs = b.level(k, n) / (n as f64).sqrt();
                let rhs = b.value(k as f64 / n as f64);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn boundary_requires_positive_start() {
        let b = Boundary::Affine {
            intercept: -1.0,
            slope: -0.5,
        };
        assert!(matches!(b.validate(), Err(Error::Assumption { .. })));
    }

    #[test]
    fn eventual_crossing_flag() {
        assert!(Boundary::standard().ensure_eventual_crossing(0.25).is_ok());
        let flat = Boundary::Affine {
            intercept: 1.0,
            slope: 0.0,
        };
        assert!(flat.ensure_eventual_crossing(0.25).is_err());
    }

    #[test]
    fn payoff_partials_match_finite_differences() {
        let payoffs = [
            Payoff::standard(),
            Payoff::GaussianBump {
                scale: 1.3,
                center: 0.4,
                width: 0.8,
                rate: 0.2,
            },
            Payoff::WindowedPolynomial {
                c0: 0.5,
                c1: -0.7,
                c2: 0.3,
                window: 1.5,
                rate: 0.1,
            },
        ];
        let h = 1e-5;
        for f in &payoffs {
            for &(t, x) in &[(0.3, 0.2), (1.0, -0.5), (2.5, 0.9)] {
                let fx = (f.value(t, x + h) - f.value(t, x - h)) / (2.0 * h);
                let ft = (f.value(t + h, x) - f.value(t - h, x)) / (2.0 * h);
                let fxx = (f.value(t, x + h) - 2.0 * f.value(t, x) + f.value(t, x - h)) / (h * h);
                assert_relative_eq!(f.dx(t, x), fx, epsilon = 1e-8, max_relative = 1e-6);
                assert_relative_eq!(f.dt(t, x), ft, epsilon = 1e-8, max_relative = 1e-6);
                assert_relative_eq!(f.dxx(t, x), fxx, epsilon = 1e-5, max_relative = 1e-4);
            }
        }
    }

    /// Independent oracle for the moment catalogue: numeric quadrature of the
    /// densities (trapezoid at fine resolution).
    fn numeric_central_moment(dist: &IncrementDistribution, p: i32) -> f64 {
        let integrand = |x: f64, pdf: f64| x.powi(p) * pdf;
        match dist {
            IncrementDistribution::StandardNormal => {
                let (a, b, m) = (-12.0, 12.0, 400_000);
                trapezoid(a, b, m, |x| {
                    integrand(x, (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
                })
            }
            IncrementDistribution::CenteredExponential => {
                // X = E - 1, density e^{-(x+1)} on [-1, inf).
                let (a, b, m) = (-1.0, 60.0, 4_000_000);
                trapezoid(a, b, m, |x| integrand(x, (-(x + 1.0)).exp()))
            }
            IncrementDistribution::UniformSymmetric => {
                let a = 3.0_f64.sqrt();
                trapezoid(-a, a, 400_000, |x| integrand(x, 1.0 / (2.0 * a)))
            }
            _ => unreachable!(),
        }
    }

    fn trapezoid(a: f64, b: f64, m: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..m {
            s += f(a + h * i as f64);
        }
        s * h
    }

    #[test]
    fn moment_catalogue_matches_numeric_integration() {
        for dist in [
            IncrementDistribution::StandardNormal,
            IncrementDistribution::CenteredExponential,
            IncrementDistribution::UniformSymmetric,
        ] {
            let m = dist.moments();
            assert_relative_eq!(
                m.m3,
                numeric_central_moment(&dist, 3),
                epsilon = 1e-5,
                max_relative = 1e-5
            );
            assert_relative_eq!(
                m.m4,
                numeric_central_moment(&dist, 4),
                epsilon = 1e-4,
                max_relative = 1e-4
            );
            // Mean zero, unit variance by the same oracle.
            assert_relative_eq!(numeric_central_moment(&dist, 1), 0.0, epsilon = 1e-6);
            assert_relative_eq!(numeric_central_moment(&dist, 2), 1.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn lattice_distribution_is_refused() {
        let d = IncrementDistribution::TwoPointLattice;
        assert!(!d.non_lattice());
        assert!(matches!(
            d.require_non_lattice(),
            Err(Error::Assumption { .. })
        ));
    }

    #[test]
    fn sample_moments_within_standard_errors() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 10_000_000u64;
        for dist in [
            IncrementDistribution::StandardNormal,
            IncrementDistribution::CenteredExponential,
            IncrementDistribution::UniformSymmetric,
            IncrementDistribution::GaussianMixture {
                p: 0.5,
                sigma1: (0.5f64).sqrt(),
                sigma2: (1.5f64).sqrt(),
            },
        ] {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let x = dist.sample(&mut rng);
                sum += x;
                sumsq += x * x;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let m4 = dist.moments().m4;
            let se_mean = (1.0 / n as f64).sqrt();
            let se_var = ((m4 - 1.0) / n as f64).sqrt();
            assert!(mean.abs() < 4.0 * se_mean, "mean {mean} for {dist:?}");
            assert!((var - 1.0).abs() < 4.0 * se_var, "var {var} for {dist:?}");
        }
    }

    #[test]
    fn delta_trace_interpolates_nodes_and_rejects_outside() {
        let tr = DeltaTrace::from_uniform(0.0, 0.5, vec![1.0, 0.8, 0.5, 0.45]).unwrap();
        for (j, v) in tr.values().to_vec().iter().enumerate() {
            assert_relative_eq!(tr.eval(0.5 * j as f64).unwrap(), *v, epsilon = 1e-14);
        }
        assert!(matches!(tr.eval(2.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(tr.eval(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn delta_trace_monotone_data_stays_monotone() {
        let tr = DeltaTrace::from_uniform(0.0, 0.25, vec![2.0, 1.4, 1.1, 1.05, 1.0]).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let v = tr.eval(i as f64 / 400.0).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn split_payoff_identity_and_boundary_vanishing() {
        let payoff = Payoff::standard();
        let boundary = Boundary::standard();
        let delta = DeltaTrace::from_uniform(0.0, 0.4, vec![-0.6, -0.5, -0.45, -0.40]).unwrap();
        let split = SplitPayoff::new(&payoff, &boundary, &delta);
        for &(t, x) in &[(0.0, 0.0), (0.4, -1.0), (1.1, 0.3)] {
            let f = payoff.value(t, x);
            let f0 = split.f0(t, x).unwrap();
            let f1 = split.f1(t, x).unwrap();
            assert_relative_eq!(f0 + f1, f, epsilon = 1e-14);
        }
        // f1 vanishes on the boundary; f0 matches f there, with slope f_x - Delta.
        let t = 0.4;
        let bx = boundary.value(t);
        assert_relative_eq!(split.f1(t, bx).unwrap(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(split.f0(t, bx).unwrap(), payoff.value(t, bx), epsilon = 1e-14);
        let h = 1e-6;
        let slope = (split.f0(t, bx + h).unwrap() - split.f0(t, bx - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(
            slope,
            payoff.dx(t, bx) - delta.eval(t).unwrap(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn split_payoff_zero_delta_gives_f() {
        let payoff = Payoff::constant(3.25);
        let boundary = Boundary::standard();
        let delta = DeltaTrace::zero(0.0, 2.0);
        let split = SplitPayoff::new(&payoff, &boundary, &delta);
        assert_relative_eq!(split.f0(1.0, -0.3).unwrap(), 3.25);
        assert_relative_eq!(split.f1(1.0, -0.3).unwrap(), 0.0);
    }
}
