//! Gaussian quadrature rules against the increment densities.
//!
//! Nodes and weights are computed by Newton iteration on the classical
//! three-term recurrences. The rules are expressed directly as probability
//! rules: `expectation(g)` approximates `E g(X)` for the matching increment
//! distribution, so the O(1/(n sqrt n)) error-diagnostic signal is not
//! contaminated by quadrature error.

use crate::error::{Error, Result};
use crate::model::IncrementDistribution;

/// A probability quadrature rule: `E g(X) ~= sum_i w_i g(x_i)`.
#[derive(Debug, Clone)]
pub struct ProbabilityRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ProbabilityRule {
    pub fn expectation(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// Rule matching the given increment distribution.
    pub fn for_distribution(dist: &IncrementDistribution, order: usize) -> Result<Self> {
        match dist {
            IncrementDistribution::StandardNormal => {
                // E g(X) = pi^{-1/2} sum w_i g(sqrt(2) x_i), physicists' Hermite.
                let (x, w) = gauss_hermite(order);
                let c = std::f64::consts::PI.sqrt();
                Ok(ProbabilityRule {
                    nodes: x.iter().map(|&xi| std::f64::consts::SQRT_2 * xi).collect(),
                    weights: w.iter().map(|&wi| wi / c).collect(),
                })
            }
            IncrementDistribution::CenteredExponential => {
                // X = E - 1: E g(X) = sum w_i g(x_i - 1), Laguerre weight e^{-x}.
                let (x, w) = gauss_laguerre(order);
                Ok(ProbabilityRule {
                    nodes: x.iter().map(|&xi| xi - 1.0).collect(),
                    weights: w,
                })
            }
            IncrementDistribution::UniformSymmetric => {
                // Uniform on [-a, a], a = sqrt(3): E g(X) = (1/2) sum w_i g(a x_i).
                let a = 3.0_f64.sqrt();
                let (x, w) = gauss_legendre(order);
                Ok(ProbabilityRule {
                    nodes: x.iter().map(|&xi| a * xi).collect(),
                    weights: w.iter().map(|&wi| wi / 2.0).collect(),
                })
            }
            IncrementDistribution::GaussianMixture { p, sigma1, sigma2 } => {
                let (x, w) = gauss_hermite(order);
                let c = std::f64::consts::PI.sqrt();
                let mut nodes = Vec::with_capacity(2 * x.len());
                let mut weights = Vec::with_capacity(2 * x.len());
                for (&xi, &wi) in x.iter().zip(&w) {
                    nodes.push(std::f64::consts::SQRT_2 * xi * sigma1);
                    weights.push(p * wi / c);
                    nodes.push(std::f64::consts::SQRT_2 * xi * sigma2);
                    weights.push((1.0 - p) * wi / c);
                }
                Ok(ProbabilityRule { nodes, weights })
            }
            IncrementDistribution::TwoPointLattice => Err(Error::assumption(
                "assumption 1 (strongly non-lattice)",
                "no quadrature rule for the lattice distribution",
            )),
        }
    }
}

/// Gauss-Legendre nodes/weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Hermite nodes/weights for weight `exp(-x^2)` (physicists').
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let pim4 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[n - 1],
            3 => 1.91 * z - 0.91 * x[n - 2],
            _ => 2.0 * z - x[n + 1 - i],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = 2.0 / (pp * pp);
        w[i] = w[n - 1 - i];
    }
    (x, w)
}

/// Gauss-Laguerre nodes/weights for weight `exp(-x)` on [0, inf).
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2])
            }
        };
        let mut pp = 0.0;
        let mut p2 = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0 - z) * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 * z.max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        // Exact for degree <= 31: check x^k against (1-(-1)^{k+1})/(k+1).
        for k in 0..=31usize {
            let q: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert_relative_eq!(q, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn hermite_rule_reproduces_normal_moments() {
        let rule =
            ProbabilityRule::for_distribution(&IncrementDistribution::StandardNormal, 64).unwrap();
        // E X^{2m} = (2m-1)!!
        let mut exact = 1.0;
        for m in 0..10 {
            let k = 2 * m;
            if m > 0 {
                exact *= (k - 1) as f64;
            }
            assert_relative_eq!(
                rule.expectation(|x| x.powi(k as i32)),
                exact,
                max_relative = 1e-10
            );
            assert_relative_eq!(
                rule.expectation(|x| x.powi(k as i32 + 1)),
                0.0,
                epsilon = 1e-8
            );
        }
        assert_relative_eq!(rule.expectation(|_| 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn laguerre_rule_reproduces_centered_exponential_moments() {
        let rule =
            ProbabilityRule::for_distribution(&IncrementDistribution::CenteredExponential, 64)
                .unwrap();
        assert_relative_eq!(rule.expectation(|_| 1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rule.expectation(|x| x), 0.0, epsilon = 1e-10);
        assert_relative_eq!(rule.expectation(|x| x * x), 1.0, max_relative = 1e-10);
        assert_relative_eq!(rule.expectation(|x| x * x * x), 2.0, max_relative = 1e-9);
        assert_relative_eq!(rule.expectation(|x| x.powi(4)), 9.0, max_relative = 1e-9);
        // Laplace transform check: E e^{-s(X+1)} = 1/(1+s).
        let s = 0.35;
        assert_relative_eq!(
            rule.expectation(|x| (-s * (x + 1.0)).exp()),
            1.0 / (1.0 + s),
            max_relative = 1e-12
        );
    }

    #[test]
    fn uniform_rule_reproduces_uniform_moments() {
        let rule =
            ProbabilityRule::for_distribution(&IncrementDistribution::UniformSymmetric, 64)
                .unwrap();
        assert_relative_eq!(rule.expectation(|_| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(rule.expectation(|x| x * x), 1.0, max_relative = 1e-12);
        assert_relative_eq!(rule.expectation(|x| x.powi(4)), 1.8, max_relative = 1e-12);
        assert_relative_eq!(rule.expectation(|x| x.powi(3)), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn mixture_rule_matches_mixture_moments() {
        let dist = IncrementDistribution::GaussianMixture {
            p: 0.3,
            sigma1: (0.4f64).sqrt(),
            sigma2: ((1.0 - 0.3 * 0.4) / 0.7f64).sqrt(),
        };
        let rule = ProbabilityRule::for_distribution(&dist, 48).unwrap();
        assert_relative_eq!(rule.expectation(|x| x * x), 1.0, max_relative = 1e-10);
        assert_relative_eq!(
            rule.expectation(|x| x.powi(4)),
            dist.moments().m4,
            max_relative = 1e-10
        );
    }
}
