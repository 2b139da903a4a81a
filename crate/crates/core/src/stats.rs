//! Mergeable moment accumulators and the deterministic batch runner.
//!
//! Batches are accumulated independently and merged in a fixed order derived
//! from the batch index, so parallel estimates are bit-identical regardless
//! of worker count.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::rng::path_rng;

/// Running mean / second central moment (Welford), mergeable via Chan's
/// pairwise update.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let d = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Bivariate moments, for correlations.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments2 {
    pub count: u64,
    pub mean_x: f64,
    pub mean_y: f64,
    m2x: f64,
    m2y: f64,
    cxy: f64,
}

impl Moments2 {
    #[inline]
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2x += dx * (x - self.mean_x);
        self.m2y += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &Moments2) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.mean_x += dx * n2 / n;
        self.mean_y += dy * n2 / n;
        self.m2x += other.m2x + dx * dx * n1 * n2 / n;
        self.m2y += other.m2y + dy * dy * n1 * n2 / n;
        self.cxy += other.cxy + dx * dy * n1 * n2 / n;
        self.count += other.count;
    }

    pub fn var_x(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2x / (self.count - 1) as f64
        }
    }

    pub fn var_y(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2y / (self.count - 1) as f64
        }
    }

    pub fn covariance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.cxy / (self.count - 1) as f64
        }
    }

    pub fn correlation(&self) -> f64 {
        let d = (self.var_x() * self.var_y()).sqrt();
        if d == 0.0 {
            0.0
        } else {
            self.covariance() / d
        }
    }
}

/// Merge-only accumulator usable as a parallel reduction target.
pub trait Accumulator: Default + Send {
    fn merge(&mut self, other: &Self);
}

impl Accumulator for Moments {
    fn merge(&mut self, other: &Self) {
        Moments::merge(self, other);
    }
}

impl Accumulator for Moments2 {
    fn merge(&mut self, other: &Self) {
        Moments2::merge(self, other);
    }
}

/// Element-wise merge; an empty (default) vector adopts the other side.
impl<A: Accumulator + Clone> Accumulator for Vec<A> {
    fn merge(&mut self, other: &Self) {
        if other.is_empty() {
            return;
        }
        if self.is_empty() {
            *self = other.clone();
            return;
        }
        assert_eq!(self.len(), other.len(), "accumulator shape mismatch");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

/// Default batch size for the parallel runner. Part of the reproducibility
/// contract: results are defined by (master_seed, paths, batch size) alone.
pub const BATCH_SIZE: u64 = 8192;

/// Run `per_path(path_index, rng, acc)` over `paths` independent substreams,
/// in fixed batches merged in batch order. Bit-identical for any worker
/// count; on error, the failure from the lowest batch index wins.
pub fn run_batched<A, F>(paths: u64, master_seed: u64, per_path: F) -> Result<A>
where
    A: Accumulator,
    F: Fn(u64, &mut ChaCha8Rng, &mut A) -> Result<()> + Sync,
{
    run_batched_with(paths, master_seed, BATCH_SIZE, per_path)
}

/// [`run_batched`] with an explicit batch size (which is part of the result's
/// identity: changing it regroups the merge order).
pub fn run_batched_with<A, F>(paths: u64, master_seed: u64, batch: u64, per_path: F) -> Result<A>
where
    A: Accumulator,
    F: Fn(u64, &mut ChaCha8Rng, &mut A) -> Result<()> + Sync,
{
    assert!(batch >= 1);
    let batches = paths.div_ceil(batch);
    let partials: Vec<Result<A>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * batch;
            let hi = ((b + 1) * batch).min(paths);
            let mut acc = A::default();
            for p in lo..hi {
                let mut rng = path_rng(master_seed, p);
                per_path(p, &mut rng, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = A::default();
    for partial in partials {
        total.merge(&partial?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn merge_equals_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 + 11) % 101) as f64 * 0.31).collect();
        let mut all = Moments::default();
        for &x in &xs {
            all.push(x);
        }
        let mut a = Moments::default();
        let mut b = Moments::default();
        for &x in &xs[..317] {
            a.push(x);
        }
        for &x in &xs[317..] {
            b.push(x);
        }
        a.merge(&b);
        assert_eq!(a.count, all.count);
        assert_relative_eq!(a.mean, all.mean, epsilon = 1e-12);
        assert_relative_eq!(a.variance(), all.variance(), epsilon = 1e-9);
    }

    #[test]
    fn bivariate_correlation_of_identical_series_is_one() {
        let mut m = Moments2::default();
        for i in 0..100 {
            let x = (i as f64).sin();
            m.push(x, x);
        }
        assert_relative_eq!(m.correlation(), 1.0, epsilon = 1e-12);
    }
}
