//! Compensated summation.
//!
//! All reductions in the crate go through [`NeumaierSum`] so that the
//! volume-conservation identities hold to a few ulps even for very long
//! series.

use std::iter::FromIterator;
use std::ops::AddAssign;

/// Kahan–Babuška (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Arithmetic mean with one refinement pass.
///
/// The refinement makes the mean of a constant slice exactly that constant,
/// so deviations of constant series are exactly zero.
pub fn mean(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = sum(xs.iter().copied()) / n;
    m + sum(xs.iter().map(|x| x - m)) / n
}

/// Biased (1/N) covariance of two equal-length slices about their means.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(xs), 2.0);
    }

    #[test]
    fn constant_mean_is_exact() {
        for &c in &[0.1, 1.0 / 3.0, 7.3e-5, 123456.789] {
            for n in 1..40 {
                let xs = vec![c; n];
                assert_eq!(mean(&xs), c, "c={c} n={n}");
            }
        }
    }

    #[test]
    fn long_sum_of_tenths() {
        let s = sum(std::iter::repeat_n(0.1, 1_000_000));
        assert!((s - 100_000.0).abs() < 1e-9);
    }

    #[test]
    fn covariance_of_identical_is_variance() {
        let xs = [1.0, 3.0];
        assert_eq!(covariance(&xs, &xs), 1.0);
        let ys = [3.0, 1.0];
        assert_eq!(covariance(&xs, &ys), -1.0);
    }
}
