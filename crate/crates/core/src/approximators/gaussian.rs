use alloc::vec::Vec;

use crate::error::{check_len, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the tanh Jacobian so saturated actions stay finite.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian over pre-squash actions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHeadOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianHeadOutput {
    /// Clamps `log_std` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        check_len("gaussian log_std", mean.len(), log_std.len())?;
        let log_std = log_std
            .into_iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok(Self { mean, log_std })
    }

    /// Splits a raw network output `[mean | log_std]`. The returned mask marks
    /// coordinates whose log-std was clamped (their gradient is zero).
    pub fn from_network(raw: &[f64]) -> (Self, Vec<bool>) {
        let d = raw.len() / 2;
        let mean = raw[..d].to_vec();
        let mut clamped = Vec::with_capacity(d);
        let log_std = raw[d..]
            .iter()
            .map(|&v| {
                clamped.push(!(LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
                v.clamp(LOG_STD_MIN, LOG_STD_MAX)
            })
            .collect();
        (Self { mean, log_std }, clamped)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|&l| libm::exp(l)).collect()
    }
}

/// Log-density of the diagonal Gaussian at the pre-squash point `x`.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&xi, &m), &ls) in x.iter().zip(mean).zip(log_std) {
        let z = (xi - m) * libm::exp(-ls);
        total += -0.5 * z * z - ls - HALF_LN_2PI;
    }
    total
}

/// Partial derivatives of one coordinate of [`gaussian_log_density`] with
/// respect to `(x, mean, log_std)`.
#[inline]
pub(crate) fn gaussian_log_density_partials(x: f64, mean: f64, log_std: f64) -> (f64, f64, f64) {
    let inv_std = libm::exp(-log_std);
    let z = (x - mean) * inv_std;
    (-z * inv_std, z * inv_std, z * z - 1.0)
}

/// `Σ ln(1 - tanh(x)² + ε)`, the log-Jacobian of the tanh squash.
pub fn squash_correction(x: &[f64]) -> f64 {
    x.iter()
        .map(|&xi| {
            let t = libm::tanh(xi);
            libm::log(1.0 - t * t + SQUASH_EPS)
        })
        .sum()
}

/// Derivative of one coordinate of [`squash_correction`] given `t = tanh(x)`.
#[inline]
pub(crate) fn squash_correction_partial(t: f64) -> f64 {
    let one_minus = 1.0 - t * t;
    -2.0 * t * one_minus / (one_minus + SQUASH_EPS)
}

/// Reparameterized tanh-squashed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    /// `mean + std · noise`
    pub pre: Vec<f64>,
    /// `tanh(pre)`, inside the open cube.
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Draws `tanh(mean + exp(log_std) · noise)` and its log-density.
pub fn gaussian_sample(head: &GaussianHeadOutput, noise: &[f64]) -> Result<SquashedSample> {
    check_len("gaussian noise", head.dim(), noise.len())?;
    let pre: Vec<f64> = head
        .mean
        .iter()
        .zip(&head.log_std)
        .zip(noise)
        .map(|((&m, &ls), &e)| m + libm::exp(ls) * e)
        .collect();
    let action = pre.iter().map(|&p| libm::tanh(p)).collect();
    let log_prob = gaussian_log_density(&pre, &head.mean, &head.log_std) - squash_correction(&pre);
    Ok(SquashedSample {
        pre,
        action,
        log_prob,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_standard_normal, stream, Stream};
    use alloc::vec;

    #[test]
    fn standard_head_at_zero_noise() {
        let head = GaussianHeadOutput::new(vec![0.0], vec![0.0]).unwrap();
        let s = gaussian_sample(&head, &[0.0]).unwrap();
        assert_eq!(s.action, vec![0.0]);
        // -½ln(2π) - ln(1 + ε)
        let expected = -0.5 * (2.0 * core::f64::consts::PI).ln() - (1.0 + SQUASH_EPS).ln();
        assert!((s.log_prob - expected).abs() < 1e-15);
        assert!((s.log_prob + 0.9189).abs() < 1e-4);
    }

    #[test]
    fn zero_noise_returns_tanh_of_mean() {
        let head = GaussianHeadOutput::new(vec![0.3, -1.2, 4.0], vec![-1.0, 0.5, 1.9]).unwrap();
        let s = gaussian_sample(&head, &[0.0; 3]).unwrap();
        for (a, m) in s.action.iter().zip(&head.mean) {
            assert!((a - m.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let (head, mask) = GaussianHeadOutput::from_network(&[0.0, 0.0, -30.0, 5.0]);
        assert_eq!(head.log_std, vec![LOG_STD_MIN, LOG_STD_MAX]);
        assert_eq!(mask, vec![true, true]);
        let huge = GaussianHeadOutput::new(vec![0.0], vec![1e6]).unwrap();
        let s = gaussian_sample(&huge, &[3.0]).unwrap();
        assert!(s.log_prob.is_finite());
    }

    #[test]
    fn pre_squash_samples_are_centered_on_the_mean() {
        let head = GaussianHeadOutput::new(vec![0.4, -0.7], vec![-0.5, 0.3]).unwrap();
        let mut rng = stream(4, Stream::Policy);
        let n = 100_000;
        let mut sums = [0.0; 2];
        let mut noise = [0.0; 2];
        for _ in 0..n {
            fill_standard_normal(&mut rng, &mut noise);
            let s = gaussian_sample(&head, &noise).unwrap();
            sums[0] += s.pre[0];
            sums[1] += s.pre[1];
        }
        for (d, sum) in sums.iter().enumerate() {
            let mean = sum / n as f64;
            let sigma = head.log_std[d].exp();
            assert!((mean - head.mean[d]).abs() < 3.0 * sigma / (n as f64).sqrt());
        }
    }

    /// Importance-sampling estimate of ∫ exp(log_prob) da over (-1,1)^d using a
    /// uniform proposal.
    #[test]
    fn squashed_density_integrates_to_one() {
        let mut rng = stream(5, Stream::Policy);
        let heads = [
            GaussianHeadOutput::new(vec![0.2], vec![-0.3]).unwrap(),
            GaussianHeadOutput::new(vec![0.1, -0.2], vec![-0.4, -0.1]).unwrap(),
            GaussianHeadOutput::new(vec![0.0, 0.3, -0.1], vec![-0.2, -0.5, -0.3]).unwrap(),
        ];
        for head in &heads {
            let d = head.dim();
            let n = 100_000;
            let volume = (1u32 << d) as f64;
            let mut acc = 0.0;
            let mut sample_rng = || rand::Rng::random_range(&mut rng, -1.0f64..1.0);
            for _ in 0..n {
                let a: Vec<f64> = (0..d).map(|_| sample_rng()).collect();
                let x: Vec<f64> = a.iter().map(|v| v.atanh()).collect();
                let lp = gaussian_log_density(&x, &head.mean, &head.log_std) - squash_correction(&x);
                acc += lp.exp();
            }
            let estimate = volume * acc / n as f64;
            assert!((estimate - 1.0).abs() < 0.01, "d={d}: {estimate}");
        }
    }

    #[test]
    fn density_partials_match_finite_differences() {
        let (x, m, ls) = (0.37, -0.2, 0.4);
        let (dx, dm, dls) = gaussian_log_density_partials(x, m, ls);
        let f = |x: f64, m: f64, ls: f64| gaussian_log_density(&[x], &[m], &[ls]);
        let h = 1e-6;
        assert!((dx - (f(x + h, m, ls) - f(x - h, m, ls)) / (2.0 * h)).abs() < 1e-8);
        assert!((dm - (f(x, m + h, ls) - f(x, m - h, ls)) / (2.0 * h)).abs() < 1e-8);
        assert!((dls - (f(x, m, ls + h) - f(x, m, ls - h)) / (2.0 * h)).abs() < 1e-8);
        let t = 0.8f64.tanh();
        let num = (squash_correction(&[0.8 + h]) - squash_correction(&[0.8 - h])) / (2.0 * h);
        assert!((squash_correction_partial(t) - num).abs() < 1e-8);
    }
}
