//! Calibrated timing models.
//!
//! Proof generation is the one stochastic cost in the simulation: samples
//! come from a log-normal distribution, `scale_factor * exp(N(mu, sigma^2))`
//! seconds. Everything else (handshakes, signing, verification) is charged
//! at small constant costs so proof generation stays the dominant term.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Default log-mean of the proof-generation model.
pub const DEFAULT_MU: f64 = 1.025;
/// Default log-standard-deviation of the proof-generation model.
pub const DEFAULT_SIGMA: f64 = 0.145;

/// Log-normal timing model for proof generation.
///
/// `mu` and `sigma` are dimensionless parameters of the underlying normal;
/// `scale_factor` multiplies every sample and is the knob perturbation
/// sweeps turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    mu: f64,
    sigma: f64,
    scale_factor: f64,
}

impl LatencyModel {
    /// Model with `scale_factor = 1.0`. Panics if `sigma < 0`.
    pub fn new(mu: f64, sigma: f64) -> Self {
        assert!(sigma >= 0.0, "sigma must be non-negative");
        assert!(mu.is_finite() && sigma.is_finite());
        LatencyModel {
            mu,
            sigma,
            scale_factor: 1.0,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// One proof-generation sample in seconds: `scale * exp(mu + sigma*z)`.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.scale_factor * (self.mu + self.sigma * z).exp()
    }

    /// Closed-form median, `scale * e^mu`.
    pub fn theoretical_median(&self) -> f64 {
        self.scale_factor * self.mu.exp()
    }

    /// Scale the model by `(1 + factor)`; `mu` and `sigma` are untouched.
    /// Panics unless `factor > -1`.
    pub fn perturb(&self, factor: f64) -> Self {
        assert!(factor > -1.0, "perturbation must keep the scale positive");
        LatencyModel {
            mu: self.mu,
            sigma: self.sigma,
            scale_factor: self.scale_factor * (1.0 + factor),
        }
    }

    /// CDF of the model at `x` seconds.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.sigma == 0.0 {
            // Degenerate: all mass at scale * e^mu.
            return if x >= self.theoretical_median() {
                1.0
            } else {
                0.0
            };
        }
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        std_normal.cdf(((x / self.scale_factor).ln() - self.mu) / self.sigma)
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::new(DEFAULT_MU, DEFAULT_SIGMA)
    }
}

/// Constant simulated costs for the non-proof primitives, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Channel establishment (resolution + encapsulation).
    pub handshake_s: f64,
    /// Producing one signature.
    pub sign_s: f64,
    /// Checking one signature.
    pub verify_sig_s: f64,
    /// Checking one policy proof.
    pub proof_verify_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            handshake_s: 0.001,
            sign_s: 0.0005,
            verify_sig_s: 0.0005,
            proof_verify_s: 0.005,
        }
    }
}

/// Two-sided Kolmogorov-Smirnov statistic between `samples` and the model's
/// distribution. Used as the goodness-of-fit gate on pooled proof times.
pub fn ks_statistic(samples: &[f64], model: &LatencyModel) -> f64 {
    assert!(!samples.is_empty(), "KS statistic needs samples");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = model.cdf(*x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use statrs::statistics::Median;

    fn lower_median(samples: &mut [f64]) -> f64 {
        samples.sort_by(f64::total_cmp);
        samples[(samples.len() - 1) / 2]
    }

    #[test]
    fn zero_sigma_collapses_to_the_median_exactly() {
        let model = LatencyModel::new(1.025, 0.0);
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            assert_eq!(model.sample(&mut rng), 1.025_f64.exp());
        }
    }

    #[test]
    fn default_sample_median_matches_calibration() {
        let model = LatencyModel::default();
        let mut rng = rng_from_seed(0);
        let mut samples: Vec<f64> = (0..10_000).map(|_| model.sample(&mut rng)).collect();
        let median = lower_median(&mut samples);
        assert!((2.74..=2.84).contains(&median), "median {median}");
    }

    #[test]
    fn default_sample_stddev_matches_calibration() {
        let model = LatencyModel::default();
        let mut rng = rng_from_seed(0);
        let samples: Vec<f64> = (0..10_000).map(|_| model.sample(&mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let sd = var.sqrt();
        assert!((0.36..=0.46).contains(&sd), "stddev {sd}");
    }

    #[test]
    fn theoretical_median_agrees_with_independent_distribution_library() {
        // Oracle: statrs's log-normal median, an implementation independent
        // of our scale * e^mu closed form.
        let oracle = statrs::distribution::LogNormal::new(1.025, 0.145)
            .unwrap()
            .median();
        let model = LatencyModel::default();
        assert!((model.theoretical_median() - oracle).abs() < 1e-12);
        // Frozen value from the oracle.
        assert!((model.theoretical_median() - 2.787095460565851).abs() < 1e-12);
    }

    #[test]
    fn theoretical_median_identity_and_scaling() {
        assert_eq!(LatencyModel::new(0.0, 0.1).theoretical_median(), 1.0);
        let scaled = LatencyModel::default().perturb(-0.2);
        // 0.8 * e^1.025, frozen from the closed form.
        assert!((scaled.theoretical_median() - 2.229676368452681).abs() < 1e-12);
    }

    #[test]
    fn perturb_zero_is_identity() {
        let model = LatencyModel::default();
        assert_eq!(model.perturb(0.0), model);
    }

    #[test]
    fn perturb_down_then_up_restores_scale() {
        let model = LatencyModel::default().perturb(-0.2).perturb(0.25);
        assert!((model.scale_factor() - 1.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn perturb_rejects_factor_at_or_below_minus_one() {
        LatencyModel::default().perturb(-1.0);
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let model = LatencyModel::default();
        let mut a = rng_from_seed(7);
        let mut b = rng_from_seed(7);
        for _ in 0..1_000 {
            assert_eq!(
                model.sample(&mut a).to_bits(),
                model.sample(&mut b).to_bits()
            );
        }
    }

    #[test]
    fn scaling_is_exactly_multiplicative_on_the_stream() {
        let base = LatencyModel::default();
        let scaled = base.perturb(1.5); // scale 2.5
        let mut a = rng_from_seed(11);
        let mut b = rng_from_seed(11);
        for _ in 0..1_000 {
            let x = base.sample(&mut a);
            let y = scaled.sample(&mut b);
            assert_eq!(y.to_bits(), (2.5 * x).to_bits());
        }
    }

    #[test]
    fn ks_fit_below_threshold_at_ten_thousand_samples() {
        let model = LatencyModel::default();
        let mut rng = rng_from_seed(0);
        let samples: Vec<f64> = (0..10_000).map(|_| model.sample(&mut rng)).collect();
        let d = ks_statistic(&samples, &model);
        assert!(d < 0.02, "KS D = {d}");
    }

    #[test]
    fn ks_detects_a_wrong_model() {
        let model = LatencyModel::default();
        let shifted = LatencyModel::new(1.2, 0.145);
        let mut rng = rng_from_seed(0);
        let samples: Vec<f64> = (0..10_000).map(|_| model.sample(&mut rng)).collect();
        assert!(ks_statistic(&samples, &shifted) > 0.2);
    }
}
