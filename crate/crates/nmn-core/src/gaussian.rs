//! Diagonal-Gaussian policy head: sampling, clipping and log-likelihoods.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Per-step action-distribution parameters (mean and standard deviation per
/// action dimension; the covariance is diagonal with entries `sigma^2`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianPolicyOutput {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianPolicyOutput {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::dimension("gaussian policy output", mu.len(), sigma.len()));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Invariant("gaussian sigma must be strictly positive".into()));
        }
        Ok(GaussianPolicyOutput { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Per-dimension action interval; unbounded dimensions use infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ActionBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ActionBounds {
    pub const UNBOUNDED: ActionBounds = ActionBounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn symmetric(half_width: f64) -> Self {
        ActionBounds {
            lo: -half_width,
            hi: half_width,
        }
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Draws `raw ~ N(mu, diag(sigma^2))` and clips componentwise to the action
/// bounds; the clipped action is the one executed and stored, and the one
/// the trainer's log-likelihoods are evaluated at.
pub fn sample_action<R: Rng>(
    policy: &GaussianPolicyOutput,
    bounds: &[ActionBounds],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut raw = Vec::with_capacity(policy.dim());
    let mut action = Vec::with_capacity(policy.dim());
    for i in 0..policy.dim() {
        let n: f64 = rng.sample(StandardNormal);
        let r = policy.mu[i] + policy.sigma[i] * n;
        raw.push(r);
        action.push(bounds[i].clip(r));
    }
    (action, raw)
}

/// `ln pi(a)` of the diagonal Gaussian:
/// `-(ln|S| + (a-mu)' S^-1 (a-mu) + m ln 2pi) / 2` with `S = diag(sigma^2)`.
pub fn log_likelihood(policy: &GaussianPolicyOutput, action: &[f64]) -> f64 {
    let m = policy.dim();
    debug_assert_eq!(action.len(), m);
    let mut acc = -(m as f64) * 0.5 * LN_2PI;
    for i in 0..m {
        let s = policy.sigma[i];
        let d = (action[i] - policy.mu[i]) / s;
        acc -= s.ln() + 0.5 * d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn standard_normal_log_density_at_zero() {
        let p = GaussianPolicyOutput::new(vec![0.0], vec![1.0]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((log_likelihood(&p, &[0.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn mean_maximises_likelihood_and_doubling_sigma_costs_ln2() {
        let p = GaussianPolicyOutput::new(vec![0.3], vec![0.8]).unwrap();
        let at_mean = log_likelihood(&p, &[0.3]);
        for a in [-1.0, 0.0, 0.5, 2.0] {
            assert!(log_likelihood(&p, &[a]) <= at_mean);
        }
        let wide = GaussianPolicyOutput::new(vec![0.3], vec![1.6]).unwrap();
        assert!((at_mean - log_likelihood(&wide, &[0.3]) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn tiny_sigma_keeps_action_at_mean_and_clipping_applies() {
        let mut rng = stream_rng(1, 0);
        let p = GaussianPolicyOutput::new(vec![3.0], vec![1e-12]).unwrap();
        let (a, _) = sample_action(&p, &[ActionBounds::symmetric(20.0)], &mut rng);
        assert!((a[0] - 3.0).abs() < 1e-9);

        let p = GaussianPolicyOutput::new(vec![50.0], vec![1e-12]).unwrap();
        let (a, raw) = sample_action(&p, &[ActionBounds::symmetric(20.0)], &mut rng);
        assert_eq!(a[0], 20.0);
        assert!(raw[0] > 20.0);
    }

    #[test]
    fn monte_carlo_mean_of_unclipped_samples() {
        let mut rng = stream_rng(11, 0);
        let p = GaussianPolicyOutput::new(vec![0.0], vec![1.0]).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (_, raw) = sample_action(&p, &[ActionBounds::UNBOUNDED], &mut rng);
            sum += raw[0];
        }
        assert!((sum / n as f64).abs() < 0.01);
    }

    #[test]
    fn nonpositive_sigma_is_rejected() {
        assert!(GaussianPolicyOutput::new(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianPolicyOutput::new(vec![0.0], vec![-1.0]).is_err());
    }
}
