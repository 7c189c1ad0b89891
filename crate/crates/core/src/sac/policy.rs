//! Output heads of the hybrid policy and the squashed-Gaussian density.

use std::f64::consts::{LN_2, PI};

use ndarray::ArrayView1;

pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-observation view of the policy network output laid out as
/// `[logits(K), mu(K), log_sigma(K)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHeads {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub mu: Vec<f64>,
    /// Clamped to `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub log_sigma: Vec<f64>,
    /// Set where the raw output was outside the clamp range.
    pub clamped: Vec<bool>,
}

impl PolicyHeads {
    pub fn from_output(row: ArrayView1<f64>, arity: usize) -> Self {
        debug_assert_eq!(row.len(), 3 * arity);
        let logits: Vec<f64> = row.iter().take(arity).copied().collect();
        let log_probs = log_softmax(&logits);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        let mu = row.iter().skip(arity).take(arity).copied().collect();
        let raw: Vec<f64> = row.iter().skip(2 * arity).copied().collect();
        Self {
            probs,
            log_probs,
            mu,
            log_sigma: raw.iter().map(|l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)).collect(),
            clamped: raw.iter().map(|l| !(LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(l)).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.probs.len()
    }

    pub fn sigma(&self, d: usize) -> f64 {
        self.log_sigma[d].exp()
    }

    /// Pre-squash coordinate for standard-normal noise `xi` on branch `d`.
    pub fn zeta(&self, d: usize, xi: f64) -> f64 {
        self.mu[d] + self.sigma(d) * xi
    }

    /// `log pi(d, u)` with `u` given through its pre-squash coordinate.
    pub fn log_density(&self, d: usize, zeta: f64, half_width: f64) -> f64 {
        let xi = (zeta - self.mu[d]) / self.sigma(d);
        self.log_probs[d] - 0.5 * xi * xi - self.log_sigma[d] - HALF_LN_2PI - half_width.ln()
            - log_one_minus_tanh_sq(zeta)
    }

    /// Index of the most probable choice, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `ln(1 - tanh(z)^2)` without cancellation for large `|z|`.
pub fn log_one_minus_tanh_sq(z: f64) -> f64 {
    let a = z.abs();
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Standard normal density, for tests and diagnostics.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_normalized_and_stable() {
        let lp = log_softmax(&[1000.0, 999.0, -1000.0]);
        let s: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(lp.iter().all(|l| l.is_finite() || *l == f64::NEG_INFINITY));
    }

    #[test]
    fn squash_jacobian_matches_direct_form() {
        for z in [-3.0, -0.4, 0.0, 0.7, 2.5] {
            let t: f64 = f64::tanh(z);
            assert!((log_one_minus_tanh_sq(z) - (1.0 - t * t).ln()).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(400.0).is_finite());
    }

    #[test]
    fn heads_clamp_log_sigma() {
        let h = PolicyHeads::from_output(array![0.0, 0.0, 0.1, -0.1, -30.0, 5.0].view(), 2);
        assert_eq!(h.log_sigma, vec![LOG_SIGMA_MIN, LOG_SIGMA_MAX]);
        assert_eq!(h.clamped, vec![true, true]);
        assert_eq!(h.argmax(), 0);
    }
}
