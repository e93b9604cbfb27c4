//! Group-relative advantages, the asymmetric clipped surrogate, and a tabular
//! toy policy trained on rubric rewards.

mod bandit;
mod policy;
mod train;

pub use bandit::{BanditAgent, BanditFamily, BANDIT_STATES};
pub use policy::{policy_gradient, Gradient, GradientError, Sample, ToyPolicy};
pub use train::{train_toy, CurvePoint, TrainConfig, TrainError, TrainOutcome};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub const DEFAULT_EPS_STD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdvantageError {
    #[error("cannot normalize an empty group")]
    EmptyGroup,
    #[error("eps must be finite and nonnegative, got {0}")]
    BadEps(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub eps: f64,
}

fn big(r: &Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// `A_i = (r_i - mean) / (std_pop + eps)`. Mean and variance are exact, so a
/// shift of every reward leaves the result bit-identical and a zero-variance
/// group is detected exactly.
pub fn group_advantages(
    rewards: &[Ratio<u64>],
    eps: f64,
) -> Result<AdvantageVector, AdvantageError> {
    if rewards.is_empty() {
        return Err(AdvantageError::EmptyGroup);
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(AdvantageError::BadEps(eps));
    }
    let n = BigRational::from_integer(BigInt::from(rewards.len()));
    let rs: Vec<BigRational> = rewards.iter().map(big).collect();
    let mean = rs.iter().fold(BigRational::zero(), |a, r| a + r) / &n;
    let dev: Vec<BigRational> = rs.iter().map(|r| r - &mean).collect();
    let var = dev.iter().fold(BigRational::zero(), |a, d| a + d * d) / &n;
    if var.is_zero() {
        return Ok(AdvantageVector {
            values: vec![0.0; rewards.len()],
            eps,
        });
    }
    let std = var.to_f64().expect("variance is finite").sqrt();
    let values = dev
        .iter()
        .map(|d| d.to_f64().expect("deviation is finite") / (std + eps))
        .collect();
    Ok(AdvantageVector { values, eps })
}

/// Asymmetric trust region `[1 - eps_low, 1 + eps_high]` on the importance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_high: 0.28,
        }
    }
}

impl ClipConfig {
    pub fn new(eps_low: f64, eps_high: f64) -> Result<Self, String> {
        let c = Self { eps_low, eps_high };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), String> {
        if 0.0 < self.eps_low && self.eps_low <= self.eps_high && self.eps_high < 1.0 {
            Ok(())
        } else {
            Err(format!(
                "clip bounds need 0 < eps_low <= eps_high < 1, got eps_low={} eps_high={}",
                self.eps_low, self.eps_high
            ))
        }
    }

    pub fn clip(&self, ratio: f64) -> f64 {
        ratio.clamp(1.0 - self.eps_low, 1.0 + self.eps_high)
    }

    pub fn in_band(&self, ratio: f64) -> bool {
        (1.0 - self.eps_low..=1.0 + self.eps_high).contains(&ratio)
    }
}

/// `min(ratio * A, clip(ratio) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, cfg: &ClipConfig) -> f64 {
    (ratio * advantage).min(cfg.clip(ratio) * advantage)
}

/// Whether the unclipped branch is the one `min` picks, i.e. the sample has gradient.
pub(crate) fn unclipped_active(ratio: f64, advantage: f64, cfg: &ClipConfig) -> bool {
    ratio * advantage <= cfg.clip(ratio) * advantage
}

#[cfg(test)]
mod tests;
