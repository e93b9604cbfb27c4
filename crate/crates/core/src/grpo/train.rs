use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bandit::{BanditAgent, BanditFamily};
use super::policy::{grad_norm, policy_gradient, GradientError, ToyPolicy};
use super::{group_advantages, ClipConfig, DEFAULT_EPS_STD};
use crate::rollout::{run_group, Environment};

fn default_g() -> usize {
    16
}
fn default_eps_low() -> f64 {
    0.2
}
fn default_eps_high() -> f64 {
    0.28
}
fn default_eps_std() -> f64 {
    DEFAULT_EPS_STD
}
fn default_lr() -> f64 {
    1.0
}
fn default_steps() -> usize {
    200
}
fn default_temperature() -> f64 {
    1.0
}
fn default_logit_bound() -> f64 {
    50.0
}

/// Trainer config file. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "G", alias = "g", default = "default_g")]
    pub g: usize,
    #[serde(default = "default_eps_low")]
    pub eps_low: f64,
    #[serde(default = "default_eps_high")]
    pub eps_high: f64,
    #[serde(default = "default_eps_std")]
    pub eps_std: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// One policy update per step.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Divergence threshold on the mean absolute logit.
    #[serde(default = "default_logit_bound")]
    pub max_mean_abs_logit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn clip(&self) -> ClipConfig {
        ClipConfig {
            eps_low: self.eps_low,
            eps_high: self.eps_high,
        }
    }

    fn check(&self) -> Result<(), TrainError> {
        self.clip().check().map_err(TrainError::Config)?;
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.g == 0 {
            return bad("G must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and nonnegative");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.eps_std.is_finite() && self.eps_std >= 0.0) {
            return bad("eps_std must be finite and nonnegative");
        }
        Ok(())
    }
}

/// One learning-curve line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean reward of the group sampled before this step's update.
    pub mean_reward: f64,
    pub mean_pass: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub policy: ToyPolicy,
}

impl TrainOutcome {
    /// First step at which the trailing `window`-step mean reward reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64, window: usize) -> Option<usize> {
        let w = window.max(1);
        self.curve.windows(w).find_map(|pts| {
            let mean = pts.iter().map(|p| p.mean_reward).sum::<f64>() / w as f64;
            (mean >= threshold).then(|| pts[w - 1].step)
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("bad config: {0}")]
    Config(String),
    #[error("rollout failed at step {step}: {message}")]
    Rollout { step: usize, message: String },
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error("diverged at step {step}: mean |logit| {mean_abs_logit:.3} > {bound}, last grad norm {grad_norm:.3e}")]
    Divergence {
        step: usize,
        mean_abs_logit: f64,
        bound: f64,
        grad_norm: f64,
        curve: Vec<CurvePoint>,
    },
}

/// Group rollouts scored by the rubric, one clipped-surrogate ascent step per group.
/// Rollout seeds depend only on `(cfg.seed, step, index)`, so the curve is
/// deterministic at any thread count.
pub fn train_toy(
    env: &Environment,
    family: &BanditFamily,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.check()?;
    let family = Arc::new(family.clone());
    let clip = cfg.clip();
    let mut policy = family.initial_policy(cfg.temperature);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let snapshot = Arc::new(policy.clone());
        let agent = BanditAgent {
            family: Arc::clone(&family),
            policy: Arc::clone(&snapshot),
        };
        let base = cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((step * cfg.g) as u64);
        let group = run_group(env, &family.task, &agent, cfg.g, base, None);
        let rewards = group.rewards().map_err(|e| TrainError::Rollout {
            step,
            message: e.to_string(),
        })?;
        let adv =
            group_advantages(&rewards, cfg.eps_std).expect("group is nonempty and eps checked");
        let mut samples = Vec::with_capacity(3 * cfg.g);
        let mut passes = 0usize;
        for (ep, a) in group.episodes.iter().zip(&adv.values) {
            let ep = ep.as_ref().expect("rewards() checked every episode");
            passes += usize::from(ep.report.pass);
            let s = family
                .samples(&ep.trajectory, &snapshot, *a)
                .ok_or_else(|| TrainError::Rollout {
                    step,
                    message: format!(
                        "episode {} made choices outside the bandit",
                        ep.trajectory.rollout_idx
                    ),
                })?;
            samples.extend(s);
        }
        let grad = policy_gradient(&policy, &samples, &clip)?;
        let norm = grad_norm(&grad);
        policy.apply(&grad, cfg.learning_rate);
        let mean_reward = rewards
            .iter()
            .map(|r| *r.numer() as f64 / *r.denom() as f64)
            .sum::<f64>()
            / cfg.g as f64;
        curve.push(CurvePoint {
            step,
            mean_reward,
            mean_pass: passes as f64 / cfg.g as f64,
            grad_norm: norm,
        });
        let m = policy.mean_abs_logit();
        if !m.is_finite() || m > cfg.max_mean_abs_logit {
            return Err(TrainError::Divergence {
                step,
                mean_abs_logit: m,
                bound: cfg.max_mean_abs_logit,
                grad_norm: norm,
                curve,
            });
        }
    }
    Ok(TrainOutcome { curve, policy })
}
