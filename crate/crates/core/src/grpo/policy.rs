use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{clipped_term, unclipped_active, ClipConfig};

/// Softmax policy over a logit table, one row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub temperature: f64,
    pub logits: BTreeMap<String, Vec<f64>>,
}

/// One action taken under the sampling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: String,
    pub action: usize,
    pub old_prob: f64,
    pub advantage: f64,
}

/// Same shape as the logit table.
pub type Gradient = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GradientError {
    #[error("stale sample for {state}/{action}: old probability {old_prob}")]
    StaleSample {
        state: String,
        action: usize,
        old_prob: f64,
    },
    #[error("sample names unknown state {state} or action {action}")]
    UnknownAction { state: String, action: usize },
}

impl ToyPolicy {
    /// All-zero logits: uniform over each state's actions.
    pub fn uniform<'a>(
        states: impl IntoIterator<Item = (&'a str, usize)>,
        temperature: f64,
    ) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        Self {
            temperature,
            logits: states
                .into_iter()
                .map(|(s, n)| (s.to_string(), vec![0.0; n]))
                .collect(),
        }
    }

    pub fn probs(&self, state: &str) -> Option<Vec<f64>> {
        let row = self.logits.get(state)?;
        let scaled: Vec<f64> = row.iter().map(|l| l / self.temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scaled.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        Some(exp.into_iter().map(|e| e / z).collect())
    }

    pub fn prob(&self, state: &str, action: usize) -> Option<f64> {
        self.probs(state)?.get(action).copied()
    }

    pub fn mean_abs_logit(&self) -> f64 {
        let (sum, n) = self
            .logits
            .values()
            .flatten()
            .fold((0.0, 0usize), |(s, n), l| (s + l.abs(), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Gradient ascent step.
    pub fn apply(&mut self, grad: &Gradient, learning_rate: f64) {
        for (state, g) in grad {
            if let Some(row) = self.logits.get_mut(state) {
                for (l, d) in row.iter_mut().zip(g) {
                    *l += learning_rate * d;
                }
            }
        }
    }

    /// Mean clipped surrogate over `samples`, with ratio = current / old probability.
    pub fn surrogate(&self, samples: &[Sample], cfg: &ClipConfig) -> Result<f64, GradientError> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for s in samples {
            let p = self.checked_prob(s)?;
            total += clipped_term(p / s.old_prob, s.advantage, cfg);
        }
        Ok(total / samples.len() as f64)
    }

    fn checked_prob(&self, s: &Sample) -> Result<f64, GradientError> {
        if !(s.old_prob > 0.0 && s.old_prob.is_finite()) {
            return Err(GradientError::StaleSample {
                state: s.state.clone(),
                action: s.action,
                old_prob: s.old_prob,
            });
        }
        self.prob(&s.state, s.action)
            .ok_or_else(|| GradientError::UnknownAction {
                state: s.state.clone(),
                action: s.action,
            })
    }
}

pub fn grad_norm(g: &Gradient) -> f64 {
    g.values().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Analytic gradient of [`ToyPolicy::surrogate`] with respect to the logits.
///
/// For an active (unclipped) sample the term is `rho * A` with
/// `d rho / d l_j = rho * (1[j = a] - pi_j) / T`; clipped samples contribute nothing.
pub fn policy_gradient(
    policy: &ToyPolicy,
    samples: &[Sample],
    cfg: &ClipConfig,
) -> Result<Gradient, GradientError> {
    let mut grad: Gradient = policy
        .logits
        .iter()
        .map(|(k, v)| (k.clone(), vec![0.0; v.len()]))
        .collect();
    if samples.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        policy.checked_prob(s)?;
        let probs = policy.probs(&s.state).expect("state checked");
        let rho = probs[s.action] / s.old_prob;
        if s.advantage == 0.0 || !unclipped_active(rho, s.advantage, cfg) {
            continue;
        }
        let row = grad.get_mut(&s.state).expect("state checked");
        let coef = scale * s.advantage * rho / policy.temperature;
        for (j, g) in row.iter_mut().enumerate() {
            let indicator = if j == s.action { 1.0 } else { 0.0 };
            *g += coef * (indicator - probs[j]);
        }
    }
    Ok(grad)
}
