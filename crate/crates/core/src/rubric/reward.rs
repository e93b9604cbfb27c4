use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::check::check_criterion;
use super::judge::{Judge, JudgeError};
use super::task::RubricCriterion;
use crate::rollout::Trajectory;
use crate::world::WorldView;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion_id: String,
    pub satisfied: bool,
    pub evidence: String,
}

/// Reward as the fraction of satisfied criteria, kept as a reduced fraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardReport {
    pub task_id: String,
    pub verdicts: Vec<Verdict>,
    pub r_num: u64,
    pub r_den: u64,
    pub pass: bool,
}

impl RewardReport {
    /// Panics on an empty verdict list; rubrics are nonempty by construction.
    pub fn from_verdicts(task_id: &str, verdicts: Vec<Verdict>) -> Self {
        assert!(!verdicts.is_empty(), "reward over an empty rubric");
        let total = verdicts.len() as u64;
        let satisfied = verdicts.iter().filter(|v| v.satisfied).count() as u64;
        let r = Ratio::new(satisfied, total);
        Self {
            task_id: task_id.to_string(),
            verdicts,
            r_num: *r.numer(),
            r_den: *r.denom(),
            pass: satisfied == total,
        }
    }

    pub fn r(&self) -> Ratio<u64> {
        Ratio::new(self.r_num, self.r_den)
    }

    pub fn r_f64(&self) -> f64 {
        self.r_num as f64 / self.r_den as f64
    }

    pub fn satisfied_count(&self) -> usize {
        self.verdicts.iter().filter(|v| v.satisfied).count()
    }
}

/// A judge failure, with the verdicts of every criterion that could be decided.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("criterion {criterion_id}: {error}")]
pub struct JudgeUnavailable {
    pub criterion_id: String,
    pub error: JudgeError,
    pub partial: Vec<Verdict>,
}

pub fn evaluate(
    task_id: &str,
    rubric: &[RubricCriterion],
    traj: &Trajectory,
    view: &dyn WorldView,
    judge: Option<&dyn Judge>,
) -> Result<RewardReport, JudgeUnavailable> {
    let mut verdicts = Vec::with_capacity(rubric.len());
    let mut failure = None;
    for c in rubric {
        match check_criterion(c, traj, view, judge) {
            Ok(o) => verdicts.push(Verdict {
                criterion_id: c.id.clone(),
                satisfied: o.satisfied,
                evidence: o.evidence,
            }),
            Err(error) => {
                failure.get_or_insert((c.id.clone(), error));
            }
        }
    }
    match failure {
        Some((criterion_id, error)) => Err(JudgeUnavailable {
            criterion_id,
            error,
            partial: verdicts,
        }),
        None => Ok(RewardReport::from_verdicts(task_id, verdicts)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdicts(flags: &[bool]) -> Vec<Verdict> {
        flags
            .iter()
            .enumerate()
            .map(|(i, s)| Verdict {
                criterion_id: format!("c{i}"),
                satisfied: *s,
                evidence: String::new(),
            })
            .collect()
    }

    #[test]
    fn all_none_and_partial() {
        let r = RewardReport::from_verdicts("t", verdicts(&[true; 4]));
        assert_eq!((r.r_num, r.r_den, r.pass), (1, 1, true));
        let r = RewardReport::from_verdicts("t", verdicts(&[false; 4]));
        assert_eq!((r.r_num, r.r_den, r.pass), (0, 1, false));
        let r = RewardReport::from_verdicts("t", verdicts(&[true, true, false, true]));
        assert_eq!((r.r_num, r.r_den, r.pass), (3, 4, false));
        assert_eq!(r.r_f64(), 0.75);
    }
}
