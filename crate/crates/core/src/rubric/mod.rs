//! Task files, rubric criteria and the fraction-of-criteria reward.

mod check;
mod judge;
mod reward;
mod task;

pub use check::{check_criterion, numbers_in, CheckOutcome};
pub use judge::{Judge, JudgeError, JudgeRequest, JudgeVerdict, RetryingJudge};
pub use reward::{evaluate, JudgeUnavailable, RewardReport, Verdict};
pub use task::{
    load_task, load_tasks, AttrRef, AttrTarget, CheckSpec, CriterionKind, OraclePlan, PlanCall,
    RubricCriterion, Task, TaskCategory, TaskError, DEFAULT_MAX_TURNS,
};

#[cfg(test)]
mod tests;
