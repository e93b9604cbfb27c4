//! Pluggable grader for `external-judge` criteria. No implementation ships;
//! the wire shapes below are what an HTTP-backed judge exchanges.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub criterion: String,
    pub final_response: String,
    /// Records of the entities named by the criterion, as seen at episode end.
    pub state: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub satisfied: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge rate-limited the request")]
    RateLimited { retry_after: Option<Duration> },
    #[error("judge unavailable: {0}")]
    Unavailable(String),
}

pub trait Judge: Send + Sync {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, JudgeError>;
}

/// Retries rate-limited and unavailable responses with doubling delays,
/// capped at `max_delay`, for at most `attempts` tries.
pub struct RetryingJudge<J> {
    inner: J,
    attempts: u32,
    base_delay: Duration,
    max_delay: Duration,
    sleep: fn(Duration),
}

impl<J: Judge> RetryingJudge<J> {
    pub fn new(inner: J, attempts: u32, base_delay: Duration, max_delay: Duration) -> Self {
        Self {
            inner,
            attempts: attempts.max(1),
            base_delay,
            max_delay,
            sleep: std::thread::sleep,
        }
    }

    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn delay(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let backoff = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        hint.unwrap_or(backoff).min(self.max_delay)
    }
}

impl<J: Judge> Judge for RetryingJudge<J> {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, JudgeError> {
        let mut last = JudgeError::Unavailable("no attempt made".into());
        for attempt in 0..self.attempts {
            match self.inner.judge(request) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let hint = match &e {
                        JudgeError::RateLimited { retry_after } => *retry_after,
                        JudgeError::Unavailable(_) => None,
                    };
                    last = e;
                    if attempt + 1 < self.attempts {
                        (self.sleep)(self.delay(attempt, hint));
                    }
                }
            }
        }
        Err(JudgeError::Unavailable(format!(
            "gave up after {} attempts: {last}",
            self.attempts
        )))
    }
}
