//! Append-only JSONL trajectory buffer.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::episode::{Episode, RolloutGroup};
use super::trajectory::{Trajectory, Turn};
use crate::rubric::{RewardReport, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardBlock {
    pub r_num: u64,
    pub r_den: u64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferRecord {
    pub task_id: String,
    pub rollout_idx: usize,
    pub seed: u64,
    pub world_digest: String,
    /// Digest of the session view at episode end.
    pub session_digest: String,
    pub agent: String,
    pub turns: Vec<Turn>,
    pub final_response: String,
    pub reward: RewardBlock,
    pub pass: bool,
    pub turn_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_fault: Option<String>,
}

impl BufferRecord {
    pub fn from_episode(ep: &Episode, agent: &str) -> Self {
        let t = &ep.trajectory;
        Self {
            task_id: t.task_id.clone(),
            rollout_idx: t.rollout_idx,
            seed: t.seed,
            world_digest: ep.world_digest.clone(),
            session_digest: ep.session_digest.clone(),
            agent: agent.to_string(),
            turns: t.turns.clone(),
            final_response: t.final_response.clone(),
            reward: RewardBlock {
                r_num: ep.report.r_num,
                r_den: ep.report.r_den,
                verdicts: ep.report.verdicts.clone(),
            },
            pass: ep.report.pass,
            turn_count: t.turn_count,
            agent_fault: t.agent_fault.clone(),
        }
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            task_id: self.task_id.clone(),
            rollout_idx: self.rollout_idx,
            seed: self.seed,
            turns: self.turns.clone(),
            final_response: self.final_response.clone(),
            turn_count: self.turn_count,
            agent_fault: self.agent_fault.clone(),
        }
    }

    pub fn report(&self) -> RewardReport {
        RewardReport {
            task_id: self.task_id.clone(),
            verdicts: self.reward.verdicts.clone(),
            r_num: self.reward.r_num,
            r_den: self.reward.r_den,
            pass: self.pass,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BufferError {
    #[error("buffer io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("buffer line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

static APPEND_LOCK: Mutex<()> = Mutex::new(());

/// Appends every completed rollout of `group` as one line each and returns
/// the number written. The group goes out in a single `write` on an
/// append-mode handle under a process-wide lock, so records never interleave.
pub fn append_buffer(group: &RolloutGroup, agent: &str, path: &Path) -> Result<usize, BufferError> {
    let records: Vec<BufferRecord> = group
        .episodes
        .iter()
        .filter_map(|e| e.as_ref().ok())
        .map(|ep| BufferRecord::from_episode(ep, agent))
        .collect();
    append_records(&records, path)
}

pub fn append_records(records: &[BufferRecord], path: &Path) -> Result<usize, BufferError> {
    let mut bytes = Vec::new();
    for r in records {
        serde_json::to_writer(&mut bytes, r).map_err(std::io::Error::from)?;
        bytes.push(b'\n');
    }
    let _guard = APPEND_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(records.len())
}

pub fn read_buffer(path: &Path) -> Result<Vec<BufferRecord>, BufferError> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| BufferError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
