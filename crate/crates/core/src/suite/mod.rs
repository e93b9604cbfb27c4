//! The shipped task suite.
//!
//! Tasks are authored against the seed-42 `mini` world: each template picks
//! its entities by a fixed rule, computes the expected values straight from
//! the entity records and emits the rubric plus a scripted oracle plan. The
//! oracle reads its answers from tool results, so a passing oracle run
//! cross-checks the tools against these computations. The frozen JSON under
//! `assets/tasks/` must equal [`author_tasks`] output.

mod draft;
mod facts;
mod templates;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::gen::{generate_world, GenProfile};
use crate::rubric::Task;
use crate::world::WorldState;

pub const SUITE_SEED: u64 = 42;
pub const SUITE_PROFILE: &str = "mini";
pub const SYSTEM_PROMPT_REF: &str = "support-agent.md";

const SYSTEM_PROMPT: &str = include_str!("../../assets/system-prompts/support-agent.md");

pub fn system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

pub fn builtin_prompts() -> BTreeMap<String, String> {
    BTreeMap::from([(SYSTEM_PROMPT_REF.to_string(), SYSTEM_PROMPT.to_string())])
}

pub fn suite_world() -> Arc<WorldState> {
    let profile = GenProfile::preset(SUITE_PROFILE).expect("mini preset exists");
    Arc::new(generate_world(SUITE_SEED, &profile).expect("mini profile generates"))
}

/// Checked-in location of the frozen suite.
pub fn shipped_tasks_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join("tasks")
}

pub fn shipped_system_prompts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join("system-prompts")
}

/// Every template whose entities exist in `world`, in a fixed order.
pub fn author_tasks(world: &WorldState) -> Vec<Task> {
    templates::ALL.iter().filter_map(|t| t(world)).collect()
}

/// Writes one `<id>.json` per task.
pub fn write_tasks(tasks: &[Task], dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in tasks {
        let mut text = t.to_json_pretty();
        text.push('\n');
        std::fs::write(dir.join(format!("{}.json", t.id)), text)?;
    }
    Ok(())
}
