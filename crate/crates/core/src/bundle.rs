//! Self-contained directory bundle: world entities, tasks, system prompts and
//! tool definitions under one `manifest.json`.
//!
//! ```text
//! manifest.json
//! entities/<kind>.json
//! tasks/<task-id>.json
//! system-prompts/<name>.md
//! tools.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gen::{entity_file, import_entities, ENTITIES_DIR};
use crate::rollout::Environment;
use crate::rubric::{load_task, CheckSpec, Task};
use crate::tools::Catalog;
use crate::world::{canonical_bytes, check_integrity, EntityId, EntityKind, WorldState, WorldView};

pub const MANIFEST: &str = "manifest.json";
pub const TASKS_DIR: &str = "tasks";
pub const SYSTEM_PROMPTS_DIR: &str = "system-prompts";
pub const TOOLS_FILE: &str = "tools.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldRef {
    pub seed: u64,
    pub profile: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundlePaths {
    pub tasks_dir: String,
    pub entities_dir: String,
    pub system_prompts_dir: String,
    pub tools_file: String,
}

impl Default for BundlePaths {
    fn default() -> Self {
        Self {
            tasks_dir: TASKS_DIR.into(),
            entities_dir: ENTITIES_DIR.into(),
            system_prompts_dir: SYSTEM_PROMPTS_DIR.into(),
            tools_file: TOOLS_FILE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub name: String,
    pub version: String,
    pub world: WorldRef,
    pub paths: BundlePaths,
    pub task_count: usize,
}

/// One problem found by [`validate_bundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub code: &'static str,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("io failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bundle is invalid:\n{}", .0.iter().map(|f| format!("  {f}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Finding>),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn finding(code: &'static str, path: impl Into<String>, message: impl Into<String>) -> Finding {
    Finding {
        code,
        path: path.into(),
        message: message.into(),
    }
}

/// Reads every `*.md` in `dir` keyed by file name.
pub fn read_system_prompts(dir: &Path) -> Result<BTreeMap<String, String>, BundleError> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().is_some_and(|e| e == "md") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, fs::read_to_string(&path).map_err(io(&path))?);
        }
    }
    Ok(out)
}

/// Problems with a task that show up only against a world, catalog and prompt set.
fn task_findings(
    task: &Task,
    path: &str,
    world: Option<&WorldState>,
    catalog: Option<&Catalog>,
    prompts: &BTreeSet<String>,
) -> Vec<Finding> {
    let mut out = Vec::new();
    if !prompts.contains(&task.system_prompt_ref) {
        out.push(finding(
            "unknown-system-prompt",
            path,
            format!(
                "system_prompt_ref `{}` is not in the bundle",
                task.system_prompt_ref
            ),
        ));
    }
    let mut tools: Vec<&str> = Vec::new();
    let mut entities: Vec<(EntityKind, &str)> = Vec::new();
    for c in &task.rubric {
        match &c.check {
            CheckSpec::ToolWasCalled { tool, before, .. } => {
                tools.push(tool);
                tools.extend(before.as_deref());
            }
            CheckSpec::EntityStateAssert { target, .. } => entities.push((target.kind, &target.id)),
            CheckSpec::NumericEquals {
                entity: Some(e), ..
            } => entities.push((e.kind, &e.id)),
            CheckSpec::ExternalJudge { entities: es, .. } => {
                entities.extend(es.iter().map(|e| (e.kind, e.id.as_str())))
            }
            _ => {}
        }
    }
    if let Some(plan) = &task.oracle_plan {
        tools.extend(plan.calls.iter().map(|c| c.tool.as_str()));
    }
    if let Some(catalog) = catalog {
        for t in tools.into_iter().collect::<BTreeSet<_>>() {
            if catalog.get(t).is_none() {
                out.push(finding(
                    "unknown-tool",
                    path,
                    format!("references tool `{t}` missing from tools.json"),
                ));
            }
        }
    }
    if let Some(world) = world {
        for (kind, id) in entities.into_iter().collect::<BTreeSet<_>>() {
            if !world.contains(&EntityId::new(kind, id)) {
                out.push(finding(
                    "unknown-entity",
                    path,
                    format!("rubric names {kind}:{id}, absent from the world"),
                ));
            }
        }
    }
    out
}

fn sorted_json_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Writes a bundle for `world` with the tasks in `tasks_dir` and the given
/// system prompts. Refuses to write when the inputs would not validate.
pub fn pack_bundle(
    world: &WorldState,
    tasks_dir: &Path,
    system_prompts: &BTreeMap<String, String>,
    out_dir: &Path,
) -> Result<BundleManifest, BundleError> {
    let mut tasks = Vec::new();
    let mut problems = Vec::new();
    let names: BTreeSet<String> = system_prompts.keys().cloned().collect();
    for path in sorted_json_files(tasks_dir).map_err(io(tasks_dir))? {
        let label = path.display().to_string();
        match load_task(&path) {
            Ok(t) => {
                problems.extend(task_findings(
                    &t,
                    &label,
                    Some(world),
                    Some(Catalog::builtin()),
                    &names,
                ));
                tasks.push(t);
            }
            Err(e) => problems.push(finding("task-invalid", label, e.to_string())),
        }
    }
    for v in check_integrity(world) {
        problems.push(finding("entity-integrity", ENTITIES_DIR, v.to_string()));
    }
    if !problems.is_empty() {
        return Err(BundleError::Invalid(problems));
    }

    let paths = BundlePaths::default();
    let entities = out_dir.join(&paths.entities_dir);
    fs::create_dir_all(&entities).map_err(io(&entities))?;
    for kind in EntityKind::ALL {
        let path = entity_file(out_dir, kind);
        fs::write(&path, canonical_bytes(world.entities_of(kind))).map_err(io(&path))?;
    }
    let tdir = out_dir.join(&paths.tasks_dir);
    fs::create_dir_all(&tdir).map_err(io(&tdir))?;
    for t in &tasks {
        let path = tdir.join(format!("{}.json", t.id));
        fs::write(&path, t.to_json_pretty() + "\n").map_err(io(&path))?;
    }
    let pdir = out_dir.join(&paths.system_prompts_dir);
    fs::create_dir_all(&pdir).map_err(io(&pdir))?;
    for (name, text) in system_prompts {
        let path = pdir.join(name);
        fs::write(&path, text).map_err(io(&path))?;
    }
    let tools = out_dir.join(&paths.tools_file);
    fs::write(&tools, Catalog::raw_json()).map_err(io(&tools))?;

    let manifest = BundleManifest {
        name: "supportsim-bundle".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        world: WorldRef {
            seed: world.seed(),
            profile: world.profile().to_string(),
            digest: world.digest().to_string(),
        },
        paths,
        task_count: tasks.len(),
    };
    let path = out_dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}

/// Everything a loaded bundle holds, checked.
#[derive(Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub world: Arc<WorldState>,
    pub tasks: Vec<Task>,
    pub system_prompts: BTreeMap<String, String>,
    pub catalog: Catalog,
}

impl Bundle {
    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn environment(&self) -> Environment {
        Environment {
            world: Arc::clone(&self.world),
            catalog: self.catalog.clone(),
            system_prompts: self.system_prompts.clone(),
        }
    }
}

struct Scan {
    findings: Vec<Finding>,
    bundle: Option<Bundle>,
}

fn scan(dir: &Path) -> Scan {
    let mut findings = Vec::new();
    let fail = |findings: Vec<Finding>| Scan {
        findings,
        bundle: None,
    };
    let mpath = dir.join(MANIFEST);
    let manifest: BundleManifest = match fs::read_to_string(&mpath) {
        Err(e) => return fail(vec![finding("missing-manifest", MANIFEST, e.to_string())]),
        Ok(text) => match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(e) => return fail(vec![finding("manifest-invalid", MANIFEST, e.to_string())]),
        },
    };
    let p = &manifest.paths;
    for (label, rel, want_dir) in [
        ("tasks_dir", &p.tasks_dir, true),
        ("entities_dir", &p.entities_dir, true),
        ("system_prompts_dir", &p.system_prompts_dir, true),
        ("tools_file", &p.tools_file, false),
    ] {
        let full = dir.join(rel);
        let ok = if want_dir {
            full.is_dir()
        } else {
            full.is_file()
        };
        if !ok {
            findings.push(finding(
                "missing-path",
                rel.as_str(),
                format!("manifest {label} does not exist"),
            ));
        }
    }

    let catalog = match fs::read_to_string(dir.join(&p.tools_file)) {
        Err(_) => None,
        Ok(text) => match Catalog::parse(&text) {
            Ok(c) => Some(c),
            Err(e) => {
                findings.push(finding("tool-schema", p.tools_file.as_str(), e.to_string()));
                None
            }
        },
    };

    // import_entities expects entities under `<root>/entities`.
    let world = if p.entities_dir == ENTITIES_DIR && dir.join(&p.entities_dir).is_dir() {
        match import_entities(dir, manifest.world.seed, &manifest.world.profile) {
            Ok(w) => {
                if w.digest() != manifest.world.digest {
                    findings.push(finding(
                        "digest-mismatch",
                        p.entities_dir.as_str(),
                        format!(
                            "manifest says {}, entities hash to {}",
                            manifest.world.digest,
                            w.digest()
                        ),
                    ));
                }
                for v in check_integrity(&w) {
                    findings.push(finding(
                        "entity-integrity",
                        p.entities_dir.as_str(),
                        v.to_string(),
                    ));
                }
                Some(w)
            }
            Err(e) => {
                findings.push(finding(
                    "entities-unreadable",
                    p.entities_dir.as_str(),
                    e.to_string(),
                ));
                None
            }
        }
    } else {
        if dir.join(&p.entities_dir).is_dir() {
            findings.push(finding(
                "missing-path",
                p.entities_dir.as_str(),
                "entities must live in `entities/`",
            ));
        }
        None
    };

    let prompts = read_system_prompts(&dir.join(&p.system_prompts_dir)).unwrap_or_default();
    let names: BTreeSet<String> = prompts.keys().cloned().collect();
    let mut tasks = Vec::new();
    let tdir = dir.join(&p.tasks_dir);
    if let Ok(files) = sorted_json_files(&tdir) {
        let mut ids = BTreeSet::new();
        for path in files {
            let label = format!(
                "{}/{}",
                p.tasks_dir,
                path.file_name().unwrap().to_string_lossy()
            );
            match load_task(&path) {
                Ok(t) => {
                    if !ids.insert(t.id.clone()) {
                        findings.push(finding(
                            "duplicate-task",
                            label.as_str(),
                            format!("task id {} repeats", t.id),
                        ));
                    }
                    findings.extend(task_findings(
                        &t,
                        &label,
                        world.as_ref(),
                        catalog.as_ref(),
                        &names,
                    ));
                    tasks.push(t);
                }
                Err(e) => findings.push(finding("task-invalid", label, e.to_string())),
            }
        }
        if tasks.len() != manifest.task_count {
            findings.push(finding(
                "task-count",
                p.tasks_dir.as_str(),
                format!(
                    "manifest says {} tasks, found {}",
                    manifest.task_count,
                    tasks.len()
                ),
            ));
        }
    }

    let bundle = match (world, catalog) {
        (Some(world), Some(catalog)) if findings.is_empty() => Some(Bundle {
            dir: dir.to_path_buf(),
            manifest,
            world: Arc::new(world),
            tasks,
            system_prompts: prompts,
            catalog,
        }),
        _ => None,
    };
    Scan { findings, bundle }
}

/// Every integrity problem in the bundle at `dir`; empty means valid.
pub fn validate_bundle(dir: &Path) -> Vec<Finding> {
    scan(dir).findings
}

pub fn load_bundle(dir: &Path) -> Result<Bundle, BundleError> {
    let s = scan(dir);
    s.bundle.ok_or(BundleError::Invalid(s.findings))
}
