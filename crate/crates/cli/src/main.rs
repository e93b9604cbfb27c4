use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use supportsim::bundle::{load_bundle, pack_bundle, read_system_prompts, validate_bundle};
use supportsim::gen::{export_world, generate_world, import_world, GenProfile};
use supportsim::grpo::{train_toy, BanditFamily, TrainConfig, TrainError};
use supportsim::metrics::PassMatrix;
use supportsim::rollout::{
    append_records, read_buffer, replay, run_group_from, AgentFactory, AgentKind, BufferRecord,
    Environment,
};
use supportsim::server::{serve_stream, serve_tcp, Server};
use supportsim::suite::{author_tasks, builtin_prompts, suite_world, write_tasks};

#[derive(Parser)]
#[command(
    name = "supportsim",
    version,
    about = "Simulated customer-support environment for tool-using agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Workers {
    /// Worker threads; defaults to the logical CPU count.
    #[arg(long, env = "SUPPORTSIM_WORKERS")]
    workers: Option<usize>,
}

impl Workers {
    fn count(&self) -> usize {
        self.workers
            .filter(|w| *w > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.count())
            .build()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world and export its entity files.
    GenWorld {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "mini")]
        profile: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: Workers,
    },
    /// Write a bundle from an exported world, a task directory and system prompts.
    Pack {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of `*.md` prompts; the built-in prompt when omitted.
        #[arg(long)]
        system_prompts: Option<PathBuf>,
    },
    /// Check a bundle; exits 1 when anything is wrong.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the tool protocol over TCP or standard streams.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, env = "SUPPORTSIM_LISTEN", conflicts_with = "stdio")]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
        #[command(flatten)]
        workers: Workers,
    },
    /// Roll out an agent on every task and write the trajectory buffer.
    Run {
        #[arg(long)]
        bundle: PathBuf,
        /// oracle, random, greedy, silent or noisy:EPS
        #[arg(long, default_value = "oracle")]
        agent: String,
        #[arg(long, default_value_t = 16)]
        group_size: usize,
        /// Groups per task; pass p covers rollout indices p*G .. (p+1)*G.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Seed of rollout 0; rollout i uses base + i.
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Restrict to these task ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: Workers,
    },
    /// Replay and re-score a trajectory buffer; exits 1 on any drift.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// pass@1, pass@k and pass^k from a buffer or a CSV of task_id,run_idx,pass.
    Metrics {
        #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
        traj: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Adds the per-category table using the bundle's task categories.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Only count buffer records from this agent.
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Train the tabular toy policy on the rubric bandit and write its learning curve.
    TrainToy {
        /// JSON trainer config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// World to build the bandit from; the built-in suite world when omitted.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Write the built-in task suite as JSON files.
    AuthorTasks {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Writes a line to stdout, propagating failures instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*)?
    };
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        // A reader that closed the pipe early (`| head`) is not an error.
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<io::Error>()
                    .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::GenWorld {
            seed,
            profile,
            out,
            workers,
        } => {
            let profile = GenProfile::preset(&profile)?;
            let world = workers.pool()?.install(|| generate_world(seed, &profile))?;
            let m = export_world(&world, &out)?;
            say!(
                "world {} seed {} profile {}: {} entities, digest {}",
                out.display(),
                m.seed,
                m.profile,
                world.total_entities(),
                m.digest
            );
        }
        Command::Pack {
            world,
            tasks,
            out,
            system_prompts,
        } => {
            let (world, _) = import_world(&world)
                .with_context(|| format!("reading world {}", world.display()))?;
            let prompts = match system_prompts {
                Some(dir) => read_system_prompts(&dir)?,
                None => builtin_prompts(),
            };
            let m = pack_bundle(&world, &tasks, &prompts, &out)?;
            say!(
                "bundle {}: {} tasks, world digest {}",
                out.display(),
                m.task_count,
                m.world.digest
            );
        }
        Command::Validate { bundle, json } => {
            let findings = validate_bundle(&bundle);
            if json {
                say!(
                    "{}",
                    serde_json::to_string_pretty(
                        &json!({"bundle": bundle, "valid": findings.is_empty(), "findings": findings})
                    )?
                );
            } else if findings.is_empty() {
                say!("bundle {} is valid", bundle.display());
            } else {
                for f in &findings {
                    say!("{f}");
                }
                say!("{} finding(s)", findings.len());
            }
            if !findings.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve {
            bundle,
            listen,
            stdio,
            workers,
        } => {
            let server = Arc::new(Server::open(&bundle)?);
            if stdio {
                let stdin = io::stdin().lock();
                serve_stream(&server, stdin, BufWriter::new(io::stdout().lock()))?;
            } else {
                let addr = listen.unwrap_or_else(|| "127.0.0.1:7878".to_string());
                let listener =
                    TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
                eprintln!("serving {} on {}", bundle.display(), listener.local_addr()?);
                serve_tcp(server, listener, workers.count())?;
            }
        }
        Command::Run {
            bundle,
            agent,
            group_size,
            seeds,
            base_seed,
            tasks,
            out,
            workers,
        } => run(
            &bundle, &agent, group_size, seeds, base_seed, &tasks, &out, &workers,
        )?,
        Command::Eval { bundle, traj, json } => return eval(&bundle, &traj, json),
        Command::Metrics {
            traj,
            csv,
            bundle,
            agent,
            json,
        } => {
            let mut matrix = match (traj, csv) {
                (Some(t), _) => {
                    let records = read_buffer(&t)?;
                    let kept: Vec<BufferRecord> = records
                        .into_iter()
                        .filter(|r| agent.as_ref().is_none_or(|a| *a == r.agent))
                        .collect();
                    PassMatrix::from_records(&kept)?
                }
                (None, Some(c)) => PassMatrix::from_csv(BufReader::new(fs::File::open(&c)?))?,
                (None, None) => bail!("give --traj or --csv"),
            };
            if let Some(dir) = bundle {
                let b = load_bundle(&dir)?;
                matrix = matrix.with_categories(
                    b.tasks
                        .iter()
                        .map(|t| (t.id.clone(), t.category.to_string()))
                        .collect(),
                );
            }
            let report = matrix.full_report()?;
            if json {
                say!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                write!(io::stdout(), "{}", report.to_text())?;
            }
        }
        Command::TrainToy {
            config,
            out,
            bundle,
        } => {
            let cfg: TrainConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => TrainConfig::default(),
            };
            let env = match bundle {
                Some(dir) => load_bundle(&dir)?.environment(),
                None => Environment::new(suite_world(), builtin_prompts()),
            };
            let family = BanditFamily::rubric_bandit(&env.world);
            let (curve, failure) = match train_toy(&env, &family, &cfg) {
                Ok(o) => (o.curve, None),
                Err(e @ TrainError::Divergence { .. }) => {
                    let TrainError::Divergence { curve, .. } = &e else {
                        unreachable!()
                    };
                    (curve.clone(), Some(e))
                }
                Err(e) => return Err(e.into()),
            };
            let mut w = BufWriter::new(fs::File::create(&out)?);
            for p in &curve {
                serde_json::to_writer(&mut w, p)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            if let Some(e) = failure {
                bail!("{e} (partial curve written to {})", out.display());
            }
            let first = curve.first().map_or(0.0, |p| p.mean_reward);
            let last = curve.last().map_or(0.0, |p| p.mean_reward);
            say!(
                "{} steps, mean reward {first:.3} -> {last:.3}; curve at {}",
                curve.len(),
                out.display()
            );
        }
        Command::AuthorTasks { out } => {
            let tasks = author_tasks(&suite_world());
            write_tasks(&tasks, &out)?;
            say!("wrote {} tasks to {}", tasks.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn run(
    bundle: &Path,
    agent: &str,
    group_size: usize,
    seeds: usize,
    base_seed: u64,
    only: &[String],
    out: &Path,
    workers: &Workers,
) -> Result<()> {
    if group_size == 0 || seeds == 0 {
        bail!("--group-size and --seeds must be positive");
    }
    let agent: AgentKind = agent.parse().map_err(anyhow::Error::msg)?;
    let b = load_bundle(bundle)?;
    let env = b.environment();
    let mut tasks: Vec<_> = b
        .tasks
        .iter()
        .filter(|t| only.is_empty() || only.contains(&t.id))
        .collect();
    if let Some(missing) = only.iter().find(|id| b.task(id).is_none()) {
        bail!("no task {missing} in the bundle");
    }
    tasks.sort_by(|a, c| a.id.cmp(&c.id));
    let jobs: Vec<_> = tasks
        .iter()
        .flat_map(|t| (0..seeds).map(move |p| (*t, p)))
        .collect();
    let name = agent.name();
    let groups: Vec<Vec<BufferRecord>> = workers.pool()?.install(|| {
        jobs.par_iter()
            .map(|(task, p)| {
                let group = run_group_from(
                    &env,
                    task,
                    &agent,
                    p * group_size..(p + 1) * group_size,
                    base_seed,
                    None,
                );
                for e in group.episodes.iter().filter_map(|e| e.as_ref().err()) {
                    eprintln!("skipped rollout: {e}");
                }
                group
                    .episodes
                    .iter()
                    .filter_map(|e| e.as_ref().ok())
                    .map(|ep| BufferRecord::from_episode(ep, &name))
                    .collect()
            })
            .collect()
    });
    // Truncate first: repeated runs must produce identical files.
    fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = 0;
    for g in &groups {
        written += append_records(g, out)?;
    }
    let all: Vec<&BufferRecord> = groups.iter().flatten().collect();
    let mean = all
        .iter()
        .map(|r| r.reward.r_num as f64 / r.reward.r_den as f64)
        .sum::<f64>()
        / all.len().max(1) as f64;
    let passed = all.iter().filter(|r| r.pass).count();
    say!(
        "{written} trajectories ({} tasks x {} rollouts) by {name}: mean reward {mean:.4}, {passed} passed; buffer {}",
        tasks.len(),
        seeds * group_size,
        out.display()
    );
    Ok(())
}

fn eval(bundle: &Path, traj: &Path, json_out: bool) -> Result<ExitCode> {
    let b = load_bundle(bundle)?;
    let env = b.environment();
    let records = read_buffer(traj)?;
    let outcomes: Vec<(String, usize, Option<String>)> = records
        .par_iter()
        .map(|r| {
            let drift = (|| {
                if r.world_digest != b.world.digest() {
                    return Some(format!(
                        "world digest {} differs from bundle {}",
                        r.world_digest,
                        b.world.digest()
                    ));
                }
                let Some(task) = b.task(&r.task_id) else {
                    return Some("task not in bundle".to_string());
                };
                match replay(&env, task, &r.trajectory(), None) {
                    Err(e) => Some(e.to_string()),
                    Ok(rep) if rep.report != r.report() => Some(format!(
                        "stored reward {}/{} pass {}, re-scored {}/{} pass {}",
                        r.reward.r_num,
                        r.reward.r_den,
                        r.pass,
                        rep.report.r_num,
                        rep.report.r_den,
                        rep.report.pass
                    )),
                    Ok(rep) if rep.session_digest != r.session_digest => {
                        Some("session digest differs".to_string())
                    }
                    Ok(_) => None,
                }
            })();
            (r.task_id.clone(), r.rollout_idx, drift)
        })
        .collect();
    let drifted: Vec<_> = outcomes.iter().filter(|o| o.2.is_some()).collect();
    if json_out {
        let items: Vec<_> = drifted
            .iter()
            .map(|(t, i, d)| json!({"task_id": t, "rollout_idx": i, "reason": d}))
            .collect();
        say!(
            "{}",
            serde_json::to_string_pretty(&json!({"records": records.len(), "drifted": items}))?
        );
    } else {
        for (t, i, d) in &drifted {
            say!("drift {t}#{i}: {}", d.as_deref().unwrap_or(""));
        }
        say!(
            "{} records re-scored, {} drifted",
            records.len(),
            drifted.len()
        );
    }
    Ok(if drifted.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
