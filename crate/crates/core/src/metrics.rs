//! Reliability metrics over a tasks × runs pass matrix.
//!
//! All rates are exact rationals until display, where they become
//! percentages rounded half-up to one decimal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::rollout::BufferRecord;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("pass matrix is empty")]
    Empty,
    #[error("task {task} has {got} runs, expected {want}")]
    Ragged {
        task: String,
        got: usize,
        want: usize,
    },
    #[error("task {task} lacks run {run}")]
    MissingCell { task: String, run: usize },
    #[error("task {task} run {run} appears twice")]
    Duplicate { task: String, run: usize },
    #[error("no category for task {0}")]
    MissingCategory(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Rows are tasks, columns are runs. Rectangular by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassMatrix {
    tasks: Vec<String>,
    cells: Vec<Vec<bool>>,
    categories: Option<BTreeMap<String, String>>,
}

impl PassMatrix {
    pub fn new(tasks: Vec<String>, cells: Vec<Vec<bool>>) -> Result<Self, MetricsError> {
        if tasks.is_empty() || cells.first().is_none_or(Vec::is_empty) {
            return Err(MetricsError::Empty);
        }
        assert_eq!(tasks.len(), cells.len(), "one row per task");
        let k = cells[0].len();
        for (t, row) in tasks.iter().zip(&cells) {
            if row.len() != k {
                return Err(MetricsError::Ragged {
                    task: t.clone(),
                    got: row.len(),
                    want: k,
                });
            }
        }
        Ok(Self {
            tasks,
            cells,
            categories: None,
        })
    }

    /// Rebuilds the matrix from `(task, run, pass)` triples; runs must be `0..k` for every task.
    pub fn from_triples(
        triples: impl IntoIterator<Item = (String, usize, bool)>,
    ) -> Result<Self, MetricsError> {
        let mut by_task: BTreeMap<String, BTreeMap<usize, bool>> = BTreeMap::new();
        for (task, run, pass) in triples {
            if by_task
                .entry(task.clone())
                .or_default()
                .insert(run, pass)
                .is_some()
            {
                return Err(MetricsError::Duplicate { task, run });
            }
        }
        let k = by_task
            .values()
            .map(|m| m.keys().max().map_or(0, |r| r + 1))
            .max()
            .unwrap_or(0);
        let mut tasks = Vec::with_capacity(by_task.len());
        let mut cells = Vec::with_capacity(by_task.len());
        for (task, runs) in by_task {
            let mut row = Vec::with_capacity(k);
            for run in 0..k {
                match runs.get(&run) {
                    Some(p) => row.push(*p),
                    None => return Err(MetricsError::MissingCell { task, run }),
                }
            }
            tasks.push(task);
            cells.push(row);
        }
        Self::new(tasks, cells)
    }

    /// One run per `rollout_idx`.
    pub fn from_records(records: &[BufferRecord]) -> Result<Self, MetricsError> {
        Self::from_triples(
            records
                .iter()
                .map(|r| (r.task_id.clone(), r.rollout_idx, r.pass)),
        )
    }

    /// CSV with header `task_id,run_idx,pass` and an optional `category` column.
    /// `pass` accepts `true`/`false`/`1`/`0`.
    pub fn from_csv(reader: impl Read) -> Result<Self, MetricsError> {
        #[derive(Deserialize)]
        struct Row {
            task_id: String,
            run_idx: usize,
            pass: String,
            #[serde(default)]
            category: Option<String>,
        }
        let mut triples = Vec::new();
        let mut cats = BTreeMap::new();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| MetricsError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let pass = match row.pass.to_ascii_lowercase().as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(MetricsError::Csv {
                        line: 0,
                        message: format!(
                            "pass must be true/false/1/0, got `{other}` for {}",
                            row.task_id
                        ),
                    })
                }
            };
            if let Some(c) = row.category.filter(|c| !c.is_empty()) {
                cats.insert(row.task_id.clone(), c);
            }
            triples.push((row.task_id, row.run_idx, pass));
        }
        let m = Self::from_triples(triples)?;
        Ok(if cats.is_empty() {
            m
        } else {
            m.with_categories(cats)
        })
    }

    pub fn with_categories(mut self, categories: BTreeMap<String, String>) -> Self {
        self.categories = Some(categories);
        self
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn runs(&self) -> usize {
        self.cells[0].len()
    }

    pub fn cell(&self, task: usize, run: usize) -> bool {
        self.cells[task][run]
    }

    fn n(&self) -> u64 {
        self.tasks.len() as u64
    }

    pub fn per_run(&self) -> Vec<Ratio<u64>> {
        (0..self.runs())
            .map(|j| {
                Ratio::new(
                    self.cells.iter().filter(|row| row[j]).count() as u64,
                    self.n(),
                )
            })
            .collect()
    }

    /// Mean of per-run pass rates.
    pub fn pass_at_1(&self) -> Ratio<u64> {
        let total: u64 = self.cells.iter().flatten().filter(|p| **p).count() as u64;
        Ratio::new(total, self.n() * self.runs() as u64)
    }

    /// Share of tasks passed on at least one run.
    pub fn pass_at_k(&self) -> Ratio<u64> {
        Ratio::new(
            self.cells.iter().filter(|r| r.iter().any(|p| *p)).count() as u64,
            self.n(),
        )
    }

    /// Share of tasks passed on every run.
    pub fn pass_pow_k(&self) -> Ratio<u64> {
        Ratio::new(
            self.cells.iter().filter(|r| r.iter().all(|p| *p)).count() as u64,
            self.n(),
        )
    }

    fn restrict(&self, keep: &BTreeSet<usize>) -> PassMatrix {
        PassMatrix {
            tasks: keep.iter().map(|i| self.tasks[*i].clone()).collect(),
            cells: keep.iter().map(|i| self.cells[*i].clone()).collect(),
            categories: None,
        }
    }

    /// Sub-matrix per category. Fails if any task lacks a category.
    pub fn by_category(&self) -> Result<BTreeMap<String, PassMatrix>, MetricsError> {
        let cats = self.categories.as_ref();
        let mut groups: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let c = cats
                .and_then(|m| m.get(t))
                .ok_or_else(|| MetricsError::MissingCategory(t.clone()))?;
            groups.entry(c.clone()).or_default().insert(i);
        }
        Ok(groups
            .into_iter()
            .map(|(c, rows)| (c, self.restrict(&rows)))
            .collect())
    }

    pub fn report(&self) -> MetricsReport {
        let per_run: Vec<f64> = self.per_run().iter().map(|r| to_f64(*r) * 100.0).collect();
        let k = per_run.len() as f64;
        let mean = per_run.iter().sum::<f64>() / k;
        let ss = per_run.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let std = (ss / k).sqrt();
        let sem = if per_run.len() > 1 {
            (ss / (k - 1.0)).sqrt() / k.sqrt()
        } else {
            0.0
        };
        MetricsReport {
            tasks: self.tasks.len(),
            k: self.runs(),
            pass_at_1: percent(self.pass_at_1()),
            pass_at_k: percent(self.pass_at_k()),
            pass_pow_k: percent(self.pass_pow_k()),
            per_run: self.per_run().into_iter().map(percent).collect(),
            per_run_std: round1(std),
            per_run_sem: round1(sem),
            per_category: None,
        }
    }

    /// Rows sorted by pass@1 descending, ties by category name.
    pub fn category_report(&self) -> Result<Vec<CategoryRow>, MetricsError> {
        let mut rows: Vec<(Ratio<u64>, CategoryRow)> = self
            .by_category()?
            .into_iter()
            .map(|(category, m)| {
                let key = m.pass_at_1();
                (
                    key,
                    CategoryRow {
                        category,
                        tasks: m.tasks.len(),
                        pass_at_1: percent(key),
                        pass_at_k: percent(m.pass_at_k()),
                        pass_pow_k: percent(m.pass_pow_k()),
                    },
                )
            })
            .collect();
        rows.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.category.cmp(&b.1.category)));
        Ok(rows.into_iter().map(|(_, r)| r).collect())
    }

    /// Report with the category table when categories are attached.
    pub fn full_report(&self) -> Result<MetricsReport, MetricsError> {
        let mut r = self.report();
        if self.categories.is_some() {
            r.per_category = Some(self.category_report()?);
        }
        Ok(r)
    }
}

fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Percentage rounded half-up to one decimal, computed exactly.
pub fn percent(r: Ratio<u64>) -> f64 {
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    let tenths = (2000 * n + d) / (2 * d);
    tenths as f64 / 10.0
}

fn round1(x: f64) -> f64 {
    (x * 10.0 + 0.5).floor() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub tasks: usize,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    pub pass_pow_k: f64,
}

/// Percentages throughout. `per_run_std` is the population std of the
/// per-run rates; `per_run_sem` is the sample std over `sqrt(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: usize,
    pub k: usize,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    pub pass_pow_k: f64,
    pub per_run: Vec<f64>,
    pub per_run_std: f64,
    pub per_run_sem: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_category: Option<Vec<CategoryRow>>,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let k = self.k;
        let mut s = String::new();
        let runs: Vec<String> = self.per_run.iter().map(|p| format!("{p:.1}")).collect();
        let _ = writeln!(s, "tasks        {}", self.tasks);
        let _ = writeln!(s, "runs (k)     {k}");
        let _ = writeln!(s, "per-run      {}", runs.join(" / "));
        let _ = writeln!(
            s,
            "pass@1       {:.1} ± {:.1} (std; sem {:.1})",
            self.pass_at_1, self.per_run_std, self.per_run_sem
        );
        let _ = writeln!(s, "pass@{k:<7} {:.1}", self.pass_at_k);
        let _ = writeln!(s, "pass^{k:<7} {:.1}", self.pass_pow_k);
        if let Some(rows) = &self.per_category {
            let w = rows
                .iter()
                .map(|r| r.category.len())
                .max()
                .unwrap_or(8)
                .max(8);
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "{:<w$}  {:>5}  {:>6}  {:>6}  {:>6}",
                "category",
                "tasks",
                "pass@1",
                format!("pass@{k}"),
                format!("pass^{k}")
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<w$}  {:>5}  {:>6.1}  {:>6.1}  {:>6.1}",
                    r.category, r.tasks, r.pass_at_1, r.pass_at_k, r.pass_pow_k
                );
            }
        }
        s
    }
}
