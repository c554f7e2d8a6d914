use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, LoadedData, TrainConfig};
use super::train::{repeat_seeds, run_on, RunResult, RunStatus};
use crate::error::{Error, Result};
use crate::estimator::EstimatorMode;
use crate::optim::OptimizerKind;

/// Exact header of every summary table.
pub const TABLE_HEADER: [&str; 7] = ["Dataset", "SGD", "SGD&GCE", "Adagrad", "Adagrad&GCE", "Adam", "Adam&GCE"];

/// Column order of [`TABLE_HEADER`] after `Dataset`.
pub const TABLE_COLUMNS: [(OptimizerKind, EstimatorMode); 6] = [
    (OptimizerKind::Sgd, EstimatorMode::Classic),
    (OptimizerKind::Sgd, EstimatorMode::Gce),
    (OptimizerKind::AdaGrad, EstimatorMode::Classic),
    (OptimizerKind::AdaGrad, EstimatorMode::Gce),
    (OptimizerKind::Adam, EstimatorMode::Classic),
    (OptimizerKind::Adam, EstimatorMode::Gce),
];

/// `Adam`, `Adam&GCE`, ...
pub fn column_label(optimizer: OptimizerKind, estimator: EstimatorMode) -> String {
    match estimator {
        EstimatorMode::Classic => optimizer.label().to_string(),
        EstimatorMode::Gce => format!("{}&GCE", optimizer.label()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Extra data sources; empty means the base configuration's.
    #[serde(default)]
    pub datasets: Vec<DataSource>,
    #[serde(default)]
    pub models: Vec<String>,
    pub optimizers: Vec<OptimizerKind>,
    pub estimators: Vec<EstimatorMode>,
    pub batch_sizes: Vec<usize>,
}

impl SweepGrid {
    /// Every optimizer and both estimators at the given batch sizes.
    pub fn full(batch_sizes: Vec<usize>) -> Self {
        Self {
            datasets: Vec::new(),
            models: Vec::new(),
            optimizers: OptimizerKind::ALL.to_vec(),
            estimators: vec![EstimatorMode::Classic, EstimatorMode::Gce],
            batch_sizes,
        }
    }

    /// Every configuration of the grid built on `base`, one per cell.
    pub fn configs(&self, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        if self.optimizers.is_empty() || self.estimators.is_empty() || self.batch_sizes.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        let datasets = if self.datasets.is_empty() { vec![base.data.clone()] } else { self.datasets.clone() };
        let models = if self.models.is_empty() { vec![base.model.clone()] } else { self.models.clone() };
        let mut out = Vec::new();
        for data in &datasets {
            for model in &models {
                for &batch_size in &self.batch_sizes {
                    for &optimizer in &self.optimizers {
                        for &estimator in &self.estimators {
                            let c = TrainConfig {
                                data: data.clone(),
                                model: model.clone(),
                                optimizer,
                                estimator,
                                batch_size,
                                ..base.clone()
                            };
                            c.validate()?;
                            out.push(c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Identifies one sweep cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub model: String,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub estimator: EstimatorMode,
}

impl CellKey {
    pub fn of(run: &RunResult) -> Self {
        Self {
            dataset: run.dataset.clone(),
            model: run.config.model.clone(),
            batch_size: run.config.batch_size,
            optimizer: run.config.optimizer,
            estimator: run.config.estimator,
        }
    }

    pub fn label(&self) -> String {
        column_label(self.optimizer, self.estimator)
    }
}

/// Final-metric statistics of the finished runs of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    /// `None` when no run finished.
    pub mean: Option<f64>,
    /// Population standard deviation (divides by the number of runs).
    pub std: Option<f64>,
    pub ok: usize,
    pub diverged: usize,
    pub failed: usize,
    pub errors: Vec<String>,
}

impl CellSummary {
    pub fn of<'a>(runs: impl IntoIterator<Item = &'a RunResult>) -> Self {
        let mut finals = Vec::new();
        let (mut diverged, mut failed, mut errors) = (0, 0, Vec::new());
        for run in runs {
            match &run.status {
                RunStatus::Ok => finals.extend(run.final_metric),
                RunStatus::Diverged { .. } => diverged += 1,
                RunStatus::Failed { message } => {
                    failed += 1;
                    errors.push(message.clone());
                }
            }
        }
        let (mean, std) = mean_std(&finals).map_or((None, None), |(m, s)| (Some(m), Some(s)));
        Self { mean, std, ok: finals.len(), diverged, failed, errors }
    }

    /// `mean ± std`, annotated with the number of excluded runs.
    pub fn cell_text(&self) -> String {
        let mut text = match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            _ => "n/a".to_string(),
        };
        if self.diverged > 0 {
            text.push_str(&format!(" ({} diverged)", self.diverged));
        }
        if self.failed > 0 {
            text.push_str(&format!(" ({} failed)", self.failed));
        }
        text
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Groups runs by cell. Input order does not matter.
pub fn summarize(runs: &[RunResult]) -> BTreeMap<CellKey, CellSummary> {
    let mut by_cell: BTreeMap<CellKey, Vec<&RunResult>> = BTreeMap::new();
    for run in runs {
        by_cell.entry(CellKey::of(run)).or_default().push(run);
    }
    by_cell.into_iter().map(|(k, v)| (k, CellSummary::of(v))).collect()
}

/// One table per `(model, batch size)`: a row per data set and the six
/// optimizer/estimator columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub model: String,
    pub batch_size: usize,
    pub rows: Vec<(String, [String; 6])>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Internal(format!("csv encoding: {e}"));
        w.write_record(TABLE_HEADER).map_err(to_err)?;
        for (dataset, cells) in &self.rows {
            w.write_record(std::iter::once(dataset.as_str()).chain(cells.iter().map(String::as_str)))
                .map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv encoding: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    /// File-name friendly form of the model text and batch size.
    pub fn slug(&self) -> String {
        let model: String = self
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        format!("{model}_b{}", self.batch_size)
    }
}

/// Cells missing from the grid show as `-`.
pub fn tables(cells: &BTreeMap<CellKey, CellSummary>) -> Vec<SummaryTable> {
    let mut grouped: BTreeMap<(String, usize), BTreeMap<String, [String; 6]>> = BTreeMap::new();
    for (key, summary) in cells {
        let row = grouped
            .entry((key.model.clone(), key.batch_size))
            .or_default()
            .entry(key.dataset.clone())
            .or_insert_with(|| std::array::from_fn(|_| "-".to_string()));
        if let Some(col) = TABLE_COLUMNS.iter().position(|&c| c == (key.optimizer, key.estimator)) {
            row[col] = summary.cell_text();
        }
    }
    grouped
        .into_iter()
        .map(|((model, batch_size), rows)| SummaryTable { model, batch_size, rows: rows.into_iter().collect() })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Every run, in grid order then repeat order.
    pub runs: Vec<RunResult>,
    pub cells: BTreeMap<CellKey, CellSummary>,
}

impl SweepResult {
    pub fn tables(&self) -> Vec<SummaryTable> {
        tables(&self.cells)
    }
}

/// Runs every cell of `grid` for `base.repeats` seeds in parallel. Run-level
/// errors are recorded in their cell rather than aborting the sweep.
pub fn run_sweep(base: &TrainConfig, grid: &SweepGrid) -> Result<SweepResult> {
    let configs = grid.configs(base)?;
    let mut loaded: Vec<(DataSource, Arc<LoadedData>)> = Vec::new();
    for c in &configs {
        if !loaded.iter().any(|(d, _)| *d == c.data) {
            loaded.push((c.data.clone(), Arc::new(c.data.load()?)));
        }
    }
    let jobs: Vec<(TrainConfig, Arc<LoadedData>, usize)> = configs
        .iter()
        .flat_map(|c| {
            let data = loaded.iter().find(|(d, _)| *d == c.data).map(|(_, l)| l.clone()).expect("loaded above");
            repeat_seeds(c)
                .map(|(r, seed)| (TrainConfig { seed, ..c.clone() }, data.clone(), r))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(sweep_jobs(jobs))
}

/// Like [`run_sweep`] on data that is already in memory.
pub fn run_sweep_on(base: &TrainConfig, grid: &SweepGrid, data: &LoadedData) -> Result<SweepResult> {
    if !grid.datasets.is_empty() {
        return Err(Error::Config("an in-memory sweep takes a single data set".into()));
    }
    let data = Arc::new(data.clone());
    let jobs = grid
        .configs(base)?
        .into_iter()
        .flat_map(|c| {
            repeat_seeds(&c).map(|(r, seed)| (TrainConfig { seed, ..c.clone() }, data.clone(), r)).collect::<Vec<_>>()
        })
        .collect();
    Ok(sweep_jobs(jobs))
}

fn sweep_jobs(jobs: Vec<(TrainConfig, Arc<LoadedData>, usize)>) -> SweepResult {
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|(config, data, repeat)| {
            run_on::<f64>(config, data, *repeat).unwrap_or_else(|e| RunResult::failed(data, config, *repeat, &e))
        })
        .collect();
    let cells = summarize(&runs);
    SweepResult { runs, cells }
}
