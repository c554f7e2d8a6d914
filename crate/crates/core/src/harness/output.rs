use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::sweep::{summarize, tables, CellKey};
use super::train::{Metric, RunResult, RunStatus};
use crate::error::{Error, Result};
use crate::estimator::EstimatorMode;
use crate::optim::OptimizerKind;

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord<'a> {
    pub dataset: &'a str,
    pub model: &'a str,
    pub optimizer: OptimizerKind,
    pub estimator: EstimatorMode,
    pub batch_size: usize,
    pub repeat: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_metric: f64,
    pub metric: Metric,
}

pub fn metric_records(run: &RunResult) -> impl Iterator<Item = MetricRecord<'_>> {
    run.per_epoch.iter().map(move |e| MetricRecord {
        dataset: &run.dataset,
        model: &run.config.model,
        optimizer: run.config.optimizer,
        estimator: run.config.estimator,
        batch_size: run.config.batch_size,
        repeat: run.repeat,
        seed: run.config.seed,
        epoch: e.epoch,
        train_loss: e.train_loss,
        test_metric: e.test_metric,
        metric: run.metric,
    })
}

/// Creates `dir`, refusing one that already has entries unless `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::OutputExists { path: dir.to_path_buf() });
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let to_err = |e: csv::Error| Error::Internal(format!("csv encoding: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Internal(format!("csv encoding: {e}")))
}

fn cell_fields(k: &CellKey) -> [String; 5] {
    [k.dataset.clone(), k.model.clone(), k.batch_size.to_string(), k.optimizer.to_string(), k.estimator.to_string()]
}

/// Writes, into `dir`:
///
/// * `metrics.jsonl`: one record per run and epoch;
/// * `runs.jsonl`: one record per run with its status and configuration;
/// * `summary_<model>_b<batch>.csv`: the six-column tables;
/// * `summary_long.csv`: the same cells with numeric columns;
/// * `curves.csv`: per-epoch means over the finished runs of each cell;
/// * `timing.csv`: wall time per run.
///
/// Wall times only appear in `timing.csv`, so every other file is a pure
/// function of the configurations and seeds.
pub fn write_outputs(runs: &[RunResult], dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    prepare_dir(dir, force)?;
    let mut written = Vec::new();
    let json_err = |e: serde_json::Error| Error::Internal(format!("json encoding: {e}"));

    let mut metrics = Vec::new();
    let mut run_lines = Vec::new();
    for run in runs {
        for record in metric_records(run) {
            serde_json::to_writer(&mut metrics, &record).map_err(json_err)?;
            metrics.push(b'\n');
        }
        serde_json::to_writer(&mut run_lines, run).map_err(json_err)?;
        run_lines.push(b'\n');
    }
    write_file(dir.join("metrics.jsonl"), &metrics, &mut written)?;
    write_file(dir.join("runs.jsonl"), &run_lines, &mut written)?;

    let cells = summarize(runs);
    for table in tables(&cells) {
        write_file(dir.join(format!("summary_{}.csv", table.slug())), table.to_csv()?.as_bytes(), &mut written)?;
    }
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    let long = csv_bytes(
        &["dataset", "model", "batch_size", "optimizer", "estimator", "column", "mean", "std", "ok", "diverged", "failed"],
        cells.iter().map(|(k, s)| {
            let mut row = cell_fields(k).to_vec();
            row.extend([k.label(), opt(s.mean), opt(s.std), s.ok.to_string(), s.diverged.to_string(), s.failed.to_string()]);
            row
        }),
    )?;
    write_file(dir.join("summary_long.csv"), &long, &mut written)?;

    let mut curves: BTreeMap<CellKey, BTreeMap<usize, (f64, f64, usize)>> = BTreeMap::new();
    for run in runs.iter().filter(|r| r.status == RunStatus::Ok) {
        let series = curves.entry(CellKey::of(run)).or_default();
        for e in &run.per_epoch {
            let slot = series.entry(e.epoch).or_insert((0.0, 0.0, 0));
            slot.0 += e.train_loss;
            slot.1 += e.test_metric;
            slot.2 += 1;
        }
    }
    let curve_rows = curves.iter().flat_map(|(k, series)| {
        series.iter().map(move |(epoch, &(loss, metric, n))| {
            let mut row = cell_fields(k).to_vec();
            let n_f = n as f64;
            row.extend([k.label(), epoch.to_string(), (loss / n_f).to_string(), (metric / n_f).to_string(), n.to_string()]);
            row
        })
    });
    let curves_csv = csv_bytes(
        &["dataset", "model", "batch_size", "optimizer", "estimator", "curve", "epoch", "train_loss", "test_metric", "runs"],
        curve_rows,
    )?;
    write_file(dir.join("curves.csv"), &curves_csv, &mut written)?;

    let timing = csv_bytes(
        &["dataset", "model", "batch_size", "optimizer", "estimator", "repeat", "seed", "wall_time_secs"],
        runs.iter().map(|r| {
            let mut row = cell_fields(&CellKey::of(r)).to_vec();
            row.extend([r.repeat.to_string(), r.config.seed.to_string(), format!("{:.6}", r.wall_time)]);
            row
        }),
    )?;
    write_file(dir.join("timing.csv"), &timing, &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SymbolDistribution, SyntheticSpec};
    use crate::harness::config::{DataSource, TrainConfig};
    use crate::harness::sweep::{run_sweep, SweepGrid};

    fn base() -> TrainConfig {
        let spec = SyntheticSpec {
            cardinalities: vec![4],
            distribution: SymbolDistribution::Uniform,
            n: 40,
            noise_std: 0.1,
            seed: 1,
        };
        TrainConfig { epochs: 3, repeats: 2, ..TrainConfig::new(DataSource::Synthetic(spec), "product") }
    }

    fn grid() -> SweepGrid {
        SweepGrid {
            datasets: vec![],
            models: vec![],
            optimizers: vec![OptimizerKind::Sgd],
            estimators: vec![EstimatorMode::Gce],
            batch_sizes: vec![8],
        }
    }

    #[test]
    fn two_runs_of_three_epochs_give_six_records() {
        let sweep = run_sweep(&base(), &grid()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        write_outputs(&sweep.runs, &out, false).unwrap();
        let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
        assert_eq!(metrics.lines().count(), 6);
        let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
        assert_eq!(first["epoch"], 1);
        assert_eq!(first["metric"], "mse");
        assert_eq!(fs::read_to_string(out.join("runs.jsonl")).unwrap().lines().count(), 2);
        let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
        assert_eq!(curves.lines().count(), 1 + 3);
        assert!(curves.lines().nth(1).unwrap().contains("SGD&GCE,1,"));
    }

    #[test]
    fn summary_has_one_row_per_dataset_and_six_columns() {
        let sweep = run_sweep(&TrainConfig { repeats: 1, ..base() }, &SweepGrid::full(vec![8])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&sweep.runs, dir.path(), false).unwrap();
        let text = fs::read_to_string(dir.path().join("summary_product_b8.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "Dataset,SGD,SGD&GCE,Adagrad,Adagrad&GCE,Adam,Adam&GCE");
        assert_eq!(lines[1].split(',').count(), 7);
        assert!(lines[1].starts_with("synthetic,"));
        let long = fs::read_to_string(dir.path().join("summary_long.csv")).unwrap();
        assert_eq!(long.lines().count(), 1 + 6);
    }

    #[test]
    fn refuses_non_empty_directories_without_force() {
        let sweep = run_sweep(&base(), &grid()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&sweep.runs, dir.path(), false).unwrap();
        let err = write_outputs(&sweep.runs, dir.path(), false).unwrap_err();
        assert!(matches!(err, Error::OutputExists { .. }));
        assert!(err.to_string().contains(&dir.path().display().to_string()));
        write_outputs(&sweep.runs, dir.path(), true).unwrap();
    }

    #[test]
    fn outputs_other_than_timing_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_outputs(&run_sweep(&base(), &grid()).unwrap().runs, &a, false).unwrap();
        write_outputs(&run_sweep(&base(), &grid()).unwrap().runs, &b, false).unwrap();
        for name in ["metrics.jsonl", "runs.jsonl", "summary_product_b8.csv", "summary_long.csv", "curves.csv"] {
            assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = write_outputs(&[], &blocker.join("sub"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("file"));
    }
}
