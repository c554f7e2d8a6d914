//! Training loop, sweeps over optimizers, estimators and batch sizes,
//! output files and the command line.
//!
//! Every run is a pure function of its [`TrainConfig`]: the train/test
//! split, initialization and batch order all derive from the seed. Runs of
//! a sweep execute in parallel and are merged by cell key.

mod cli;
mod config;
mod output;
mod sweep;
mod train;

pub use cli::{cli_main, parse_batch_sizes, run_cli};
pub use config::{
    parse_distribution, parse_synthetic, resolve_model, DataSource, LoadedData, SchemaFile, TrainConfig,
};
pub use output::{metric_records, prepare_dir, write_outputs, MetricRecord};
pub use sweep::{
    column_label, mean_std, run_sweep, run_sweep_on, summarize, tables, CellKey, CellSummary, SummaryTable,
    SweepGrid, SweepResult, TABLE_COLUMNS, TABLE_HEADER,
};
pub use train::{evaluate, repeat_seeds, run_on, run_training, EpochRecord, Metric, RunResult, RunStatus, Trainer};
