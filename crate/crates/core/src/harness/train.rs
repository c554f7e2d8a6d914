use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{resolve_model, LoadedData, TrainConfig};
use crate::data::{batch_indices, seeded_rng, EncodedDataset, Row, TaskKind};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorMode, GradAccumulator};
use crate::model::{argmax, backward, forward, init_params, mean_loss, ModelSpec, ParamStore, Prediction};
use crate::optim::{Hyper, OptimizerKind, OptimizerState};
use crate::scalar::Scalar;

/// Parameters, optimizer state and accumulator of one run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    spec: ModelSpec,
    params: ParamStore<T>,
    state: OptimizerState<T>,
    acc: GradAccumulator<T>,
    mode: EstimatorMode,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(spec: ModelSpec, params: ParamStore<T>, kind: OptimizerKind, hyper: Hyper, mode: EstimatorMode) -> Result<Self> {
        spec.validate(params.schema())?;
        let state = OptimizerState::new(kind, hyper, &params)?;
        let acc = GradAccumulator::new(&params);
        Ok(Self { spec, params, state, acc, mode })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn state(&self) -> &OptimizerState<T> {
        &self.state
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    /// Accumulates every row, finalizes under the trainer's estimator mode
    /// and applies one optimizer step. Returns the mean loss of the batch
    /// before the step.
    pub fn step_batch<'a>(&mut self, rows: impl IntoIterator<Item = &'a Row>) -> Result<T> {
        self.acc.reset();
        let mut total = T::zero();
        for row in rows {
            let (loss, grads) = backward(&self.spec, &self.params, row)?;
            self.acc.accumulate(&self.params, &grads, &row.symbols)?;
            total += loss;
        }
        let scaled = self.acc.finalize(&self.params, self.mode)?;
        self.state.apply_update(&mut self.params, &scaled)?;
        Ok(total / T::of_usize(self.acc.batch_size()))
    }
}

/// MSE for regression, error rate for classification.
pub fn evaluate<T: Scalar>(spec: &ModelSpec, params: &ParamStore<T>, dataset: &EncodedDataset) -> Result<f64> {
    match dataset.task() {
        TaskKind::Regression => mean_loss(spec, params, dataset.rows()).map(|m| m.as_f64()),
        TaskKind::Classification { .. } => {
            if dataset.is_empty() {
                return Ok(0.0);
            }
            let mut wrong = 0usize;
            for row in dataset.rows() {
                let predicted = match forward(spec, params, row) {
                    Prediction::Logits(z) => argmax(&z),
                    Prediction::Scalar(_) => {
                        return Err(Error::Config("classification data needs a classification model".into()))
                    }
                };
                if row.target != crate::data::Target::Class(predicted) {
                    wrong += 1;
                }
            }
            Ok(wrong as f64 / dataset.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    ErrorRate,
}

impl Metric {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Regression => Metric::Mse,
            TaskKind::Classification { .. } => Metric::ErrorRate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    /// A batch loss, epoch loss or metric became non-finite during `epoch`.
    Diverged { epoch: usize },
    /// The run could not be carried out.
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    /// The configuration, with `seed` set to the seed of this run.
    pub config: TrainConfig,
    pub repeat: usize,
    pub metric: Metric,
    pub per_epoch: Vec<EpochRecord>,
    /// Test metric after the last epoch; `None` unless the run finished.
    pub final_metric: Option<f64>,
    pub status: RunStatus,
    /// Seconds; kept out of equality so that reruns compare equal.
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Equal up to wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self { wall_time: 0.0, ..self.clone() } == Self { wall_time: 0.0, ..other.clone() }
    }

    pub(crate) fn failed(data: &LoadedData, config: &TrainConfig, repeat: usize, err: &Error) -> Self {
        Self {
            dataset: data.name.clone(),
            config: config.clone(),
            repeat,
            metric: Metric::for_task(data.train.task()),
            per_epoch: Vec::new(),
            final_metric: None,
            status: RunStatus::Failed { message: err.to_string() },
            wall_time: 0.0,
        }
    }
}

/// Loads `config.data` and trains in `f64` with seed `config.seed`.
pub fn run_training(config: &TrainConfig) -> Result<RunResult> {
    config.validate()?;
    let data = config.data.load()?;
    run_on::<f64>(config, &data, 0)
}

/// Trains on already loaded data. The data split, initialization and batch
/// order all derive from `config.seed`.
pub fn run_on<T: Scalar>(config: &TrainConfig, data: &LoadedData, repeat: usize) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let (mut train, mut test) = data.split(config.test_fraction, config.seed)?;
    let spec = resolve_model(&config.model, &train)?;
    if config.scale_covariates && spec.covariates_used() > 0 {
        let ranges = train.covariate_ranges();
        train = train.min_max_scaled(&ranges);
        test = test.min_max_scaled(&ranges);
    }
    let params = init_params::<T>(&spec, train.schema(), config.seed)?;
    let mut trainer = Trainer::new(spec, params, config.optimizer, config.hyper(), config.estimator)?;
    let mut rng = seeded_rng(config.seed, 0xe90c);

    let mut per_epoch = Vec::with_capacity(config.epochs);
    let mut status = RunStatus::Ok;
    'epochs: for epoch in 1..=config.epochs {
        for batch in batch_indices(train.len(), config.batch_size, config.batch_mode, &mut rng)? {
            let loss = trainer.step_batch(batch.iter().map(|&i| train.row(i)))?;
            if !loss.is_finite() {
                status = RunStatus::Diverged { epoch };
                break 'epochs;
            }
        }
        let train_loss = mean_loss(trainer.spec(), trainer.params(), train.rows())?.as_f64();
        let test_metric = evaluate(trainer.spec(), trainer.params(), &test)?;
        if !train_loss.is_finite() || !test_metric.is_finite() {
            status = RunStatus::Diverged { epoch };
            break;
        }
        per_epoch.push(EpochRecord { epoch, train_loss, test_metric });
    }
    let final_metric = match status {
        RunStatus::Ok => per_epoch.last().map(|r| r.test_metric),
        _ => None,
    };
    Ok(RunResult {
        dataset: data.name.clone(),
        config: config.clone(),
        repeat,
        metric: Metric::for_task(train.task()),
        per_epoch,
        final_metric,
        status,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Seeds `seed, seed + 1, ...` for `config.repeats` runs.
pub fn repeat_seeds(config: &TrainConfig) -> impl Iterator<Item = (usize, u64)> + '_ {
    (0..config.repeats).map(move |r| (r, config.seed.wrapping_add(r as u64)))
}
