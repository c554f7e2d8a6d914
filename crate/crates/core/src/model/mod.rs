//! Symbol-keyed parameters and the models that read them.
//!
//! Every parameter group is owned either by one `(feature, symbol)` pair or
//! is shared by all observations. [`backward`] only reports groups the row
//! actually touches, so the estimator can tell an absent gradient from a
//! zero one.

mod net;
mod product;
mod store;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, FeatureSchema, Row, Target, TaskKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use store::{Gradients, GroupId, ParamKey, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpec {
    /// Features whose per-symbol scalars are multiplied together.
    pub factors: Vec<String>,
    /// Index into the row covariates multiplying the product.
    #[serde(default)]
    pub covariate: Option<usize>,
    /// Adds a shared intercept `b`.
    #[serde(default)]
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    /// Number of covariates appended to the one-hot input.
    #[serde(default)]
    pub covariates: usize,
    pub task: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetSpec {
    pub width: usize,
    pub blocks: usize,
    #[serde(default)]
    pub covariates: usize,
    pub task: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Product(ProductSpec),
    Mlp(MlpSpec),
    TabResNet(ResNetSpec),
}

impl ModelSpec {
    /// `prod_f θ[f, symbol_f] (× covariate) (+ b)`.
    pub fn product<S: Into<String>>(factors: Vec<S>, covariate: Option<usize>, intercept: bool) -> Self {
        ModelSpec::Product(ProductSpec {
            factors: factors.into_iter().map(Into::into).collect(),
            covariate,
            intercept,
        })
    }

    /// Three hidden layers of widths 4, 8, 4.
    pub fn small_mlp(task: TaskKind) -> Self {
        ModelSpec::Mlp(MlpSpec { hidden: vec![4, 8, 4], covariates: 0, task })
    }

    /// Width-8 projection followed by two residual blocks.
    pub fn small_resnet(task: TaskKind) -> Self {
        ModelSpec::TabResNet(ResNetSpec { width: 8, blocks: 2, covariates: 0, task })
    }

    pub fn task(&self) -> TaskKind {
        match self {
            ModelSpec::Product(_) => TaskKind::Regression,
            ModelSpec::Mlp(s) => s.task,
            ModelSpec::TabResNet(s) => s.task,
        }
    }

    /// Number of row covariates the model reads, as a lower bound on arity.
    pub fn covariates_used(&self) -> usize {
        match self {
            ModelSpec::Product(s) => s.covariate.map_or(0, |c| c + 1),
            ModelSpec::Mlp(s) => s.covariates,
            ModelSpec::TabResNet(s) => s.covariates,
        }
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        match self {
            ModelSpec::Product(s) => {
                if s.factors.is_empty() {
                    return Err(Error::Config("product model needs at least one factor".into()));
                }
                for (i, name) in s.factors.iter().enumerate() {
                    if schema.feature_index(name).is_none() {
                        return Err(Error::Config(format!("factor {name:?} is not a schema feature")));
                    }
                    if s.factors[..i].contains(name) {
                        return Err(Error::Config(format!("factor {name:?} listed twice")));
                    }
                }
            }
            ModelSpec::Mlp(s) => {
                if s.hidden.is_empty() || s.hidden.contains(&0) {
                    return Err(Error::Config("mlp hidden sizes must be non-empty and positive".into()));
                }
                check_task(s.task)?;
            }
            ModelSpec::TabResNet(s) => {
                if s.width == 0 {
                    return Err(Error::Config("resnet width must be positive".into()));
                }
                check_task(s.task)?;
            }
        }
        Ok(())
    }
}

fn check_task(task: TaskKind) -> Result<()> {
    match task {
        TaskKind::Classification { num_classes } if num_classes < 2 => {
            Err(Error::Config("classification needs at least two classes".into()))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<T> {
    Scalar(T),
    Logits(Vec<T>),
}

impl<T: Scalar> Prediction<T> {
    /// Regression value, or the arg-max class as a number.
    pub fn point(&self) -> T {
        match self {
            Prediction::Scalar(v) => *v,
            Prediction::Logits(z) => T::of_usize(argmax(z)),
        }
    }
}

pub(crate) fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Parameters for `spec`: product-model scalars start at 1 and intercepts
/// at 0; network weights are uniform in `±1/sqrt(fan_in)` with zero biases.
pub fn init_params<T: Scalar>(spec: &ModelSpec, schema: &FeatureSchema, seed: u64) -> Result<ParamStore<T>> {
    spec.validate(schema)?;
    let mut store = ParamStore::new(schema.clone());
    let mut rng = seeded_rng(seed, 0x1417);
    match spec {
        ModelSpec::Product(s) => product::init(s, &mut store)?,
        ModelSpec::Mlp(s) => net::init_mlp(s, &mut store, &mut rng)?,
        ModelSpec::TabResNet(s) => net::init_resnet(s, &mut store, &mut rng)?,
    }
    Ok(store)
}

pub(crate) fn uniform_weights<T: Scalar, R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| T::of(rng.random_range(-bound..=bound))).collect()
}

pub fn forward<T: Scalar>(spec: &ModelSpec, params: &ParamStore<T>, row: &Row) -> Prediction<T> {
    match spec {
        ModelSpec::Product(s) => Prediction::Scalar(product::forward(s, params, row)),
        ModelSpec::Mlp(s) => net::wrap(s.task, net::mlp_forward(s, params, row)),
        ModelSpec::TabResNet(s) => net::wrap(s.task, net::resnet_forward(s, params, row)),
    }
}

/// Squared error for regression, softmax cross-entropy for classification.
pub fn loss_value<T: Scalar>(prediction: &Prediction<T>, target: Target) -> Result<T> {
    loss_and_grad(prediction, target).map(|(loss, _)| loss)
}

/// Loss and its derivative with respect to the raw model output.
pub(crate) fn loss_and_grad<T: Scalar>(prediction: &Prediction<T>, target: Target) -> Result<(T, Vec<T>)> {
    match (prediction, target) {
        (Prediction::Scalar(y_hat), Target::Value(y)) => {
            let r = *y_hat - T::of(y);
            Ok((r * r, vec![(r + r)]))
        }
        (Prediction::Logits(z), Target::Class(c)) => {
            if c >= z.len() {
                return Err(Error::Data(format!("class {c} out of range for {} logits", z.len())));
            }
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
            let total: T = exps.iter().copied().sum();
            let loss = total.ln() + max - z[c];
            let mut grad: Vec<T> = exps.iter().map(|&e| e / total).collect();
            grad[c] -= T::one();
            Ok((loss, grad))
        }
        (p, t) => Err(Error::Data(format!("target {t:?} does not match prediction {p:?}"))),
    }
}

/// Loss for one row and the gradient of every group the row touches.
/// Groups of symbols the row does not carry are absent from the result.
pub fn backward<T: Scalar>(spec: &ModelSpec, params: &ParamStore<T>, row: &Row) -> Result<(T, Gradients<T>)> {
    match spec {
        ModelSpec::Product(s) => product::backward(s, params, row),
        ModelSpec::Mlp(s) => net::mlp_backward(s, params, row),
        ModelSpec::TabResNet(s) => net::resnet_backward(s, params, row),
    }
}

/// Mean loss over `rows`.
pub fn mean_loss<'a, T: Scalar>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    rows: impl IntoIterator<Item = &'a Row>,
) -> Result<T> {
    let mut total = T::zero();
    let mut n = 0usize;
    for row in rows {
        total += loss_value(&forward(spec, params, row), row.target)?;
        n += 1;
    }
    Ok(if n == 0 { T::zero() } else { total / T::of_usize(n) })
}
