//! SGD, AdaGrad and Adam applied group by group under an update mask.
//!
//! Groups outside the mask are skipped entirely: neither their parameters
//! nor any of their optimizer state changes. Adam keeps one step counter per
//! group, so bias correction reflects how many updates that group has
//! actually received.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::ScaledGradient;
use crate::model::{GroupId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    AdaGrad,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Sgd, OptimizerKind::AdaGrad, OptimizerKind::Adam];

    /// Column label used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "SGD",
            OptimizerKind::AdaGrad => "Adagrad",
            OptimizerKind::Adam => "Adam",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::AdaGrad => "adagrad",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adagrad" => Ok(OptimizerKind::AdaGrad),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: f64,
    #[serde(default)]
    pub eps: f64,
}

impl Hyper {
    pub fn defaults(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => Hyper { lr: 1e-2, beta1: 0.0, beta2: 0.0, eps: 0.0 },
            OptimizerKind::AdaGrad => Hyper { lr: 1e-2, beta1: 0.0, beta2: 0.0, eps: 1e-10 },
            OptimizerKind::Adam => Hyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        Hyper { lr, ..self }
    }

    fn validate(&self, kind: OptimizerKind) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        match kind {
            OptimizerKind::Sgd => {}
            OptimizerKind::AdaGrad => {
                if !(self.eps >= 0.0) {
                    return Err(Error::Config("adagrad eps must be non-negative".into()));
                }
            }
            OptimizerKind::Adam => {
                if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
                    return Err(Error::Config("adam betas must lie in [0, 1)".into()));
                }
                if !(self.eps > 0.0) {
                    return Err(Error::Config("adam eps must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Optimizer state of one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupState<T> {
    Sgd,
    AdaGrad { sum_sq: Vec<T> },
    Adam { m: Vec<T>, v: Vec<T>, t: u32 },
}

impl<T: Scalar> GroupState<T> {
    /// Every stored number as raw bits, for exact comparisons.
    pub fn bits(&self) -> Vec<u64> {
        match self {
            GroupState::Sgd => Vec::new(),
            GroupState::AdaGrad { sum_sq } => sum_sq.iter().map(|x| x.bits()).collect(),
            GroupState::Adam { m, v, t } => {
                m.iter().chain(v).map(|x| x.bits()).chain(std::iter::once(u64::from(*t))).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    kind: OptimizerKind,
    hyper: Hyper,
    groups: Vec<GroupState<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, hyper: Hyper, params: &ParamStore<T>) -> Result<Self> {
        hyper.validate(kind)?;
        let groups = params
            .ids()
            .map(|id| {
                let n = params.values(id).len();
                match kind {
                    OptimizerKind::Sgd => GroupState::Sgd,
                    OptimizerKind::AdaGrad => GroupState::AdaGrad { sum_sq: vec![T::zero(); n] },
                    OptimizerKind::Adam => GroupState::Adam { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 },
                }
            })
            .collect();
        Ok(Self { kind, hyper, groups })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper(&self) -> Hyper {
        self.hyper
    }

    pub fn group(&self, id: GroupId) -> &GroupState<T> {
        &self.groups[id.0]
    }

    /// Steps every group in `scaled.mask`; all other groups are untouched.
    pub fn apply_update(&mut self, params: &mut ParamStore<T>, scaled: &ScaledGradient<T>) -> Result<()> {
        if params.num_groups() != self.groups.len() {
            return Err(Error::Internal("optimizer state does not match the parameter store".into()));
        }
        for &id in &scaled.mask {
            let g = scaled
                .grads
                .get(&id)
                .ok_or_else(|| Error::Internal(format!("masked group {} has no gradient", id.0)))?;
            if id.0 >= self.groups.len() || g.len() != params.values(id).len() {
                return Err(Error::Internal(format!("gradient shape mismatch for group {}", id.0)));
            }
        }
        let lr = T::of(self.hyper.lr);
        let eps = T::of(self.hyper.eps);
        let (beta1, beta2) = (T::of(self.hyper.beta1), T::of(self.hyper.beta2));
        for &id in &scaled.mask {
            let g = &scaled.grads[&id];
            let theta = params.values_mut(id);
            match &mut self.groups[id.0] {
                GroupState::Sgd => {
                    for (p, &gi) in theta.iter_mut().zip(g) {
                        *p -= lr * gi;
                    }
                }
                GroupState::AdaGrad { sum_sq } => {
                    for ((p, s), &gi) in theta.iter_mut().zip(sum_sq.iter_mut()).zip(g) {
                        *s += gi * gi;
                        *p -= lr * gi / (s.sqrt() + eps);
                    }
                }
                GroupState::Adam { m, v, t } => {
                    *t += 1;
                    let step = i32::try_from(*t).unwrap_or(i32::MAX);
                    let c1 = T::one() - beta1.powi(step);
                    let c2 = T::one() - beta2.powi(step);
                    for (((p, mi), vi), &gi) in theta.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                        *mi = beta1 * *mi + (T::one() - beta1) * gi;
                        *vi = beta2 * *vi + (T::one() - beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fresh state for `params`, all accumulators and moments at zero.
pub fn init_state<T: Scalar>(kind: OptimizerKind, hyper: Hyper, params: &ParamStore<T>) -> Result<OptimizerState<T>> {
    OptimizerState::new(kind, hyper, params)
}
