//! Batch gradient accumulation with per-symbol presence counters.
//!
//! The classic estimator divides every accumulated group by the batch size
//! and hands all groups to the optimizer, including symbols the batch never
//! saw (as explicit zeros). The GCE estimator divides each symbol-owned group
//! by the number of rows in the batch that carry its symbol and leaves
//! groups with a zero count out of the update mask entirely. Shared groups
//! are divided by the batch size in both modes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, GroupId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    Classic,
    Gce,
}

impl std::fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorMode::Classic => "classic",
            EstimatorMode::Gce => "gce",
        })
    }
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classic" => Ok(EstimatorMode::Classic),
            "gce" => Ok(EstimatorMode::Gce),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Finalized batch gradient plus the groups the optimizer may touch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGradient<T> {
    pub grads: Gradients<T>,
    pub mask: BTreeSet<GroupId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradAccumulator<T> {
    sums: Vec<Option<Vec<T>>>,
    counts: Vec<Vec<usize>>,
    batch_size: usize,
}

impl<T: Scalar> GradAccumulator<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let schema = params.schema();
        Self {
            sums: vec![None; params.num_groups()],
            counts: (0..schema.num_features()).map(|f| vec![0; schema.cardinality(f)]).collect(),
            batch_size: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Rows seen so far carrying symbol `s` of feature `f`.
    pub fn count(&self, f: usize, s: usize) -> usize {
        self.counts[f][s]
    }

    /// Accumulated sum for a group, `None` if no row contributed to it.
    pub fn sum(&self, id: GroupId) -> Option<&[T]> {
        self.sums.get(id.0)?.as_deref()
    }

    /// Adds one row's gradients and bumps the row's symbol counters.
    ///
    /// Every symbol-owned group in `row_grads` must belong to one of
    /// `row_symbols`; nothing is modified if the check fails.
    pub fn accumulate(&mut self, params: &ParamStore<T>, row_grads: &Gradients<T>, row_symbols: &[usize]) -> Result<()> {
        if row_symbols.len() != self.counts.len() {
            return Err(Error::Internal(format!(
                "row has {} symbols, accumulator tracks {} features",
                row_symbols.len(),
                self.counts.len()
            )));
        }
        for (f, &s) in row_symbols.iter().enumerate() {
            if s >= self.counts[f].len() {
                return Err(Error::Internal(format!("symbol {s} out of range for feature {f}")));
            }
        }
        for (&id, g) in row_grads {
            if id.0 >= self.sums.len() {
                return Err(Error::Internal(format!("group {} is outside the parameter space", id.0)));
            }
            if g.len() != params.values(id).len() {
                return Err(Error::Internal(format!("gradient length mismatch for {}", params.key(id))));
            }
            if let Some((f, s)) = params.owner(id) {
                if row_symbols[f] != s {
                    return Err(Error::Internal(format!(
                        "row does not carry the symbol owning {}",
                        params.key(id)
                    )));
                }
            }
        }
        for (&id, g) in row_grads {
            match &mut self.sums[id.0] {
                Some(sum) => sum.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(g.clone()),
            }
        }
        for (f, &s) in row_symbols.iter().enumerate() {
            self.counts[f][s] += 1;
        }
        self.batch_size += 1;
        Ok(())
    }

    pub fn finalize(&self, params: &ParamStore<T>, mode: EstimatorMode) -> Result<ScaledGradient<T>> {
        if self.batch_size == 0 {
            return Err(Error::Estimator("cannot finalize an empty batch".into()));
        }
        let batch = T::of_usize(self.batch_size);
        let mut grads = Gradients::new();
        let mut mask = BTreeSet::new();
        for id in params.ids() {
            let divisor = match (mode, params.owner(id)) {
                (EstimatorMode::Classic, _) | (EstimatorMode::Gce, None) => batch,
                (EstimatorMode::Gce, Some((f, s))) => match self.counts[f][s] {
                    0 => continue,
                    c => T::of_usize(c),
                },
            };
            let scaled = match &self.sums[id.0] {
                Some(sum) => sum.iter().map(|&v| v / divisor).collect(),
                None => vec![T::zero(); params.values(id).len()],
            };
            grads.insert(id, scaled);
            mask.insert(id);
        }
        Ok(ScaledGradient { grads, mask })
    }

    pub fn reset(&mut self) {
        self.sums.iter_mut().for_each(|s| *s = None);
        self.counts.iter_mut().flatten().for_each(|c| *c = 0);
        self.batch_size = 0;
    }
}
