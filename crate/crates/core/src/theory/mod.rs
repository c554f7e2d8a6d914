//! The categorical objective and executable checks of its estimator.
//!
//! The categorical loss averages, over every non-empty symbol group of every
//! feature, the mean per-row loss inside that group. Drawing a batch and
//! averaging a group's rows only over batches that contain the group gives
//! an unbiased estimate of that group's mean; [`draws`] checks this both by
//! exhaustive enumeration and by sampling, together with the geometric law
//! of the first batch that hits the group.

pub mod draws;
pub mod verify;

use crate::data::{symbol_groups, EncodedDataset, Row};
use crate::error::Result;
use crate::model::{backward, forward, loss_value, Gradients, ModelSpec, ParamStore};
use crate::scalar::Scalar;

pub use draws::{
    draw_average_expectation, estimator_expectation, stopping_time_p1, stopping_time_p1_without_replacement,
    stopping_time_simulate, stopping_time_simulate_paired, DrawSpec, ExpectationMethod, ExpectationReport,
};
pub use verify::{verification_suite, Check, VerificationReport};

/// Weight of each row in the categorical loss:
/// `(1/p) * sum over features of 1/|S_{f, symbol_f(row)}|`, with `p` the
/// number of non-empty groups.
pub fn categorical_row_weights(dataset: &EncodedDataset) -> Vec<f64> {
    let groups = symbol_groups(dataset);
    let p = groups.num_nonempty() as f64;
    dataset
        .rows()
        .iter()
        .map(|row| {
            row.symbols
                .iter()
                .enumerate()
                .map(|(f, &s)| 1.0 / groups.get(f, s).len() as f64)
                .sum::<f64>()
                / p
        })
        .collect()
}

/// `(1/p) sum_k (1/|S_k|) sum_{row in S_k} loss(row)` over non-empty groups.
pub fn categorical_loss<T: Scalar>(spec: &ModelSpec, params: &ParamStore<T>, dataset: &EncodedDataset) -> Result<T> {
    let groups = symbol_groups(dataset);
    let losses = dataset
        .rows()
        .iter()
        .map(|row| loss_value(&forward(spec, params, row), row.target))
        .collect::<Result<Vec<T>>>()?;
    let mut total = T::zero();
    let mut p = 0usize;
    for (_, _, rows) in groups.iter() {
        if rows.is_empty() {
            continue;
        }
        let group_sum: T = rows.iter().map(|&i| losses[i]).sum();
        total += group_sum / T::of_usize(rows.len());
        p += 1;
    }
    Ok(total / T::of_usize(p.max(1)))
}

/// Plain mean loss over the rows.
pub fn classic_loss<T: Scalar>(spec: &ModelSpec, params: &ParamStore<T>, dataset: &EncodedDataset) -> Result<T> {
    crate::model::mean_loss(spec, params, dataset.rows())
}

fn weighted_gradient<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    rows: &[Row],
    weights: &[f64],
) -> Result<Gradients<T>> {
    let mut total = params.zeros();
    for (row, &w) in rows.iter().zip(weights) {
        let (_, g) = backward(spec, params, row)?;
        let w = T::of(w);
        for (id, v) in g {
            for (acc, x) in total.get_mut(&id).expect("store group").iter_mut().zip(v) {
                *acc += w * x;
            }
        }
    }
    Ok(total)
}

/// Exact gradient of [`categorical_loss`] for every group.
pub fn full_categorical_gradient<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    dataset: &EncodedDataset,
) -> Result<Gradients<T>> {
    weighted_gradient(spec, params, dataset.rows(), &categorical_row_weights(dataset))
}

/// Exact gradient of [`classic_loss`] for every group.
pub fn full_classic_gradient<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    dataset: &EncodedDataset,
) -> Result<Gradients<T>> {
    let w = vec![1.0 / dataset.len() as f64; dataset.len()];
    weighted_gradient(spec, params, dataset.rows(), &w)
}

/// Central differences `(f(θ+h) - f(θ-h)) / 2h` of one row's loss, for
/// every coordinate of every group.
pub fn finite_difference_gradient<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    row: &Row,
    step: T,
) -> Result<Gradients<T>> {
    finite_difference(params, step, |p| loss_value(&forward(spec, p, row), row.target))
}

/// Central differences of an arbitrary scalar function of the parameters.
pub fn finite_difference<T: Scalar>(
    params: &ParamStore<T>,
    step: T,
    f: impl Fn(&ParamStore<T>) -> Result<T>,
) -> Result<Gradients<T>> {
    let mut probe = params.clone();
    let mut out = Gradients::new();
    let two_h = step + step;
    for id in params.ids() {
        let mut g = Vec::with_capacity(params.values(id).len());
        for j in 0..params.values(id).len() {
            let orig = params.values(id)[j];
            probe.values_mut(id)[j] = orig + step;
            let up = f(&probe)?;
            probe.values_mut(id)[j] = orig - step;
            let down = f(&probe)?;
            probe.values_mut(id)[j] = orig;
            g.push((up - down) / two_h);
        }
        out.insert(id, g);
    }
    Ok(out)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over all shared coordinates.
pub fn max_relative_error<T: Scalar>(a: &Gradients<T>, b: &Gradients<T>, floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (id, va) in a {
        let Some(vb) = b.get(id) else { continue };
        for (&x, &y) in va.iter().zip(vb) {
            let (x, y) = (x.as_f64(), y.as_f64());
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
