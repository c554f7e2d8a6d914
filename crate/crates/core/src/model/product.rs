use super::{loss_and_grad, Gradients, GroupId, ParamStore, Prediction, ProductSpec};
use crate::data::Row;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(super) fn init<T: Scalar>(spec: &ProductSpec, store: &mut ParamStore<T>) -> Result<()> {
    for name in &spec.factors {
        let f = factor_index(store, name)?;
        for s in 0..store.schema().cardinality(f) {
            store.insert_symbol(f, s, vec![T::one()])?;
        }
    }
    if spec.intercept {
        store.insert_shared("b", vec![T::zero()])?;
    }
    Ok(())
}

fn factor_index<T: Scalar>(store: &ParamStore<T>, name: &str) -> Result<usize> {
    store
        .schema()
        .feature_index(name)
        .ok_or_else(|| Error::Config(format!("factor {name:?} is not a schema feature")))
}

/// Group ids of the row's factor symbols, in factor order.
fn row_factors<T: Scalar>(spec: &ProductSpec, params: &ParamStore<T>, row: &Row) -> Result<Vec<GroupId>> {
    spec.factors
        .iter()
        .map(|name| {
            let f = factor_index(params, name)?;
            params
                .symbol_id(f, row.symbols[f])
                .ok_or_else(|| Error::Internal(format!("no parameter for factor {name:?}")))
        })
        .collect()
}

fn scale<T: Scalar>(spec: &ProductSpec, row: &Row) -> T {
    spec.covariate.map_or(T::one(), |c| T::of(row.covariates[c]))
}

pub(super) fn forward<T: Scalar>(spec: &ProductSpec, params: &ParamStore<T>, row: &Row) -> T {
    let ids = row_factors(spec, params, row).expect("parameters initialized for this spec");
    let product = ids.iter().fold(T::one(), |acc, &id| acc * params.values(id)[0]);
    let mut y = product * scale(spec, row);
    if spec.intercept {
        y += params.shared_values("b")[0];
    }
    y
}

pub(super) fn backward<T: Scalar>(
    spec: &ProductSpec,
    params: &ParamStore<T>,
    row: &Row,
) -> Result<(T, Gradients<T>)> {
    let ids = row_factors(spec, params, row)?;
    let factors: Vec<T> = ids.iter().map(|&id| params.values(id)[0]).collect();
    let x = scale::<T>(spec, row);

    // Products of all factors but one, without dividing.
    let k = factors.len();
    let mut before = vec![T::one(); k + 1];
    for i in 0..k {
        before[i + 1] = before[i] * factors[i];
    }
    let mut after = vec![T::one(); k + 1];
    for i in (0..k).rev() {
        after[i] = after[i + 1] * factors[i];
    }

    let mut y = before[k] * x;
    if spec.intercept {
        y += params.shared_values("b")[0];
    }
    let (loss, d) = loss_and_grad(&Prediction::Scalar(y), row.target)?;
    let d = d[0];

    let mut grads = Gradients::new();
    for (i, &id) in ids.iter().enumerate() {
        grads.insert(id, vec![d * before[i] * after[i + 1] * x]);
    }
    if spec.intercept {
        let b = params.shared_id("b").ok_or_else(|| Error::Internal("missing intercept".into()))?;
        grads.insert(b, vec![d]);
    }
    Ok((loss, grads))
}
