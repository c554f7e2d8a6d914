//! Dense networks over the one-hot input.
//!
//! The first layer never materializes the one-hot vector: its weight column
//! for symbol `s` of feature `f` is the `Symbol(f, s)` parameter group, and
//! the layer output is the sum of the row's active columns plus a bias.

use rand::Rng;

use super::{loss_and_grad, uniform_weights, Gradients, MlpSpec, ParamStore, Prediction, ResNetSpec};
use crate::data::{Row, TaskKind};
use crate::error::Result;
use crate::scalar::Scalar;

pub(super) fn wrap<T: Scalar>(task: TaskKind, out: Vec<T>) -> Prediction<T> {
    match task {
        TaskKind::Regression => Prediction::Scalar(out[0]),
        TaskKind::Classification { .. } => Prediction::Logits(out),
    }
}

fn init_input<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    width: usize,
    covariates: usize,
    rng: &mut R,
) -> Result<()> {
    let fan_in = store.schema().num_symbols() + covariates;
    for f in 0..store.schema().num_features() {
        for s in 0..store.schema().cardinality(f) {
            store.insert_symbol(f, s, uniform_weights(width, fan_in, rng))?;
        }
    }
    if covariates > 0 {
        store.insert_shared(&format!("{prefix}.in.cov"), uniform_weights(width * covariates, fan_in, rng))?;
    }
    store.insert_shared(&format!("{prefix}.in.b"), vec![T::zero(); width])?;
    Ok(())
}

fn init_dense<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    inputs: usize,
    outputs: usize,
    rng: &mut R,
) -> Result<()> {
    store.insert_shared(&format!("{name}.w"), uniform_weights(inputs * outputs, inputs, rng))?;
    store.insert_shared(&format!("{name}.b"), vec![T::zero(); outputs])?;
    Ok(())
}

pub(super) fn init_mlp<T: Scalar, R: Rng + ?Sized>(spec: &MlpSpec, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
    init_input(store, "mlp", spec.hidden[0], spec.covariates, rng)?;
    for (i, pair) in spec.hidden.windows(2).enumerate() {
        init_dense(store, &format!("mlp.h{}", i + 1), pair[0], pair[1], rng)?;
    }
    init_dense(store, "mlp.out", *spec.hidden.last().expect("validated"), spec.task.outputs(), rng)
}

pub(super) fn init_resnet<T: Scalar, R: Rng + ?Sized>(
    spec: &ResNetSpec,
    store: &mut ParamStore<T>,
    rng: &mut R,
) -> Result<()> {
    init_input(store, "res", spec.width, spec.covariates, rng)?;
    for k in 0..spec.blocks {
        init_dense(store, &format!("res.block{k}.l1"), spec.width, spec.width, rng)?;
        init_dense(store, &format!("res.block{k}.l2"), spec.width, spec.width, rng)?;
    }
    init_dense(store, "res.out", spec.width, spec.task.outputs(), rng)
}

fn input_forward<T: Scalar>(params: &ParamStore<T>, prefix: &str, covariates: usize, row: &Row) -> Vec<T> {
    let mut z = params.shared_values(&format!("{prefix}.in.b")).to_vec();
    for (f, &s) in row.symbols.iter().enumerate() {
        let id = params.symbol_id(f, s).expect("every symbol owns an input column");
        for (zi, &w) in z.iter_mut().zip(params.values(id)) {
            *zi += w;
        }
    }
    if covariates > 0 {
        let w = params.shared_values(&format!("{prefix}.in.cov"));
        for (i, zi) in z.iter_mut().enumerate() {
            for j in 0..covariates {
                *zi += w[i * covariates + j] * T::of(row.covariates[j]);
            }
        }
    }
    z
}

fn input_backward<T: Scalar>(
    params: &ParamStore<T>,
    prefix: &str,
    covariates: usize,
    row: &Row,
    dz: &[T],
    grads: &mut Gradients<T>,
) {
    for (f, &s) in row.symbols.iter().enumerate() {
        let id = params.symbol_id(f, s).expect("every symbol owns an input column");
        grads.insert(id, dz.to_vec());
    }
    if covariates > 0 {
        let id = params.shared_id(&format!("{prefix}.in.cov")).expect("covariate weights");
        let mut g = Vec::with_capacity(dz.len() * covariates);
        for &d in dz {
            for j in 0..covariates {
                g.push(d * T::of(row.covariates[j]));
            }
        }
        grads.insert(id, g);
    }
    let b = params.shared_id(&format!("{prefix}.in.b")).expect("input bias");
    grads.insert(b, dz.to_vec());
}

/// `w` is row-major `outputs x inputs`.
fn dense<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(i, &bi)| bi + w[i * n..(i + 1) * n].iter().zip(x).map(|(&wij, &xj)| wij * xj).sum::<T>())
        .collect()
}

/// Writes weight and bias gradients for layer `name`, returns `dL/dx`.
fn dense_backward<T: Scalar>(params: &ParamStore<T>, name: &str, x: &[T], dy: &[T], grads: &mut Gradients<T>) -> Vec<T> {
    let wid = params.shared_id(&format!("{name}.w")).expect("dense weights");
    let bid = params.shared_id(&format!("{name}.b")).expect("dense bias");
    let w = params.values(wid);
    let n = x.len();
    let mut gw = Vec::with_capacity(w.len());
    let mut dx = vec![T::zero(); n];
    for (i, &d) in dy.iter().enumerate() {
        for j in 0..n {
            gw.push(d * x[j]);
            dx[j] += w[i * n + j] * d;
        }
    }
    grads.insert(wid, gw);
    grads.insert(bid, dy.to_vec());
    dx
}

fn apply_dense<T: Scalar>(params: &ParamStore<T>, name: &str, x: &[T]) -> Vec<T> {
    dense(params.shared_values(&format!("{name}.w")), params.shared_values(&format!("{name}.b")), x)
}

fn relu<T: Scalar>(z: &[T]) -> Vec<T> {
    z.iter().map(|&v| v.max(T::zero())).collect()
}

fn relu_backward<T: Scalar>(z: &[T], da: &[T]) -> Vec<T> {
    z.iter().zip(da).map(|(&zi, &d)| if zi > T::zero() { d } else { T::zero() }).collect()
}

/// Hidden pre-activations of every layer plus the raw output.
fn mlp_trace<T: Scalar>(spec: &MlpSpec, params: &ParamStore<T>, row: &Row) -> (Vec<Vec<T>>, Vec<T>) {
    let mut pre = vec![input_forward(params, "mlp", spec.covariates, row)];
    for i in 1..spec.hidden.len() {
        let a = relu(pre.last().expect("non-empty"));
        pre.push(apply_dense(params, &format!("mlp.h{i}"), &a));
    }
    let out = apply_dense(params, "mlp.out", &relu(pre.last().expect("non-empty")));
    (pre, out)
}

pub(super) fn mlp_forward<T: Scalar>(spec: &MlpSpec, params: &ParamStore<T>, row: &Row) -> Vec<T> {
    mlp_trace(spec, params, row).1
}

pub(super) fn mlp_backward<T: Scalar>(spec: &MlpSpec, params: &ParamStore<T>, row: &Row) -> Result<(T, Gradients<T>)> {
    let (pre, out) = mlp_trace(spec, params, row);
    let (loss, d_out) = loss_and_grad(&wrap(spec.task, out), row.target)?;
    let mut grads = Gradients::new();
    let last = pre.len() - 1;
    let mut da = dense_backward(params, "mlp.out", &relu(&pre[last]), &d_out, &mut grads);
    for i in (1..=last).rev() {
        let dz = relu_backward(&pre[i], &da);
        da = dense_backward(params, &format!("mlp.h{i}"), &relu(&pre[i - 1]), &dz, &mut grads);
    }
    let dz0 = relu_backward(&pre[0], &da);
    input_backward(params, "mlp", spec.covariates, row, &dz0, &mut grads);
    Ok((loss, grads))
}

struct ResTrace<T> {
    /// Residual stream entering each block, then the final stream.
    stream: Vec<Vec<T>>,
    /// Inner pre-activation of each block.
    inner: Vec<Vec<T>>,
    out: Vec<T>,
}

fn resnet_trace<T: Scalar>(spec: &ResNetSpec, params: &ParamStore<T>, row: &Row) -> ResTrace<T> {
    let mut stream = vec![input_forward(params, "res", spec.covariates, row)];
    let mut inner = Vec::with_capacity(spec.blocks);
    for k in 0..spec.blocks {
        let h = stream.last().expect("non-empty");
        let u = apply_dense(params, &format!("res.block{k}.l1"), h);
        let v = apply_dense(params, &format!("res.block{k}.l2"), &relu(&u));
        let next: Vec<T> = h.iter().zip(&v).map(|(&a, &b)| a + b).collect();
        inner.push(u);
        stream.push(next);
    }
    let out = apply_dense(params, "res.out", &relu(stream.last().expect("non-empty")));
    ResTrace { stream, inner, out }
}

pub(super) fn resnet_forward<T: Scalar>(spec: &ResNetSpec, params: &ParamStore<T>, row: &Row) -> Vec<T> {
    resnet_trace(spec, params, row).out
}

pub(super) fn resnet_backward<T: Scalar>(
    spec: &ResNetSpec,
    params: &ParamStore<T>,
    row: &Row,
) -> Result<(T, Gradients<T>)> {
    let ResTrace { stream, inner, out } = resnet_trace(spec, params, row);
    let (loss, d_out) = loss_and_grad(&wrap(spec.task, out), row.target)?;
    let mut grads = Gradients::new();
    let top = &stream[spec.blocks];
    let da = dense_backward(params, "res.out", &relu(top), &d_out, &mut grads);
    let mut dh = relu_backward(top, &da);
    for k in (0..spec.blocks).rev() {
        let u = &inner[k];
        let dr = dense_backward(params, &format!("res.block{k}.l2"), &relu(u), &dh, &mut grads);
        let du = relu_backward(u, &dr);
        let dskip = dense_backward(params, &format!("res.block{k}.l1"), &stream[k], &du, &mut grads);
        for (a, b) in dh.iter_mut().zip(dskip) {
            *a += b;
        }
    }
    input_backward(params, "res", spec.covariates, row, &dh, &mut grads);
    Ok((loss, grads))
}
