//! Batches drawn from `Z` and the subset `T` they may or may not hit.

use rand::seq::index::sample;
use rand::Rng;

use crate::data::{seeded_rng, symbol_groups, EncodedDataset};
use crate::error::{Error, Result};
use crate::model::{backward, ModelSpec, ParamStore};
use crate::scalar::Scalar;

/// Largest `|Z|^m` the exhaustive method will enumerate.
pub const MAX_ENUMERATION: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMethod {
    /// All `|Z|^m` ordered draws.
    Exhaustive,
    /// `trials` independent draws.
    MonteCarlo { trials: usize, seed: u64 },
}

/// Expected value of the draw-average estimator for a subset `T` of
/// `0..z_size`.
///
/// A draw is `m` uniform picks from `Z` with replacement. Draws that miss
/// `T` are discarded; each remaining draw contributes the mean score of its
/// picks inside `T`, counted with multiplicity. `scores[j]` is the score of
/// `subset[j]`.
pub fn draw_average_expectation<T: Scalar>(
    z_size: usize,
    subset: &[usize],
    scores: &[Vec<T>],
    m: usize,
    method: ExpectationMethod,
) -> Result<Vec<T>> {
    if subset.is_empty() || subset.len() != scores.len() {
        return Err(Error::Config("subset must be non-empty with one score per member".into()));
    }
    if m == 0 {
        return Err(Error::Config("draw size must be at least 1".into()));
    }
    let dim = scores[0].len();
    let mut slot = vec![None; z_size];
    for (j, &i) in subset.iter().enumerate() {
        if i >= z_size || slot[i].is_some() {
            return Err(Error::Config(format!("subset member {i} is out of range or repeated")));
        }
        slot[i] = Some(j);
    }

    let mut total = vec![T::zero(); dim];
    let mut kept = 0usize;
    let mut inner = vec![T::zero(); dim];
    let mut visit = |draw: &[usize]| {
        inner.iter_mut().for_each(|v| *v = T::zero());
        let mut hits = 0usize;
        for &x in draw {
            if let Some(j) = slot[x] {
                hits += 1;
                for (a, &b) in inner.iter_mut().zip(&scores[j]) {
                    *a += b;
                }
            }
        }
        if hits > 0 {
            let h = T::of_usize(hits);
            for (t, &v) in total.iter_mut().zip(&inner) {
                *t += v / h;
            }
            kept += 1;
        }
    };

    match method {
        ExpectationMethod::Exhaustive => {
            let count = (z_size as u64).checked_pow(m as u32).filter(|&c| c <= MAX_ENUMERATION);
            let Some(count) = count else {
                return Err(Error::Size(format!("{z_size}^{m} draws exceed the enumeration limit")));
            };
            let mut draw = vec![0usize; m];
            for _ in 0..count {
                visit(&draw);
                for d in draw.iter_mut() {
                    *d += 1;
                    if *d < z_size {
                        break;
                    }
                    *d = 0;
                }
            }
        }
        ExpectationMethod::MonteCarlo { trials, seed } => {
            let mut rng = seeded_rng(seed, 0xd4a3);
            let mut draw = vec![0usize; m];
            for _ in 0..trials {
                draw.iter_mut().for_each(|d| *d = rng.random_range(0..z_size));
                visit(&draw);
            }
        }
    }
    if kept == 0 {
        return Err(Error::Estimator("no draw hit the subset".into()));
    }
    let k = T::of_usize(kept);
    Ok(total.into_iter().map(|v| v / k).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationReport<T> {
    /// Expected (or sampled) estimator value on the group's parameters.
    pub expected: Vec<T>,
    /// Mean score over the group's rows.
    pub exact: Vec<T>,
    pub max_abs_error: T,
}

impl<T: Scalar> ExpectationReport<T> {
    /// `max_abs_error / max |exact|`, or the absolute error when the exact
    /// value is zero.
    pub fn relative_error(&self) -> T {
        let scale = self.exact.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        if scale > T::zero() {
            self.max_abs_error / scale
        } else {
            self.max_abs_error
        }
    }
}

/// Checks the draw-average estimator on the symbol group of `(feature,
/// symbol)`, with each row's score being its gradient on that symbol's
/// parameters.
pub fn estimator_expectation<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    dataset: &EncodedDataset,
    feature: usize,
    symbol: usize,
    m: usize,
    method: ExpectationMethod,
) -> Result<ExpectationReport<T>> {
    let id = params
        .symbol_id(feature, symbol)
        .ok_or_else(|| Error::Config(format!("model has no parameters for symbol ({feature}, {symbol})")))?;
    let groups = symbol_groups(dataset);
    let members = groups.get(feature, symbol);
    if members.is_empty() {
        return Err(Error::Config("symbol group is empty".into()));
    }
    let scores = members
        .iter()
        .map(|&i| {
            let (_, g) = backward(spec, params, dataset.row(i))?;
            g.get(&id).cloned().ok_or_else(|| Error::Internal("member row did not touch its own group".into()))
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let n = T::of_usize(members.len());
    let mut exact = vec![T::zero(); scores[0].len()];
    for s in &scores {
        for (e, &v) in exact.iter_mut().zip(s) {
            *e += v;
        }
    }
    exact.iter_mut().for_each(|e| *e /= n);
    let expected = draw_average_expectation(dataset.len(), members, &scores, m, method)?;
    let max_abs_error = expected.iter().zip(&exact).fold(T::zero(), |a, (&x, &y)| a.max((x - y).abs()));
    Ok(ExpectationReport { expected, exact, max_abs_error })
}

fn check_sizes(z_size: usize, t_size: usize, m: usize) -> Result<()> {
    if t_size == 0 || t_size > z_size || m == 0 {
        return Err(Error::Config(format!("need 1 <= |T| <= |Z| and m >= 1, got |Z|={z_size} |T|={t_size} m={m}")));
    }
    Ok(())
}

/// Probability that a with-replacement draw of `m` hits `T`:
/// `1 - ((|Z| - |T|) / |Z|)^m`.
pub fn stopping_time_p1(z_size: usize, t_size: usize, m: usize) -> Result<f64> {
    check_sizes(z_size, t_size, m)?;
    let miss = (z_size - t_size) as f64 / z_size as f64;
    Ok(1.0 - miss.powi(m as i32))
}

/// Same probability for a draw of `min(m, |Z|)` distinct elements.
pub fn stopping_time_p1_without_replacement(z_size: usize, t_size: usize, m: usize) -> Result<f64> {
    check_sizes(z_size, t_size, m)?;
    let m = m.min(z_size);
    let outside = z_size - t_size;
    if m > outside {
        return Ok(1.0);
    }
    let miss: f64 = (0..m).map(|i| (outside - i) as f64 / (z_size - i) as f64).product();
    Ok(1.0 - miss)
}

/// Sampling setup for the stopping-time simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawSpec {
    pub z_size: usize,
    /// Members of `T`, distinct indices in `0..z_size`.
    pub subset: Vec<usize>,
    /// Draw size per batch.
    pub m: usize,
    /// Picks within a batch are independent when true, distinct otherwise
    /// (a batch of `m >= |Z|` distinct picks is all of `Z`).
    pub replacement: bool,
}

impl DrawSpec {
    /// `T` = the first `t_size` elements of `Z`.
    pub fn prefix(z_size: usize, t_size: usize, m: usize, replacement: bool) -> Self {
        Self { z_size, subset: (0..t_size).collect(), m, replacement }
    }

    fn membership(&self) -> Result<Vec<bool>> {
        check_sizes(self.z_size, self.subset.len(), self.m)?;
        let mut inside = vec![false; self.z_size];
        for &i in &self.subset {
            if i >= self.z_size || inside[i] {
                return Err(Error::Config(format!("subset member {i} is out of range or repeated")));
            }
            inside[i] = true;
        }
        Ok(inside)
    }
}

/// Mean index of the first batch hitting `T`, over `trials` runs.
pub fn stopping_time_simulate(spec: &DrawSpec, trials: usize, seed: u64) -> Result<f64> {
    let (with, without) = stopping_time_simulate_paired(spec, trials, seed)?;
    Ok(if spec.replacement { with } else { without })
}

/// Both sampling schemes driven by the same random stream.
///
/// Each batch reads uniform picks `x1, x2, ...`; the with-replacement batch
/// is `x1..xm`, the distinct batch keeps reading until it holds
/// `min(m, |Z|)` distinct values. The distinct batch therefore contains the
/// with-replacement one, so its first hit never comes later. Returns
/// `(with_replacement_mean, without_replacement_mean)`.
pub fn stopping_time_simulate_paired(spec: &DrawSpec, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let inside = spec.membership()?;
    let z = spec.z_size;
    let distinct_target = spec.m.min(z);
    let mut rng = seeded_rng(seed, 0x5709);
    let mut seen = vec![0u32; z];
    let mut epoch = 0u32;
    let (mut total_with, mut total_without) = (0u64, 0u64);

    for _ in 0..trials {
        let (mut k_with, mut k_without) = (None, None);
        let mut k = 0u64;
        while k_with.is_none() || k_without.is_none() {
            k += 1;
            epoch = epoch.wrapping_add(1);
            if epoch == 0 {
                seen.iter_mut().for_each(|s| *s = 0);
                epoch = 1;
            }
            let (mut hit_with, mut hit_without) = (false, false);
            let (mut picks, mut distinct) = (0usize, 0usize);
            while picks < spec.m || distinct < distinct_target {
                let x = rng.random_range(0..z);
                if picks < spec.m {
                    hit_with |= inside[x];
                }
                picks += 1;
                if seen[x] != epoch && distinct < distinct_target {
                    seen[x] = epoch;
                    distinct += 1;
                    hit_without |= inside[x];
                }
            }
            if hit_with && k_with.is_none() {
                k_with = Some(k);
            }
            if hit_without && k_without.is_none() {
                k_without = Some(k);
            }
        }
        total_with += k_with.expect("loop exit");
        total_without += k_without.expect("loop exit");
    }
    Ok((total_with as f64 / trials as f64, total_without as f64 / trials as f64))
}

/// `m` distinct picks from `0..z`, for callers that want a plain
/// without-replacement batch.
pub fn draw_distinct<R: Rng + ?Sized>(z: usize, m: usize, rng: &mut R) -> Vec<usize> {
    sample(rng, z, m.min(z)).into_vec()
}
