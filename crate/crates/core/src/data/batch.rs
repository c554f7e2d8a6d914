use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, EncodedDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Shuffle, then cut into `ceil(n / batch_size)` batches; the last one
    /// may be short.
    #[default]
    Partition,
    /// `ceil(n / batch_size)` batches of exactly `batch_size` independent
    /// uniform draws.
    WithReplacement,
}

/// Splits into `(train, test)`. The test side gets `round(n * fraction)`
/// rows, clamped so that both sides keep at least one row.
pub fn split_train_test(
    dataset: &EncodedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} is not in (0, 1)")));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Config(format!("cannot split {n} rows into two non-empty sides")));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, 0x5917));
    let (test, train) = order.split_at(n_test);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Row-index batches over `0..n` drawn from `rng`.
pub fn batch_indices<R: Rng + ?Sized>(
    n: usize,
    batch_size: usize,
    mode: BatchMode,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let num_batches = n.div_ceil(batch_size);
    Ok(match mode {
        BatchMode::Partition => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks(batch_size).map(<[usize]>::to_vec).collect()
        }
        BatchMode::WithReplacement => (0..num_batches)
            .map(|_| (0..batch_size).map(|_| rng.random_range(0..n)).collect())
            .collect(),
    })
}

pub fn make_batches(
    dataset: &EncodedDataset,
    batch_size: usize,
    seed: u64,
    mode: BatchMode,
) -> Result<Vec<Vec<usize>>> {
    batch_indices(dataset.len(), batch_size, mode, &mut seeded_rng(seed, 0xba7c4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSchema, Row, Target, TaskKind};
    use std::sync::Arc;

    fn dataset(n: usize) -> EncodedDataset {
        let schema = Arc::new(FeatureSchema::new(vec![("a", vec!["x"])]).unwrap());
        let rows = (0..n).map(|i| Row::new(vec![0], vec![], Target::Value(i as f64))).collect();
        EncodedDataset::new(schema, vec![], rows, TaskKind::Regression).unwrap()
    }

    fn targets(d: &EncodedDataset) -> Vec<f64> {
        d.rows()
            .iter()
            .map(|r| match r.target {
                Target::Value(v) => v,
                Target::Class(_) => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = dataset(10);
        let (train, test) = split_train_test(&d, 0.2, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let (train2, test2) = split_train_test(&d, 0.2, 7).unwrap();
        assert_eq!(targets(&train), targets(&train2));
        assert_eq!(targets(&test), targets(&test2));
        let mut all = targets(&train);
        all.extend(targets(&test));
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn split_keeps_both_sides_non_empty() {
        let (train, test) = split_train_test(&dataset(2), 0.999, 3).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
        let (train, test) = split_train_test(&dataset(2), 0.001, 3).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
        assert!(matches!(split_train_test(&dataset(1), 0.5, 0), Err(Error::Config(_))));
        assert!(matches!(split_train_test(&dataset(5), 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(split_train_test(&dataset(5), 0.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn partition_batches() {
        let d = dataset(5);
        let batches = make_batches(&d, 2, 1, BatchMode::Partition).unwrap();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);

        let singletons = make_batches(&d, 1, 1, BatchMode::Partition).unwrap();
        assert_eq!(singletons.len(), 5);
        assert!(singletons.iter().all(|b| b.len() == 1));
        assert!(matches!(make_batches(&d, 0, 1, BatchMode::Partition), Err(Error::Config(_))));
    }

    #[test]
    fn with_replacement_pairs_are_uniform() {
        let mut rng = seeded_rng(11, 0);
        let mut counts = [0u32; 25];
        let draws = 100_000;
        for _ in 0..draws {
            let b = &batch_indices(5, 2, BatchMode::WithReplacement, &mut rng).unwrap()[0];
            assert_eq!(b.len(), 2);
            counts[b[0] * 5 + b[1]] += 1;
        }
        let expected = draws as f64 / 25.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 24 degrees of freedom, 0.1% upper tail.
        assert!(chi2 < 51.18, "chi-square {chi2}");
    }

    #[test]
    fn partition_visits_every_row_once() {
        for n in 1..40 {
            for b in 1..7 {
                let batches = batch_indices(n, b, BatchMode::Partition, &mut seeded_rng(n as u64, b as u64)).unwrap();
                assert_eq!(batches.len(), n.div_ceil(b));
                let mut seen = batches.concat();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
