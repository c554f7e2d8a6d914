//! Categorical schemas, encoded datasets and everything that slices them.

mod batch;
mod csv_io;
mod synth;

use std::collections::HashSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{batch_indices, make_batches, split_train_test, BatchMode};
pub use csv_io::{infer_schema, load_csv, CsvSpec};
pub use synth::{generate_synthetic, SymbolDistribution, SyntheticSpec};

/// Deterministic generator for one purpose (`stream`) of one run (`seed`).
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    name: String,
    alphabet: Vec<String>,
}

impl Feature {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn cardinality(&self) -> usize {
        self.alphabet.len()
    }
}

/// Ordered categorical features, each with an ordered alphabet of symbols.
///
/// Symbols are laid out feature after feature, so symbol `s` of feature `f`
/// sits at one-hot position `offset(f) + s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    offsets: Vec<usize>,
    num_symbols: usize,
}

impl FeatureSchema {
    pub fn new<N, S>(features: Vec<(N, Vec<S>)>) -> Result<Self>
    where
        N: Into<String>,
        S: Into<String>,
    {
        let features: Vec<Feature> = features
            .into_iter()
            .map(|(name, alphabet)| Feature {
                name: name.into(),
                alphabet: alphabet.into_iter().map(Into::into).collect(),
            })
            .collect();
        if features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut names = HashSet::new();
        for feature in &features {
            if !names.insert(feature.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature {:?}", feature.name)));
            }
            if feature.alphabet.is_empty() {
                return Err(Error::Schema(format!("feature {:?} has an empty alphabet", feature.name)));
            }
            let mut symbols = HashSet::new();
            for symbol in &feature.alphabet {
                if !symbols.insert(symbol.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate symbol {symbol:?} in feature {:?}",
                        feature.name
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(features.len());
        let mut total = 0;
        for feature in &features {
            offsets.push(total);
            total += feature.cardinality();
        }
        Ok(Self { features, offsets, num_symbols: total })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    /// Total symbol count `p` across all alphabets.
    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn feature(&self, f: usize) -> &Feature {
        &self.features[f]
    }

    pub fn cardinality(&self, f: usize) -> usize {
        self.features[f].cardinality()
    }

    pub fn offset(&self, f: usize) -> usize {
        self.offsets[f]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn symbol_index(&self, f: usize, symbol: &str) -> Option<usize> {
        self.features[f].alphabet.iter().position(|s| s == symbol)
    }

    pub fn symbol_name(&self, f: usize, s: usize) -> &str {
        &self.features[f].alphabet[s]
    }

    /// Maps one observation given by symbol names onto symbol indices.
    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<usize>> {
        if symbols.len() != self.features.len() {
            return Err(Error::Data(format!(
                "expected {} symbols, got {}",
                self.features.len(),
                symbols.len()
            )));
        }
        symbols
            .iter()
            .enumerate()
            .map(|(f, s)| {
                self.symbol_index(f, s.as_ref()).ok_or_else(|| Error::UnknownSymbol {
                    feature: self.features[f].name.clone(),
                    symbol: s.as_ref().to_string(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TaskKind {
    Regression,
    Classification { num_classes: usize },
}

impl TaskKind {
    pub fn outputs(self) -> usize {
        match self {
            TaskKind::Regression => 1,
            TaskKind::Classification { num_classes } => num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub symbols: Vec<usize>,
    pub covariates: Vec<f64>,
    pub target: Target,
}

impl Row {
    pub fn new(symbols: Vec<usize>, covariates: Vec<f64>, target: Target) -> Self {
        Self { symbols, covariates, target }
    }
}

/// Observations as symbol indices plus numeric covariates and a target.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    schema: Arc<FeatureSchema>,
    covariate_names: Vec<String>,
    rows: Vec<Row>,
    task: TaskKind,
}

impl EncodedDataset {
    pub fn new(
        schema: Arc<FeatureSchema>,
        covariate_names: Vec<String>,
        rows: Vec<Row>,
        task: TaskKind,
    ) -> Result<Self> {
        if let TaskKind::Classification { num_classes } = task {
            if num_classes < 2 {
                return Err(Error::Config("classification needs at least two classes".into()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.symbols.len() != schema.num_features() {
                return Err(Error::Data(format!(
                    "row {i} has {} symbols, schema has {} features",
                    row.symbols.len(),
                    schema.num_features()
                )));
            }
            for (f, &s) in row.symbols.iter().enumerate() {
                if s >= schema.cardinality(f) {
                    return Err(Error::Data(format!(
                        "row {i}: symbol index {s} out of range for feature {:?}",
                        schema.feature(f).name()
                    )));
                }
            }
            if row.covariates.len() != covariate_names.len() {
                return Err(Error::Data(format!(
                    "row {i} has {} covariates, expected {}",
                    row.covariates.len(),
                    covariate_names.len()
                )));
            }
            match (task, row.target) {
                (TaskKind::Regression, Target::Value(_)) => {}
                (TaskKind::Classification { num_classes }, Target::Class(c)) if c < num_classes => {}
                (_, target) => {
                    return Err(Error::Data(format!("row {i}: target {target:?} does not fit {task:?}")))
                }
            }
        }
        Ok(Self { schema, covariate_names, rows, task })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Row {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Rows at `indices`, in that order, sharing this dataset's schema.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: Arc::clone(&self.schema),
            covariate_names: self.covariate_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            task: self.task,
        }
    }

    /// Per-covariate `(min, max)` over the rows.
    pub fn covariate_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.covariate_names.len())
            .map(|j| {
                self.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r.covariates[j]), hi.max(r.covariates[j]))
                })
            })
            .collect()
    }

    /// Rescales covariates into `[0, 1]` with the given ranges; constant
    /// columns map to 0.
    pub fn min_max_scaled(&self, ranges: &[(f64, f64)]) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            for (x, &(lo, hi)) in row.covariates.iter_mut().zip(ranges) {
                let span = hi - lo;
                *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
            }
        }
        out
    }
}

/// Sparse binary vector with exactly one active position per feature block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHot {
    len: usize,
    active: Vec<usize>,
}

impl OneHot {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Active positions, one per feature, in feature order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let mut v = vec![0; self.len];
        for &k in &self.active {
            v[k] = 1;
        }
        v
    }
}

pub fn one_hot(row: &Row, schema: &FeatureSchema) -> OneHot {
    OneHot {
        len: schema.num_symbols(),
        active: row.symbols.iter().enumerate().map(|(f, &s)| schema.offset(f) + s).collect(),
    }
}

/// Row indices per `(feature, symbol)`; for each feature the groups
/// partition the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolGroups {
    groups: Vec<Vec<Vec<usize>>>,
}

impl SymbolGroups {
    pub fn get(&self, f: usize, s: usize) -> &[usize] {
        &self.groups[f][s]
    }

    pub fn feature(&self, f: usize) -> &[Vec<usize>] {
        &self.groups[f]
    }

    /// `(feature, symbol, rows)` for every group, empty ones included.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &[usize])> + '_ {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(f, g)| g.iter().enumerate().map(move |(s, rows)| (f, s, rows.as_slice())))
    }

    pub fn num_nonempty(&self) -> usize {
        self.iter().filter(|(_, _, rows)| !rows.is_empty()).count()
    }
}

pub fn symbol_groups(dataset: &EncodedDataset) -> SymbolGroups {
    let schema = dataset.schema();
    let mut groups: Vec<Vec<Vec<usize>>> =
        (0..schema.num_features()).map(|f| vec![Vec::new(); schema.cardinality(f)]).collect();
    for (i, row) in dataset.rows().iter().enumerate() {
        for (f, &s) in row.symbols.iter().enumerate() {
            groups[f][s].push(i);
        }
    }
    SymbolGroups { groups }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The five-row color/store/sales table used throughout the tests.
    pub fn table1() -> EncodedDataset {
        let schema = Arc::new(
            FeatureSchema::new(vec![
                ("color", vec!["blue", "pink"]),
                ("store", vec!["Paris", "Rome", "Berlin"]),
            ])
            .unwrap(),
        );
        let raw = [
            ("blue", "Paris", 14.0),
            ("pink", "Rome", 12.0),
            ("pink", "Rome", 13.0),
            ("blue", "Berlin", 17.0),
            ("pink", "Paris", 8.0),
        ];
        let rows = raw
            .iter()
            .map(|&(c, s, y)| Row::new(schema.encode(&[c, s]).unwrap(), vec![], Target::Value(y)))
            .collect();
        EncodedDataset::new(schema, vec![], rows, TaskKind::Regression).unwrap()
    }
}
