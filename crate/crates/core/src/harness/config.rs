use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, infer_schema, load_csv, split_train_test, BatchMode, CsvSpec, EncodedDataset,
    FeatureSchema, SymbolDistribution, SyntheticSpec, TaskKind,
};
use crate::error::{Error, Result};
use crate::estimator::EstimatorMode;
use crate::model::{MlpSpec, ModelSpec, ResNetSpec};
use crate::optim::{Hyper, OptimizerKind};

/// Where the observations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// A training CSV, an optional held-out CSV and a TOML schema file.
    Csv {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        schema: PathBuf,
    },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    /// Row label in summary tables.
    pub fn name(&self) -> String {
        match self {
            DataSource::Csv { train, .. } => train
                .file_stem()
                .map_or_else(|| train.display().to_string(), |s| s.to_string_lossy().into_owned()),
            DataSource::Synthetic(_) => "synthetic".into(),
        }
    }

    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSource::Csv { train, test, schema } => {
                let file = SchemaFile::read(schema)?;
                let mut paths = vec![train.as_path()];
                paths.extend(test.as_deref());
                let feature_schema = file.feature_schema(&paths)?;
                let spec = file.csv_spec();
                let train_set = load_csv(train, &feature_schema, &spec)?;
                let test_set = test.as_ref().map(|t| load_csv(t, &feature_schema, &spec)).transpose()?;
                Ok(LoadedData { name: self.name(), train: train_set, test: test_set })
            }
            DataSource::Synthetic(spec) => {
                let (data, _) = generate_synthetic(spec)?;
                Ok(LoadedData { name: self.name(), train: data, test: None })
            }
        }
    }
}

/// A loaded data source: either one pool to be split per run, or a fixed
/// train/test pair.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub name: String,
    pub train: EncodedDataset,
    pub test: Option<EncodedDataset>,
}

impl LoadedData {
    pub fn in_memory(name: impl Into<String>, train: EncodedDataset, test: Option<EncodedDataset>) -> Self {
        Self { name: name.into(), train, test }
    }

    /// `(train, test)` for one run; the pool is split with `seed` unless a
    /// held-out set was supplied.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(EncodedDataset, EncodedDataset)> {
        match &self.test {
            Some(test) => Ok((self.train.clone(), test.clone())),
            None => split_train_test(&self.train, test_fraction, seed),
        }
    }
}

fn default_task() -> TaskKind {
    TaskKind::Regression
}

/// Column roles of a CSV data set.
///
/// ```toml
/// target = "price"
/// features = ["color", "store"]
/// covariates = ["km"]
/// task = { kind = "regression" }
///
/// [alphabets]
/// color = ["blue", "pink"]
/// ```
///
/// Features without an explicit alphabet take the sorted distinct values
/// found across the train and test files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub target: String,
    pub features: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_task")]
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alphabets: BTreeMap<String, Vec<String>>,
}

impl SchemaFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("schema serialization: {e}")))
    }

    pub fn csv_spec(&self) -> CsvSpec {
        CsvSpec {
            target: self.target.clone(),
            covariates: self.covariates.clone(),
            task: self.task,
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn feature_schema(&self, data_files: &[&Path]) -> Result<FeatureSchema> {
        if let Some(unknown) = self.alphabets.keys().find(|k| !self.features.contains(k)) {
            return Err(Error::Schema(format!("alphabet given for {unknown:?}, which is not a listed feature")));
        }
        let missing: Vec<String> =
            self.features.iter().filter(|f| !self.alphabets.contains_key(*f)).cloned().collect();
        let mut inferred: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        if !missing.is_empty() {
            for path in data_files {
                let schema = infer_schema(path, &missing)?;
                for feature in schema.features() {
                    inferred.entry(feature.name().to_string()).or_default().extend(feature.alphabet().iter().cloned());
                }
            }
        }
        let features = self
            .features
            .iter()
            .map(|name| {
                let alphabet = match self.alphabets.get(name) {
                    Some(a) => a.clone(),
                    None => inferred.remove(name).unwrap_or_default().into_iter().collect(),
                };
                (name.clone(), alphabet)
            })
            .collect();
        FeatureSchema::new(features)
    }
}

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: DataSource,
    /// Model text, see [`resolve_model`].
    pub model: String,
    pub optimizer: OptimizerKind,
    /// Overrides the optimizer's default learning rate.
    #[serde(default)]
    pub lr: Option<f64>,
    pub estimator: EstimatorMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub repeats: usize,
    pub test_fraction: f64,
    #[serde(default)]
    pub batch_mode: BatchMode,
    /// Min-max scale covariates using training-set ranges.
    #[serde(default = "yes")]
    pub scale_covariates: bool,
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    /// Adam, GCE, batch 32, 10 epochs, one repeat, 20% held out.
    pub fn new(data: DataSource, model: impl Into<String>) -> Self {
        Self {
            data,
            model: model.into(),
            optimizer: OptimizerKind::Adam,
            lr: None,
            estimator: EstimatorMode::Gce,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            repeats: 1,
            test_fraction: 0.2,
            batch_mode: BatchMode::Partition,
            scale_covariates: true,
        }
    }

    pub fn hyper(&self) -> Hyper {
        let defaults = Hyper::defaults(self.optimizer);
        self.lr.map_or(defaults, |lr| defaults.with_lr(lr))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} is not in (0, 1)", self.test_fraction)));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
            }
        }
        parse_model(&self.model)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ModelText {
    Mlp { hidden: Option<Vec<usize>>, covariates: bool },
    ResNet { shape: Option<(usize, usize)>, covariates: bool },
    Product { factors: Option<Vec<String>>, covariate: Option<String>, intercept: bool },
}

fn parse_sizes(text: &str, whole: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("model {whole:?}: {t:?} is not a positive size")))
        })
        .collect()
}

fn parse_model(text: &str) -> Result<ModelText> {
    let whole = text.trim();
    let (body, plus) = match whole.split_once('+') {
        Some((b, p)) => (b, Some(p.trim())),
        None => (whole, None),
    };
    let (kind, args) = match body.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (body.trim(), None),
    };
    let bad = || Error::Config(format!("cannot parse model {whole:?}"));
    match kind {
        "mlp" | "resnet" => {
            let covariates = match plus {
                None => false,
                Some("cov") => true,
                Some(_) => return Err(bad()),
            };
            let sizes = args.map(|a| parse_sizes(a, whole)).transpose()?;
            if kind == "mlp" {
                Ok(ModelText::Mlp { hidden: sizes, covariates })
            } else {
                let shape = match sizes.as_deref() {
                    None => None,
                    Some(&[w, b]) => Some((w, b)),
                    Some(_) => return Err(Error::Config(format!("model {whole:?}: resnet takes width,blocks"))),
                };
                Ok(ModelText::ResNet { shape, covariates })
            }
        }
        _ if kind.starts_with("product") => {
            let intercept = match plus {
                None => false,
                Some("b") => true,
                Some(_) => return Err(bad()),
            };
            let (head, covariate) = match body.split_once('*') {
                Some((h, c)) if !c.trim().is_empty() => (h, Some(c.trim().to_string())),
                Some(_) => return Err(bad()),
                None => (body, None),
            };
            let factors = match head.split_once(':') {
                Some((k, list)) if k.trim() == "product" => {
                    let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
                    if names.iter().any(String::is_empty) {
                        return Err(bad());
                    }
                    Some(names)
                }
                None if head.trim() == "product" => None,
                _ => return Err(bad()),
            };
            Ok(ModelText::Product { factors, covariate, intercept })
        }
        _ => Err(bad()),
    }
}

/// Builds a model for `dataset` from its text form:
///
/// * `mlp[:h1,h2,...][+cov]`: hidden widths default to `4,8,4`;
/// * `resnet[:width,blocks][+cov]`: defaults to `8,2`;
/// * `product[:f1,f2,...][*covariate][+b]`: factors default to every
///   feature, `*name` multiplies by a covariate, `+b` adds an intercept.
///
/// `+cov` feeds every covariate column to the network; without it numeric
/// columns are ignored.
pub fn resolve_model(text: &str, dataset: &EncodedDataset) -> Result<ModelSpec> {
    let task = dataset.task();
    let n_cov = dataset.covariate_names().len();
    let spec = match parse_model(text)? {
        ModelText::Mlp { hidden, covariates } => ModelSpec::Mlp(MlpSpec {
            hidden: hidden.unwrap_or_else(|| vec![4, 8, 4]),
            covariates: if covariates { n_cov } else { 0 },
            task,
        }),
        ModelText::ResNet { shape, covariates } => {
            let (width, blocks) = shape.unwrap_or((8, 2));
            ModelSpec::TabResNet(ResNetSpec { width, blocks, covariates: if covariates { n_cov } else { 0 }, task })
        }
        ModelText::Product { factors, covariate, intercept } => {
            if task != TaskKind::Regression {
                return Err(Error::Config("product models only support regression targets".into()));
            }
            let factors = factors.unwrap_or_else(|| {
                dataset.schema().features().iter().map(|f| f.name().to_string()).collect()
            });
            let covariate = covariate
                .map(|name| {
                    dataset
                        .covariate_names()
                        .iter()
                        .position(|c| *c == name)
                        .ok_or_else(|| Error::Config(format!("model covariate {name:?} is not a loaded column")))
                })
                .transpose()?;
            ModelSpec::product(factors, covariate, intercept)
        }
    };
    spec.validate(dataset.schema())?;
    Ok(spec)
}

/// Parses `key=value` pairs separated by `;`, e.g.
/// `card=50;dist=zipf:1.5;n=2000;noise=0.1;seed=7`. Multiple features are
/// given as `card=5/10`.
pub fn parse_synthetic(text: &str) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec {
        cardinalities: vec![10],
        distribution: SymbolDistribution::Uniform,
        n: 1000,
        noise_std: 0.1,
        seed: 0,
    };
    let bad = |what: &str| Error::Config(format!("synthetic spec {text:?}: {what}"));
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| bad(&format!("{part:?} is not key=value")))?;
        let value = value.trim();
        match key.trim() {
            "card" => {
                spec.cardinalities = value
                    .split('/')
                    .map(|c| c.trim().parse::<usize>().map_err(|_| bad(&format!("bad cardinality {c:?}"))))
                    .collect::<Result<_>>()?
            }
            "dist" => spec.distribution = parse_distribution(value)?,
            "n" => spec.n = value.parse().map_err(|_| bad("bad row count"))?,
            "noise" => spec.noise_std = value.parse().map_err(|_| bad("bad noise"))?,
            "seed" => spec.seed = value.parse().map_err(|_| bad("bad seed"))?,
            other => return Err(bad(&format!("unknown key {other:?}"))),
        }
    }
    Ok(spec)
}

/// `uniform` or `zipf:<exponent>`.
pub fn parse_distribution(text: &str) -> Result<SymbolDistribution> {
    let text = text.trim();
    if text == "uniform" {
        return Ok(SymbolDistribution::Uniform);
    }
    text.strip_prefix("zipf:")
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| *s > 0.0)
        .map(SymbolDistribution::Zipf)
        .ok_or_else(|| Error::Config(format!("unknown symbol distribution {text:?}")))
}
