use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, EncodedDataset, FeatureSchema, Row, Target, TaskKind};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelSpec, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "exponent")]
pub enum SymbolDistribution {
    Uniform,
    /// Symbol `k` (0-based) drawn with probability proportional to
    /// `(k + 1)^-s`.
    Zipf(f64),
}

/// Regression data from a product model over all features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub cardinalities: Vec<usize>,
    pub distribution: SymbolDistribution,
    pub n: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Product of every feature's symbol scalar, no covariate or intercept.
    pub fn truth_model(&self) -> ModelSpec {
        ModelSpec::product((0..self.cardinalities.len()).map(feature_name).collect(), None, false)
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::new(
            self.cardinalities
                .iter()
                .enumerate()
                .map(|(f, &c)| {
                    let width = (c.max(2) - 1).to_string().len();
                    (feature_name(f), (0..c).map(|s| format!("s{s:0width$}")).collect::<Vec<_>>())
                })
                .collect(),
        )
    }
}

fn feature_name(f: usize) -> String {
    format!("f{f}")
}

/// Draws the ground-truth scalars uniformly in `[0.5, 2]`, the symbols from
/// `spec.distribution`, and sets `y = product + N(0, noise_std)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(EncodedDataset, ParamStore<f64>)> {
    if spec.cardinalities.is_empty() || spec.cardinalities.contains(&0) {
        return Err(Error::Config("synthetic data needs at least one feature and non-empty alphabets".into()));
    }
    if spec.n == 0 {
        return Err(Error::Config("synthetic data needs at least one row".into()));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Config(format!("noise std must be finite and non-negative, got {}", spec.noise_std)));
    }
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::Config(format!("noise std {}: {e}", spec.noise_std)))?;
    let schema = spec.schema()?;
    let model = spec.truth_model();
    let mut truth = init_params::<f64>(&model, &schema, spec.seed)?;
    let mut rng = seeded_rng(spec.seed, 0x5717);
    for id in truth.ids().collect::<Vec<_>>() {
        truth.values_mut(id)[0] = rng.random_range(0.5..=2.0);
    }

    let samplers = spec
        .cardinalities
        .iter()
        .map(|&c| match spec.distribution {
            SymbolDistribution::Uniform => Ok(None),
            SymbolDistribution::Zipf(s) => Zipf::new(c as f64, s)
                .map(Some)
                .map_err(|e| Error::Config(format!("zipf({s}) over {c} symbols: {e}"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let symbols: Vec<usize> = spec
            .cardinalities
            .iter()
            .zip(&samplers)
            .map(|(&c, sampler)| match sampler {
                None => rng.random_range(0..c),
                Some(z) => (z.sample(&mut rng) as usize).clamp(1, c) - 1,
            })
            .collect();
        let clean: f64 = symbols
            .iter()
            .enumerate()
            .map(|(f, &s)| truth.values(truth.symbol_id(f, s).expect("every symbol has a factor"))[0])
            .product();
        let y = clean + noise.sample(&mut rng);
        rows.push(Row::new(symbols, vec![], Target::Value(y)));
    }
    let dataset = EncodedDataset::new(Arc::new(schema), vec![], rows, TaskKind::Regression)?;
    Ok((dataset, truth))
}
