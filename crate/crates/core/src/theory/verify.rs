//! A self-contained report of the theory checks, as run by `gce verify`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::draws::{
    estimator_expectation, stopping_time_p1, stopping_time_simulate_paired, DrawSpec, ExpectationMethod,
};
use super::{categorical_loss, classic_loss, finite_difference_gradient, max_relative_error};
use crate::data::{seeded_rng, EncodedDataset, FeatureSchema, Row, Target, TaskKind};
use crate::error::Result;
use crate::model::{backward, init_params, ModelSpec, ParamKey, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub claim: String,
    pub computed: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn within(claim: impl Into<String>, computed: f64, reference: f64, tolerance: f64) -> Self {
        let passed = (computed - reference).abs() <= tolerance;
        Self { claim: claim.into(), computed, reference, tolerance, passed }
    }

    fn at_most(claim: impl Into<String>, computed: f64, bound: f64) -> Self {
        Self { claim: claim.into(), computed, reference: bound, tolerance: 0.0, passed: computed <= bound }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | {} | computed {:.6e} | reference {:.6e} | tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.claim,
            self.computed,
            self.reference,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

fn table1() -> (ModelSpec, ParamStore<f64>, EncodedDataset) {
    let schema = Arc::new(
        FeatureSchema::new(vec![("color", vec!["blue", "pink"]), ("store", vec!["Paris", "Rome", "Berlin"])])
            .expect("static schema"),
    );
    let rows = [("blue", "Paris", 14.0), ("pink", "Rome", 12.0), ("pink", "Rome", 13.0), ("blue", "Berlin", 17.0), ("pink", "Paris", 8.0)]
        .iter()
        .map(|&(c, s, y)| Row::new(schema.encode(&[c, s]).expect("static rows"), vec![], Target::Value(y)))
        .collect();
    let d = EncodedDataset::new(schema, vec![], rows, TaskKind::Regression).expect("static dataset");
    let spec = ModelSpec::product(vec!["color", "store"], None, false);
    let mut p = init_params::<f64>(&spec, d.schema(), 0).expect("valid spec");
    for (f, s, v) in [("color", "blue", 2.0), ("color", "pink", 1.0), ("store", "Paris", 3.0), ("store", "Rome", 4.0), ("store", "Berlin", 5.0)] {
        p.get_mut(&ParamKey::symbol(f, s)).expect("fixture key")[0] = v;
    }
    (spec, p, d)
}

/// `|Z|` rows whose first feature marks membership of `T` (bit `i` of
/// `members`), with a random second feature and random targets.
fn toy_instance(z: usize, members: u32, seed: u64) -> (ModelSpec, ParamStore<f64>, EncodedDataset) {
    let mut rng = seeded_rng(seed, u64::from(members));
    let schema = Arc::new(
        FeatureSchema::new(vec![("t", vec!["in", "out"]), ("o", vec!["u", "v", "w"])]).expect("static schema"),
    );
    let rows = (0..z)
        .map(|i| {
            let t = usize::from(members & (1 << i) == 0);
            Row::new(vec![t, rng.random_range(0..3)], vec![rng.random_range(0.5..2.0)], Target::Value(rng.random_range(-2.0..2.0)))
        })
        .collect();
    let d = EncodedDataset::new(schema, vec!["x".into()], rows, TaskKind::Regression).expect("valid rows");
    let spec = ModelSpec::product(vec!["t", "o"], Some(0), true);
    let mut p = init_params::<f64>(&spec, d.schema(), seed).expect("valid spec");
    for id in p.ids().collect::<Vec<_>>() {
        p.values_mut(id)[0] = rng.random_range(0.5..1.5);
    }
    (spec, p, d)
}

fn exhaustive_unbiasedness() -> Result<Check> {
    let mut worst = 0.0f64;
    for z in 1..=6usize {
        for members in 1u32..(1 << z) {
            let (spec, p, d) = toy_instance(z, members, z as u64);
            let groups = crate::data::symbol_groups(&d);
            for (f, s, rows) in groups.iter() {
                if rows.is_empty() {
                    continue;
                }
                for m in 1..=3 {
                    let r = estimator_expectation(&spec, &p, &d, f, s, m, ExpectationMethod::Exhaustive)?;
                    worst = worst.max(r.max_abs_error);
                }
            }
        }
    }
    Ok(Check::at_most("draw-average estimator is unbiased (exhaustive, |Z|<=6, m<=3)", worst, 1e-10))
}

fn sampled_unbiasedness() -> Result<Check> {
    let (spec, p, d) = table1();
    let mut worst = 0.0f64;
    for f in 0..d.schema().num_features() {
        for s in 0..d.schema().cardinality(f) {
            for m in [2, 4] {
                let method = ExpectationMethod::MonteCarlo { trials: 100_000, seed: (f * 10 + s + m) as u64 };
                worst = worst.max(estimator_expectation(&spec, &p, &d, f, s, m, method)?.relative_error());
            }
        }
    }
    Ok(Check::at_most("draw-average estimator is unbiased (sampled, 1e5 draws, relative)", worst, 0.02))
}

fn stopping_time() -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    let mut ordered = true;
    for z in [5usize, 10, 50] {
        for t in [1, z / 5, z / 2] {
            for m in [1usize, 2, 8] {
                let spec = DrawSpec::prefix(z, t, m, true);
                let (with, without) = stopping_time_simulate_paired(&spec, 100_000, (z * 100 + t * 10 + m) as u64)?;
                let reference = 1.0 / stopping_time_p1(z, t, m)?;
                worst = worst.max((with - reference).abs() / reference);
                ordered &= without <= with;
            }
        }
    }
    Ok(vec![
        Check::at_most("mean first-hit batch index equals 1/P1 (relative)", worst, 0.02),
        Check {
            claim: "distinct-pick batches hit no later on average".into(),
            computed: f64::from(u8::from(ordered)),
            reference: 1.0,
            tolerance: 0.0,
            passed: ordered,
        },
    ])
}

fn gradient_checks() -> Result<Vec<Check>> {
    let schema = FeatureSchema::new(vec![("a", vec!["p", "q", "r"]), ("b", vec!["u", "v"])]).expect("static schema");
    let regression = TaskKind::Regression;
    let cases = [
        ("product", ModelSpec::product(vec!["a", "b"], Some(0), true), 1e-6),
        ("mlp", ModelSpec::Mlp(crate::model::MlpSpec { hidden: vec![4, 8, 4], covariates: 1, task: regression }), 1e-5),
        ("resnet", ModelSpec::small_resnet(TaskKind::Classification { num_classes: 3 }), 1e-5),
    ];
    let mut checks = Vec::new();
    for (name, spec, tol) in cases {
        let mut worst = 0.0f64;
        let mut rng = seeded_rng(17, 0);
        for trial in 0..20u64 {
            let mut p = init_params::<f64>(&spec, &schema, trial)?;
            if let ModelSpec::Product(_) = spec {
                for id in p.ids().collect::<Vec<_>>() {
                    p.values_mut(id)[0] = rng.random_range(0.5..1.5);
                }
            }
            let target = match spec.task() {
                TaskKind::Regression => Target::Value(rng.random_range(-2.0..2.0)),
                TaskKind::Classification { num_classes } => Target::Class(rng.random_range(0..num_classes)),
            };
            let row = Row::new(vec![rng.random_range(0..3), rng.random_range(0..2)], vec![rng.random_range(-1.0..1.0)], target);
            let (_, analytic) = backward(&spec, &p, &row)?;
            let mut full = p.zeros();
            full.extend(analytic);
            let fd = finite_difference_gradient(&spec, &p, &row, 1e-5)?;
            worst = worst.max(max_relative_error(&full, &fd, 1e-3));
        }
        checks.push(Check::at_most(format!("{name} backward matches central differences"), worst, tol));
    }
    Ok(checks)
}

fn balanced_identity() -> Result<Check> {
    let q = 4;
    let schema = Arc::new(FeatureSchema::new(vec![("a", (0..q).map(|s| format!("s{s}")).collect::<Vec<_>>())])?);
    let mut rng = seeded_rng(3, 0);
    let rows = (0..q * 5)
        .map(|i| Row::new(vec![i % q], vec![], Target::Value(rng.random_range(-1.0..3.0))))
        .collect();
    let d = EncodedDataset::new(schema, vec![], rows, TaskKind::Regression)?;
    let spec = ModelSpec::product(vec!["a"], None, true);
    let p = init_params::<f64>(&spec, d.schema(), 0)?;
    Ok(Check::within(
        "categorical loss equals mean loss on balanced data",
        categorical_loss(&spec, &p, &d)?,
        classic_loss(&spec, &p, &d)?,
        1e-12,
    ))
}

fn table1_values() -> Result<Vec<Check>> {
    let (spec, p, d) = table1();
    Ok(vec![
        Check::within("categorical loss on the color/store table", categorical_loss(&spec, &p, &d)?, 335.0 / 6.0, 1e-9),
        Check::within("mean loss on the color/store table", classic_loss(&spec, &p, &d)?, 56.6, 1e-9),
    ])
}

/// Runs every check; `Err` only for internal failures, not failed checks.
pub fn verification_suite() -> Result<VerificationReport> {
    let mut checks = vec![exhaustive_unbiasedness()?, sampled_unbiasedness()?];
    checks.extend(stopping_time()?);
    checks.extend(gradient_checks()?);
    checks.push(balanced_identity()?);
    checks.extend(table1_values()?);
    Ok(VerificationReport { checks })
}
