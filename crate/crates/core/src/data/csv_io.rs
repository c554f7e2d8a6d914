use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EncodedDataset, FeatureSchema, Row, Target, TaskKind};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

fn column_indices(headers: &csv::StringRecord, wanted: &[String], path: &Path) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::Schema(format!("column {name:?} not found in {}", path.display()))
            })
        })
        .collect()
}

fn headers(reader: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<csv::StringRecord> {
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.is_empty() {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    Ok(headers)
}

/// Builds a schema whose alphabets are the sorted distinct values of each
/// feature column.
pub fn infer_schema(path: impl AsRef<Path>, feature_columns: &[String]) -> Result<FeatureSchema> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let headers = headers(&mut reader, path)?;
    let cols = column_indices(&headers, feature_columns, path)?;
    let mut alphabets = vec![BTreeSet::new(); cols.len()];
    let mut n = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        for (set, &c) in alphabets.iter_mut().zip(&cols) {
            set.insert(record[c].to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    FeatureSchema::new(
        feature_columns
            .iter()
            .cloned()
            .zip(alphabets.into_iter().map(|s| s.into_iter().collect::<Vec<_>>()))
            .collect(),
    )
}

/// Which columns besides the categorical features to read, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSpec {
    pub target: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub task: TaskKind,
    /// Class names in index order. Without it, classification targets must
    /// be integer indices.
    #[serde(default)]
    pub class_labels: Option<Vec<String>>,
}

impl CsvSpec {
    pub fn regression(target: impl Into<String>) -> Self {
        Self { target: target.into(), covariates: vec![], task: TaskKind::Regression, class_labels: None }
    }

    fn parse_target(&self, raw: &str, line: u64) -> Result<Target> {
        match self.task {
            TaskKind::Regression => raw
                .trim()
                .parse::<f64>()
                .map(Target::Value)
                .map_err(|_| Error::Data(format!("line {line}: target {raw:?} is not a number"))),
            TaskKind::Classification { num_classes } => {
                let class = match &self.class_labels {
                    Some(labels) => labels.iter().position(|l| l == raw.trim()).ok_or_else(|| {
                        Error::Data(format!("line {line}: unknown class label {raw:?}"))
                    })?,
                    None => raw.trim().parse::<usize>().map_err(|_| {
                        Error::Data(format!("line {line}: class {raw:?} is not an index"))
                    })?,
                };
                if class >= num_classes {
                    return Err(Error::Data(format!(
                        "line {line}: class {class} out of range for {num_classes} classes"
                    )));
                }
                Ok(Target::Class(class))
            }
        }
    }
}

/// Reads and encodes a CSV file. A value outside the schema's alphabet is an
/// error rather than being silently encoded.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema, spec: &CsvSpec) -> Result<EncodedDataset> {
    let path = path.as_ref();
    if let (TaskKind::Classification { num_classes }, Some(labels)) = (spec.task, &spec.class_labels) {
        if labels.len() != num_classes {
            return Err(Error::Config(format!(
                "{} class labels given for {num_classes} classes",
                labels.len()
            )));
        }
    }
    let mut reader = open(path)?;
    let headers = headers(&mut reader, path)?;
    let feature_names: Vec<String> = schema.features().iter().map(|f| f.name().to_string()).collect();
    let feature_cols = column_indices(&headers, &feature_names, path)?;
    let cov_cols = column_indices(&headers, &spec.covariates, path)?;
    let target_col = column_indices(&headers, std::slice::from_ref(&spec.target), path)?[0];

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let symbols = feature_cols
            .iter()
            .enumerate()
            .map(|(f, &c)| {
                schema.symbol_index(f, &record[c]).ok_or_else(|| Error::UnknownSymbol {
                    feature: feature_names[f].clone(),
                    symbol: record[c].to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let covariates = cov_cols
            .iter()
            .map(|&c| {
                record[c].trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("line {line}: covariate {:?} is not a number", &record[c]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let target = spec.parse_target(&record[target_col], line)?;
        rows.push(Row::new(symbols, covariates, target));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    EncodedDataset::new(Arc::new(schema.clone()), spec.covariates.clone(), rows, spec.task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const TABLE1: &str = "Color,Store,Sales\nblue,Paris,14\npink,Rome,12\npink,Rome,13\nblue,Berlin,17\npink,Paris,8\n";

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn infers_sorted_alphabets() {
        let f = write(TABLE1);
        let schema = infer_schema(f.path(), &cols(&["Color", "Store"])).unwrap();
        assert_eq!(schema.feature(0).alphabet(), &["blue", "pink"]);
        assert_eq!(schema.feature(1).alphabet(), &["Berlin", "Paris", "Rome"]);
        assert_eq!(schema.num_symbols(), 5);

        let f = write("c\nb\na\na\nc\n");
        let schema = infer_schema(f.path(), &cols(&["c"])).unwrap();
        assert_eq!(schema.feature(0).alphabet(), &["a", "b", "c"]);

        let f = write("only\na\na\na\n");
        let schema = infer_schema(f.path(), &cols(&["only"])).unwrap();
        assert_eq!(schema.num_symbols(), 1);
    }

    #[test]
    fn infer_errors() {
        let f = write(TABLE1);
        assert!(matches!(infer_schema(f.path(), &cols(&["Size"])), Err(Error::Schema(_))));
        let empty = write("");
        assert!(matches!(infer_schema(empty.path(), &cols(&["Color"])), Err(Error::Data(_))));
        let header_only = write("Color,Store\n");
        assert!(matches!(infer_schema(header_only.path(), &cols(&["Color"])), Err(Error::Data(_))));
    }

    #[test]
    fn loads_table1() {
        let f = write(TABLE1);
        let schema = FeatureSchema::new(vec![
            ("Color", vec!["blue", "pink"]),
            ("Store", vec!["Paris", "Rome", "Berlin"]),
        ])
        .unwrap();
        let d = load_csv(f.path(), &schema, &CsvSpec::regression("Sales")).unwrap();
        assert_eq!(d.len(), 5);
        let colors: Vec<usize> = d.rows().iter().map(|r| r.symbols[0]).collect();
        assert_eq!(colors, vec![0, 1, 1, 0, 1]);
        assert_eq!(d.row(4).target, Target::Value(8.0));
    }

    #[test]
    fn unknown_symbol_is_rejected() {
        let f = write("Color,Sales\nblue,1\nred,2\n");
        let schema = FeatureSchema::new(vec![("Color", vec!["blue", "pink"])]).unwrap();
        let err = load_csv(f.path(), &schema, &CsvSpec::regression("Sales")).unwrap_err();
        assert!(matches!(err, Error::UnknownSymbol { ref symbol, .. } if symbol == "red"));
    }

    #[test]
    fn parses_targets_and_covariates() {
        let f = write("c,y,dist\na,12.5,\"3.0\"\n");
        let schema = FeatureSchema::new(vec![("c", vec!["a"])]).unwrap();
        let mut spec = CsvSpec::regression("y");
        spec.covariates = cols(&["dist"]);
        let d = load_csv(f.path(), &schema, &spec).unwrap();
        assert_eq!(d.row(0).target, Target::Value(12.5));
        assert_eq!(d.row(0).covariates, vec![3.0]);

        let bad = write("c,y\na,twelve\n");
        assert!(matches!(load_csv(bad.path(), &schema, &CsvSpec::regression("y")), Err(Error::Data(_))));
    }

    #[test]
    fn classification_labels() {
        let f = write("c,label\na,>50K\na,<=50K\n");
        let schema = FeatureSchema::new(vec![("c", vec!["a"])]).unwrap();
        let spec = CsvSpec {
            target: "label".into(),
            covariates: vec![],
            task: TaskKind::Classification { num_classes: 2 },
            class_labels: Some(cols(&["<=50K", ">50K"])),
        };
        let d = load_csv(f.path(), &schema, &spec).unwrap();
        assert_eq!(d.row(0).target, Target::Class(1));
        assert_eq!(d.row(1).target, Target::Class(0));

        let f = write("c,label\na,3\n");
        let spec = CsvSpec { class_labels: None, ..spec };
        assert!(matches!(load_csv(f.path(), &schema, &spec), Err(Error::Data(_))));
    }
}
