//! Labeled tabular data from CSV files with a header row.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Dataset;

/// Per-column affine map applied to the features: `(x − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// A non-numeric column expanded into one indicator feature per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub column: String,
    pub levels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    /// Original label value of each class index.
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub scaler: Option<Scaler>,
    pub categorical: Vec<CategoricalEncoding>,
    pub warnings: Vec<String>,
}

/// Loads `path`, taking classes from `label_column` and standardizing every
/// feature column.
pub fn load_csv_dataset(path: &Path, label_column: &str) -> Result<LoadedCsv> {
    read_csv_dataset(File::open(path)?, label_column, true)
}

pub fn read_csv_dataset<R: Read>(r: R, label_column: &str, standardize: bool) -> Result<LoadedCsv> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse { line: 1, message: format!("no column named {label_column:?}") })?;
    if header.len() < 2 {
        return Err(Error::Parse { line: 1, message: "need at least one feature column besides the label".into() });
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut lines = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if let Some((j, _)) = rec.iter().enumerate().find(|(_, v)| v.is_empty()) {
            return Err(Error::Parse { line, message: format!("empty value in column {:?}", header[j]) });
        }
        cells.push(rec.iter().map(str::to_string).collect());
        lines.push(line);
    }
    if cells.is_empty() {
        return Err(Error::arg("CSV file has no data rows"));
    }

    let class_names = sorted_levels(cells.iter().map(|r| r[label_idx].as_str()));
    if class_names.len() < 2 {
        return Err(Error::arg(format!("label column {label_column:?} holds a single class")));
    }
    let labels: Vec<usize> =
        cells.iter().map(|r| class_names.iter().position(|c| *c == r[label_idx]).unwrap()).collect();

    let mut feature_names = Vec::new();
    let mut categorical = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let parsed: Option<Vec<f64>> = cells.iter().map(|r| r[j].parse::<f64>().ok()).collect();
        match parsed {
            Some(col) => {
                if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse { line: lines[i], message: format!("non-finite value in column {name:?}") });
                }
                feature_names.push(name.clone());
                columns.push(col);
            }
            None => {
                let levels = sorted_levels(cells.iter().map(|r| r[j].as_str()));
                for level in &levels {
                    feature_names.push(format!("{name}={level}"));
                    columns.push(cells.iter().map(|r| f64::from(u8::from(r[j] == *level))).collect());
                }
                categorical.push(CategoricalEncoding { column: name.clone(), levels });
            }
        }
    }

    let mut warnings = Vec::new();
    let scaler = standardize.then(|| {
        let n = cells.len() as f64;
        let mut mean = Vec::with_capacity(columns.len());
        let mut scale = Vec::with_capacity(columns.len());
        for (col, name) in columns.iter().zip(&feature_names) {
            let m = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            mean.push(m);
            if sd > 0.0 {
                scale.push(sd);
            } else {
                warnings.push(format!("column {name:?} has zero variance; kept with scale 1"));
                scale.push(1.0);
            }
        }
        Scaler { columns: feature_names.clone(), mean, scale }
    });

    let features: Vec<Vec<f64>> = (0..cells.len())
        .map(|i| {
            let mut x: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            if let Some(s) = &scaler {
                s.apply(&mut x);
            }
            x
        })
        .collect();
    let dataset = Dataset::new(features, labels, class_names.len())?;
    Ok(LoadedCsv { dataset, class_names, feature_names, scaler, categorical, warnings })
}

/// Distinct values, numerically ordered when all parse as numbers.
fn sorted_levels<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = values.collect();
    let mut levels: Vec<String> = set.into_iter().map(str::to_string).collect();
    if levels.iter().all(|l| l.parse::<f64>().is_ok()) {
        levels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    levels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_file() {
        let csv = "a,b,class\n1,2,x\n3,4,y\n5,6,x\n";
        let loaded = read_csv_dataset(csv.as_bytes(), "class", true).unwrap();
        assert_eq!(loaded.dataset.len(), 3);
        assert_eq!(loaded.class_names, vec!["x", "y"]);
        assert_eq!(loaded.dataset.labels(), &[0, 1, 0]);
        let s = loaded.scaler.unwrap();
        assert_eq!(s.mean, vec![3.0, 4.0]);
        let col0: Vec<f64> = loaded.dataset.features().iter().map(|x| x[0]).collect();
        assert!(col0.iter().sum::<f64>().abs() < 1e-12);
        assert!((col0.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_kept_with_warning() {
        let csv = "a,b,y\n1,7,0\n2,7,1\n3,7,1\n";
        let loaded = read_csv_dataset(csv.as_bytes(), "y", true).unwrap();
        assert_eq!(loaded.dataset.dim(), 2);
        assert_eq!(loaded.scaler.as_ref().unwrap().scale[1], 1.0);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.dataset.features().iter().all(|x| x[1] == 0.0));
    }

    #[test]
    fn categorical_columns_are_one_hot() {
        let csv = "color,size,label\nred,1,a\nblue,2,b\nred,3,b\n";
        let loaded = read_csv_dataset(csv.as_bytes(), "label", false).unwrap();
        assert_eq!(loaded.feature_names, vec!["color=blue", "color=red", "size"]);
        assert_eq!(loaded.categorical[0].levels, vec!["blue", "red"]);
        assert_eq!(loaded.dataset.x(0), &[0.0, 1.0, 1.0]);
        assert_eq!(loaded.dataset.x(1), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let csv = "a,label\n1,x\n,y\n";
        match read_csv_dataset(csv.as_bytes(), "label", true) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        let ragged = "a,b,label\n1,2,x\n1,y\n";
        assert!(matches!(read_csv_dataset(ragged.as_bytes(), "label", true), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(read_csv_dataset("a,b\n1,2\n".as_bytes(), "label", true), Err(Error::Parse { line: 1, .. })));
        assert!(read_csv_dataset("a,label\n1,x\n2,x\n".as_bytes(), "label", true).is_err());
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let csv = "a,label\n0,10\n1,9\n2,10\n";
        let loaded = read_csv_dataset(csv.as_bytes(), "label", false).unwrap();
        assert_eq!(loaded.class_names, vec!["9", "10"]);
    }

    #[test]
    fn roundtrip_through_dataset_csv() {
        let gm = crate::mixture::presets::scenario_a(3).unwrap();
        let ds = gm.sample(5, 3).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let loaded = read_csv_dataset(&buf[..], "label", false).unwrap();
        assert_eq!(loaded.dataset, ds);
    }
}
