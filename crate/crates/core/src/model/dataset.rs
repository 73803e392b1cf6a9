use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FeatureMode, ModelError};
use crate::features::{BiomarkerVector, FEATURE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub source_id: String,
    pub features: BiomarkerVector,
    pub gender: Option<Gender>,
    pub age: Option<f64>,
    pub label: u8,
}

impl DatasetRow {
    /// Regressor columns in model order. Gender is encoded 0/1 (unknown sits
    /// at the uninformative midpoint); age must be imputed beforehand.
    pub fn values(&self, mode: FeatureMode) -> Result<Vec<f64>, ModelError> {
        let mut v = self.features.as_array().to_vec();
        if mode == FeatureMode::Sixteen {
            v.push(match self.gender {
                Some(Gender::Female) => 0.0,
                Some(Gender::Male) => 1.0,
                None => 0.5,
            });
            v.push(self.age.ok_or_else(|| ModelError::MissingAge(self.source_id.clone()))?);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub scenario: String,
    pub rows: Vec<DatasetRow>,
}

impl LabeledDataset {
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            scenario: self.scenario.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.rows.iter().filter(|r| r.label == 1).count();
        (self.rows.len() - ones, ones)
    }
}

pub fn age_mean(ds: &LabeledDataset) -> Result<f64, ModelError> {
    let known: Vec<f64> = ds.rows.iter().filter_map(|r| r.age).collect();
    if known.is_empty() {
        return Err(ModelError::AllAgesMissing);
    }
    Ok(known.iter().sum::<f64>() / known.len() as f64)
}

/// Fill missing ages with a mean computed elsewhere — on the training fold,
/// never on the rows being filled (leakage guard).
pub fn impute_age(ds: &LabeledDataset, mean: f64) -> LabeledDataset {
    let mut out = ds.clone();
    for r in &mut out.rows {
        r.age.get_or_insert(mean);
    }
    out
}

/// Decision threshold at the share of positive rows in the (training) set.
pub fn threshold_from_prevalence(ds: &LabeledDataset) -> f64 {
    let (_, ones) = ds.class_counts();
    ones as f64 / ds.rows.len() as f64
}

const META_COLS: [&str; 4] = ["source_id", "gender", "age", "label"];

pub fn write_dataset_csv<W: Write>(ds: &LabeledDataset, w: W) -> Result<(), ModelError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["source_id"];
    header.extend(FEATURE_NAMES);
    header.extend(["gender", "age", "label"]);
    wtr.write_record(&header).map_err(|e| ModelError::Csv(e.to_string()))?;
    for r in &ds.rows {
        let mut rec = vec![r.source_id.clone()];
        rec.extend(r.features.as_array().iter().map(|v| v.to_string()));
        rec.push(match r.gender {
            Some(Gender::Female) => "f".into(),
            Some(Gender::Male) => "m".into(),
            None => String::new(),
        });
        rec.push(r.age.map(|a| a.to_string()).unwrap_or_default());
        rec.push(r.label.to_string());
        wtr.write_record(&rec).map_err(|e| ModelError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| ModelError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(r: R, scenario: &str) -> Result<LabeledDataset, ModelError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| ModelError::Csv(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize, ModelError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ModelError::Csv(format!("missing column {name}")))
    };
    let feature_cols: Vec<usize> =
        FEATURE_NAMES.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let meta_cols: Vec<usize> = META_COLS.iter().map(|n| col(n)).collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ModelError::Csv(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let mut values = [0.0f64; 14];
        for (slot, &ci) in values.iter_mut().zip(&feature_cols) {
            *slot = field(ci)
                .parse()
                .map_err(|_| ModelError::Csv(format!("row {}: bad number {:?}", line + 2, field(ci))))?;
        }
        let gender = match field(meta_cols[1]).to_ascii_lowercase().as_str() {
            "" => None,
            "f" | "female" | "0" => Some(Gender::Female),
            "m" | "male" | "1" => Some(Gender::Male),
            other => return Err(ModelError::Csv(format!("row {}: bad gender {other:?}", line + 2))),
        };
        let age = match field(meta_cols[2]) {
            "" => None,
            s => Some(s.parse().map_err(|_| {
                ModelError::Csv(format!("row {}: bad age {s:?}", line + 2))
            })?),
        };
        let label: u8 = match field(meta_cols[3]) {
            "0" => 0,
            "1" => 1,
            other => return Err(ModelError::Csv(format!("row {}: bad label {other:?}", line + 2))),
        };
        rows.push(DatasetRow {
            source_id: field(meta_cols[0]).to_string(),
            features: BiomarkerVector::from_array(values),
            gender,
            age,
            label,
        });
    }
    Ok(LabeledDataset { scenario: scenario.to_string(), rows })
}

#[cfg(test)]
pub(super) fn toy_row(source_id: &str, fill: f64, label: u8) -> DatasetRow {
    DatasetRow {
        source_id: source_id.into(),
        features: BiomarkerVector::from_array([fill; 14]),
        gender: None,
        age: None,
        label,
    }
}
