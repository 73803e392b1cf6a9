use serde::{Deserialize, Serialize};

use super::dataset::{DatasetRow, LabeledDataset};
use super::{Classifier, FeatureMode, ModelError};
use crate::util::ols_line;

/// Ensemble of univariate regressions, one per feature; the prediction is
/// the mean of the sub-model outputs clamped to [0, 1]. No scaling anywhere:
/// OLS slope/intercept absorb affine feature transforms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedSFLRE {
    pub mode: FeatureMode,
    /// (slope, intercept) per feature column.
    pub submodels: Vec<(f64, f64)>,
}

pub fn fit_sflre(train: &LabeledDataset, mode: FeatureMode) -> Result<FittedSFLRE, ModelError> {
    let (zeros, ones) = train.class_counts();
    if zeros < 2 || ones < 2 {
        return Err(ModelError::SingleClassTrainingSet);
    }
    let labels: Vec<f64> = train.rows.iter().map(|r| r.label as f64).collect();
    let columns: Vec<Vec<f64>> = train
        .rows
        .iter()
        .map(|r| r.values(mode))
        .collect::<Result<_, _>>()?;

    let prevalence = ones as f64 / train.rows.len() as f64;
    let n = mode.n_features();
    let mut submodels = Vec::with_capacity(n);
    for j in 0..n {
        let xs: Vec<f64> = columns.iter().map(|row| row[j]).collect();
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        // A flat feature cannot rank anything; pin it at the prevalence so
        // it neither helps nor hurts the ensemble mean.
        if spread == 0.0 {
            submodels.push((0.0, prevalence));
        } else {
            let (slope, intercept) = ols_line(&xs, &labels);
            submodels.push((slope, intercept));
        }
    }
    Ok(FittedSFLRE { mode, submodels })
}

impl FittedSFLRE {
    pub fn predict(&self, row: &DatasetRow) -> Result<f64, ModelError> {
        let v = row.values(self.mode)?;
        let sum: f64 = self
            .submodels
            .iter()
            .zip(&v)
            .map(|(&(slope, intercept), &x)| slope * x + intercept)
            .sum();
        Ok((sum / self.submodels.len() as f64).clamp(0.0, 1.0))
    }
}

impl Classifier for FittedSFLRE {
    fn fit(train: &LabeledDataset, mode: FeatureMode) -> Result<Self, ModelError> {
        fit_sflre(train, mode)
    }
    fn predict_probability(&self, row: &DatasetRow) -> f64 {
        // Ages are imputed before fitting; a straggler falls back to the
        // ensemble midpoint rather than poisoning a whole evaluation run.
        self.predict(row).unwrap_or(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BiomarkerVector;
    use crate::model::dataset::toy_row;

    fn row_with(values: [f64; 14], label: u8) -> DatasetRow {
        DatasetRow {
            source_id: "r".into(),
            features: BiomarkerVector::from_array(values),
            gender: None,
            age: None,
            label,
        }
    }

    fn ds(rows: Vec<DatasetRow>) -> LabeledDataset {
        LabeledDataset { scenario: "t".into(), rows }
    }

    #[test]
    fn label_copy_feature_predicts_exactly() {
        let rows: Vec<DatasetRow> =
            [0u8, 0, 1, 1, 0, 1].iter().map(|&l| row_with([l as f64; 14], l)).collect();
        let m = fit_sflre(&ds(rows.clone()), FeatureMode::Fourteen).unwrap();
        for (slope, intercept) in &m.submodels {
            assert!((slope - 1.0).abs() < 1e-12 && intercept.abs() < 1e-12);
        }
        for r in &rows {
            assert!((m.predict(r).unwrap() - r.label as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_feature_pinned_at_prevalence() {
        let rows: Vec<DatasetRow> = (0..10).map(|i| toy_row("r", 3.25, (i < 3) as u8)).collect();
        let m = fit_sflre(&ds(rows.clone()), FeatureMode::Fourteen).unwrap();
        for &(slope, intercept) in &m.submodels {
            assert_eq!((slope, intercept), (0.0, 0.3));
        }
        assert!((m.predict(&rows[0]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_ols_coefficients() {
        // First feature x = 1,2,3,4 against labels 0,0,1,1:
        // slope = Sxy/Sxx = 2.0/5.0, intercept = 0.5 - 0.4*2.5 = -0.5.
        let rows: Vec<DatasetRow> = (0..4)
            .map(|i| {
                let mut v = [7.0; 14]; // all other features flat
                v[0] = i as f64 + 1.0;
                row_with(v, (i >= 2) as u8)
            })
            .collect();
        let m = fit_sflre(&ds(rows), FeatureMode::Fourteen).unwrap();
        let (slope, intercept) = m.submodels[0];
        assert!((slope - 0.4).abs() < 1e-9);
        assert!((intercept + 0.5).abs() < 1e-9);
        for &(s, i) in &m.submodels[1..] {
            assert_eq!((s, i), (0.0, 0.5));
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let rows: Vec<DatasetRow> = (0..12)
            .map(|i| {
                let mut v = [0.0; 14];
                for (j, slot) in v.iter_mut().enumerate() {
                    *slot = ((i * 7 + j * 3) % 11) as f64 / 3.0;
                }
                row_with(v, (i % 3 == 0) as u8)
            })
            .collect();
        let mut rev = rows.clone();
        rev.reverse();
        let a = fit_sflre(&ds(rows), FeatureMode::Fourteen).unwrap();
        let b = fit_sflre(&ds(rev), FeatureMode::Fourteen).unwrap();
        for (x, y) in a.submodels.iter().zip(&b.submodels) {
            assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_rejected() {
        let rows: Vec<DatasetRow> = (0..5).map(|_| toy_row("r", 1.0, 1)).collect();
        assert!(matches!(
            fit_sflre(&ds(rows), FeatureMode::Fourteen),
            Err(ModelError::SingleClassTrainingSet)
        ));
        // One row of a class is still too few to regress on.
        let mut rows: Vec<DatasetRow> = (0..5).map(|_| toy_row("r", 1.0, 1)).collect();
        rows.push(toy_row("r", 0.0, 0));
        assert!(matches!(
            fit_sflre(&ds(rows), FeatureMode::Fourteen),
            Err(ModelError::SingleClassTrainingSet)
        ));
    }

    #[test]
    fn age_separates_only_in_sixteen_mode() {
        // All 14 sound features flat (pinned at prevalence), so only the
        // age column can carry signal.
        let rows: Vec<DatasetRow> = (0..20)
            .map(|i| {
                let mut r = toy_row("r", 1.0, (i % 2) as u8);
                r.age = Some(if i % 2 == 1 { 75.0 } else { 35.0 });
                r
            })
            .collect();
        let d = ds(rows);
        let m14 = fit_sflre(&d, FeatureMode::Fourteen).unwrap();
        let m16 = fit_sflre(&d, FeatureMode::Sixteen).unwrap();
        assert_eq!(m14.submodels.len(), 14);
        assert_eq!(m16.submodels.len(), 16);
        let p14: Vec<f64> = d.rows.iter().map(|r| m14.predict(r).unwrap()).collect();
        let p16: Vec<f64> = d.rows.iter().map(|r| m16.predict(r).unwrap()).collect();
        // 16-mode ranks old (positive) above young on every pair; 14-mode
        // has nothing to rank with.
        for (i, pi) in p16.iter().enumerate() {
            for (j, pj) in p16.iter().enumerate() {
                if d.rows[i].label == 1 && d.rows[j].label == 0 {
                    assert!(pi > pj);
                    assert!((p14[i] - p14[j]).abs() < 1e-9);
                }
            }
        }
    }
}
