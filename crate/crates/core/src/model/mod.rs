pub mod cv;
pub mod dataset;
pub mod sflre;

use thiserror::Error;

pub use cv::{
    cross_validate, evaluate, format_metrics_table, stratified_kfold, CvReport, CvRun, Metrics,
};
pub use dataset::{
    age_mean, impute_age, read_dataset_csv, threshold_from_prevalence, write_dataset_csv,
    DatasetRow, Gender, LabeledDataset,
};
pub use sflre::{fit_sflre, FittedSFLRE};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no row carries an age; cannot impute")]
    AllAgesMissing,
    #[error("training set holds a single class")]
    SingleClassTrainingSet,
    #[error("evaluation set holds a single class")]
    SingleClassEvaluationSet,
    #[error("class {class} has {have} rows, need at least {need}")]
    ClassTooSmall { class: u8, have: usize, need: usize },
    #[error("row {0} lacks an age; run impute_age before fitting 16-feature models")]
    MissingAge(String),
    #[error("bad dataset csv: {0}")]
    Csv(String),
}

/// Which columns feed the ensemble: the 14 sound-object features alone, or
/// those plus gender and age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FeatureMode {
    Fourteen,
    Sixteen,
}

impl FeatureMode {
    pub fn n_features(self) -> usize {
        match self {
            FeatureMode::Fourteen => 14,
            FeatureMode::Sixteen => 16,
        }
    }
}

/// Fit/predict contract so other model families can ride the same
/// cross-validation harness.
pub trait Classifier: Sized {
    fn fit(train: &LabeledDataset, mode: FeatureMode) -> Result<Self, ModelError>;
    fn predict_probability(&self, row: &DatasetRow) -> f64;
}
