use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::biomarkers::{BiomarkerVector, FEATURE_NAMES};
use super::FeatureError;

/// Cohort quartiles for one feature. The shipped data file stores triples in
/// their published order, which for e_low_harm runs high-to-low; loading
/// normalizes so `lo <= median <= hi` always holds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeatureRange {
    pub lo: f64,
    pub median: f64,
    pub hi: f64,
}

impl FeatureRange {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cohort {
    pub name: String,
    pub respondents: u32,
    /// Indexed like `FEATURE_NAMES`.
    pub ranges: Vec<FeatureRange>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceRanges {
    pub schema_version: u32,
    pub cohorts: Vec<Cohort>,
}

impl ReferenceRanges {
    pub fn cohort(&self, name: &str) -> Option<&Cohort> {
        self.cohorts.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Deserialize)]
struct RawCohort {
    name: String,
    respondents: u32,
    ranges: std::collections::HashMap<String, [f64; 3]>,
}

#[derive(Debug, Deserialize)]
struct RawRanges {
    schema_version: u32,
    cohorts: Vec<RawCohort>,
}

pub fn parse_reference_ranges(json: &str) -> Result<ReferenceRanges, FeatureError> {
    let raw: RawRanges =
        serde_json::from_str(json).map_err(|e| FeatureError::ReferenceData(e.to_string()))?;
    let mut cohorts = Vec::with_capacity(raw.cohorts.len());
    for c in raw.cohorts {
        let mut ranges = Vec::with_capacity(FEATURE_NAMES.len());
        for name in FEATURE_NAMES {
            let [q1, median, q3] = *c.ranges.get(name).ok_or_else(|| {
                FeatureError::ReferenceData(format!("cohort {} lacks feature {name}", c.name))
            })?;
            let (lo, hi) = if q1 <= q3 { (q1, q3) } else { (q3, q1) };
            if !(lo <= median && median <= hi) {
                return Err(FeatureError::ReferenceData(format!(
                    "cohort {} feature {name}: median {median} outside [{lo}, {hi}]",
                    c.name
                )));
            }
            ranges.push(FeatureRange { lo, median, hi });
        }
        cohorts.push(Cohort { name: c.name, respondents: c.respondents, ranges });
    }
    Ok(ReferenceRanges { schema_version: raw.schema_version, cohorts })
}

/// The ranges shipped with the crate.
pub fn builtin_reference_ranges() -> &'static ReferenceRanges {
    static RANGES: OnceLock<ReferenceRanges> = OnceLock::new();
    RANGES.get_or_init(|| {
        parse_reference_ranges(include_str!("../../../../data/reference_ranges.json"))
            .expect("shipped reference ranges are valid")
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FeaturePlacement {
    pub feature: &'static str,
    pub value: f64,
    /// Cohorts whose interquartile interval contains the value; empty means
    /// outside all of them.
    pub cohorts: Vec<String>,
}

pub fn compare_to_reference(
    v: &BiomarkerVector,
    ranges: &ReferenceRanges,
) -> Vec<FeaturePlacement> {
    v.as_array()
        .iter()
        .enumerate()
        .map(|(i, &value)| FeaturePlacement {
            feature: FEATURE_NAMES[i],
            value,
            cohorts: ranges
                .cohorts
                .iter()
                .filter(|c| c.ranges[i].contains(value))
                .map(|c| c.name.clone())
                .collect(),
        })
        .collect()
}
