pub mod biomarkers;
pub mod grouping;
pub mod phase;
pub mod reference;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use biomarkers::{biomarkers, BiomarkerVector, FEATURE_NAMES};
pub use grouping::{
    find_fundamental, group_objects, select_significant, HarmonicGroup, HarmonicGrouping,
};
pub use phase::{fundamental_crossings, harmonic_shift_series, phase_stats, PhaseStats};
pub use reference::{
    builtin_reference_ranges, compare_to_reference, parse_reference_ranges, FeaturePlacement,
    ReferenceRanges,
};
pub use stats::{object_stats, ObjectStats};

use crate::tracker::{ObjectPoint, SoundObject};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("object has {0} points, need at least 3")]
    TooFewPoints(usize),
    #[error("no divisor captures half the selected energy")]
    NoHarmonicStructure,
    #[error("no harmonic group reaches the strong-energy threshold")]
    NoStrongHarmonics,
    #[error("no fundamental group to take phase references from")]
    NoFundamental,
    #[error("no strong harmonic yields two phase-shift samples")]
    InsufficientShiftSamples,
    #[error("bad reference ranges: {0}")]
    ReferenceData(String),
}

/// Per-200-ms aggregates of the six amplitude/frequency statistics over the
/// strong-harmonic objects. Reported for inspection; no classifier input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalWindow {
    pub t0: f64,
    pub t1: f64,
    pub amp_std: f64,
    pub shimmer: f64,
    pub amp_slope: f64,
    pub freq_std: f64,
    pub jitter: f64,
    pub freq_slope: f64,
    pub n_objects: usize,
}

pub const LOCAL_WINDOW_S: f64 = 0.2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureReport {
    pub schema_version: u32,
    pub source_id: String,
    pub f1_hz: f64,
    pub features: BiomarkerVector,
    pub flags: Vec<String>,
    pub local_windows: Vec<LocalWindow>,
}

/// Whole analysis stage: tracked objects in, feature report out. Phase
/// features degrade to zero (with a flag) when no harmonic delivers a shift
/// series, rather than failing the recording.
pub fn feature_report(
    objects: &[SoundObject],
    duration: f64,
    source_id: &str,
) -> Result<FeatureReport, FeatureError> {
    let selected = select_significant(objects);
    let f1 = find_fundamental(objects, &selected)?;
    let grouping = group_objects(objects, &selected, f1);

    let mut flags = Vec::new();
    let mut series: Vec<(usize, Vec<f64>)> = Vec::new();
    for &h in &grouping.strong {
        if h == 1 {
            continue;
        }
        if let Ok(s) = harmonic_shift_series(objects, &grouping, h, (0.0, duration)) {
            series.push((h, s));
        }
    }
    let phase = match phase_stats(&series) {
        Ok(p) => p,
        Err(FeatureError::InsufficientShiftSamples) => {
            flags.push("phase_fallback".into());
            PhaseStats { mean_shift: Vec::new(), shift_std: 0.0, drift: 0.0 }
        }
        Err(e) => return Err(e),
    };

    let (features, hnr_capped) = biomarkers(objects, &grouping, &phase)?;
    if hnr_capped {
        flags.push("hnr_capped".into());
    }

    Ok(FeatureReport {
        schema_version: crate::SCHEMA_VERSION,
        source_id: source_id.into(),
        f1_hz: f1,
        features,
        flags,
        local_windows: local_windows(objects, &grouping, duration),
    })
}

fn slice_energy(pts: &[ObjectPoint]) -> f64 {
    pts.windows(2)
        .map(|w| 0.5 * (w[0].amplitude.powi(2) + w[1].amplitude.powi(2)) * (w[1].time - w[0].time))
        .sum()
}

pub fn local_windows(
    objects: &[SoundObject],
    grouping: &HarmonicGrouping,
    duration: f64,
) -> Vec<LocalWindow> {
    let strong_members: Vec<&SoundObject> = grouping
        .strong
        .iter()
        .flat_map(|&h| grouping.group(h).into_iter().flat_map(|g| &g.members))
        .map(|&i| &objects[i])
        .collect();

    let n_win = (duration / LOCAL_WINDOW_S).ceil() as usize;
    let mut out = Vec::new();
    for w in 0..n_win {
        let t0 = w as f64 * LOCAL_WINDOW_S;
        let t1 = t0 + LOCAL_WINDOW_S;
        let mut acc = [0.0f64; 6];
        let mut weight = 0.0;
        let mut n_objects = 0usize;
        for obj in &strong_members {
            let lo = obj.points.partition_point(|p| p.time < t0);
            let hi = obj.points.partition_point(|p| p.time < t1);
            let pts = &obj.points[lo..hi];
            let Ok(s) = stats::stats_from_points(pts) else { continue };
            let e = slice_energy(pts);
            acc[0] += e * s.std_amp_pct;
            acc[1] += e * s.shimmer_pct;
            acc[2] += e * s.amp_slope_pct_per_s;
            acc[3] += e * s.std_freq_pct;
            acc[4] += e * s.jitter_pct;
            acc[5] += e * s.freq_slope_pct_per_s;
            weight += e;
            n_objects += 1;
        }
        if n_objects == 0 || weight <= 0.0 {
            continue;
        }
        out.push(LocalWindow {
            t0,
            t1,
            amp_std: acc[0] / weight,
            shimmer: acc[1] / weight,
            amp_slope: acc[2] / weight,
            freq_std: acc[3] / weight,
            jitter: acc[4] / weight,
            freq_slope: acc[5] / weight,
            n_objects,
        });
    }
    out
}
