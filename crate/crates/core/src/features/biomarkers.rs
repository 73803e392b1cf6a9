use serde::{Deserialize, Serialize};

use super::grouping::{HarmonicGrouping, SIGNIFICANT_ENERGY_FRAC};
use super::phase::PhaseStats;
use super::stats::object_stats;
use super::FeatureError;
use crate::tracker::SoundObject;
use crate::util::ols_line;

/// Ceiling reported for a recording with (near-)zero tracked noise energy;
/// the cap is flagged, since a spotless denominator usually means the
/// recording, not the voice, is suspect.
pub const HNR_CAP: f64 = 1000.0;

/// Report/CSV ordering of the feature vector.
pub const FEATURE_NAMES: [&str; 14] = [
    "amp_std",
    "shimmer",
    "amp_slope",
    "freq_std",
    "jitter",
    "freq_slope",
    "phase_std",
    "phase_drift",
    "obj_per_harm",
    "subharm_count",
    "e_low_harm",
    "e_subharm",
    "hnr",
    "fq_tilt",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerVector {
    pub amp_std: f64,
    pub shimmer: f64,
    pub amp_slope: f64,
    pub freq_std: f64,
    pub jitter: f64,
    pub freq_slope: f64,
    pub phase_std: f64,
    pub phase_drift: f64,
    pub obj_per_harm: f64,
    pub subharm_count: f64,
    pub e_low_harm: f64,
    pub e_subharm: f64,
    pub hnr: f64,
    pub fq_tilt: f64,
}

impl BiomarkerVector {
    pub fn as_array(&self) -> [f64; 14] {
        [
            self.amp_std,
            self.shimmer,
            self.amp_slope,
            self.freq_std,
            self.jitter,
            self.freq_slope,
            self.phase_std,
            self.phase_drift,
            self.obj_per_harm,
            self.subharm_count,
            self.e_low_harm,
            self.e_subharm,
            self.hnr,
            self.fq_tilt,
        ]
    }

    pub fn from_array(v: [f64; 14]) -> Self {
        BiomarkerVector {
            amp_std: v[0],
            shimmer: v[1],
            amp_slope: v[2],
            freq_std: v[3],
            jitter: v[4],
            freq_slope: v[5],
            phase_std: v[6],
            phase_drift: v[7],
            obj_per_harm: v[8],
            subharm_count: v[9],
            e_low_harm: v[10],
            e_subharm: v[11],
            hnr: v[12],
            fq_tilt: v[13],
        }
    }
}

/// Collapse the grouping + phase stats into the 14-feature vector. The
/// second return is true when the HNR denominator was empty and the cap was
/// reported.
pub fn biomarkers(
    objects: &[SoundObject],
    grouping: &HarmonicGrouping,
    phase: &PhaseStats,
) -> Result<(BiomarkerVector, bool), FeatureError> {
    if grouping.strong.is_empty() {
        return Err(FeatureError::NoStrongHarmonics);
    }
    let e_total = grouping.total_energy;

    // Six amplitude/frequency features: energy-weighted over the objects of
    // the strong harmonics, so a dominant fundamental is not outvoted by
    // fragments.
    let mut acc = [0.0f64; 6];
    let mut weight = 0.0;
    let mut n_strong_objects = 0usize;
    for &h in &grouping.strong {
        for &i in &grouping.group(h).expect("strong harmonic has a group").members {
            let s = object_stats(&objects[i])?;
            let w = s.energy;
            acc[0] += w * s.std_amp_pct;
            acc[1] += w * s.shimmer_pct;
            acc[2] += w * s.amp_slope_pct_per_s;
            acc[3] += w * s.std_freq_pct;
            acc[4] += w * s.jitter_pct;
            acc[5] += w * s.freq_slope_pct_per_s;
            weight += w;
            n_strong_objects += 1;
        }
    }
    for a in &mut acc {
        *a /= weight;
    }

    let e_strong: f64 =
        grouping.strong.iter().map(|&h| grouping.group(h).unwrap().energy).sum();
    let e_harm: f64 = grouping.harmonics.iter().map(|g| g.energy).sum();
    // Fold from +0.0: `Sum<f64>` starts at -0.0, which an empty group would
    // leak into reports as "-0.0".
    let e_sub: f64 =
        grouping.subharmonics.iter().map(|&i| objects[i].energy()).fold(0.0, |a, b| a + b);
    let e_noise: f64 = grouping
        .noise_low
        .iter()
        .chain(&grouping.noise_mid)
        .chain(&grouping.noise_high)
        .map(|&i| objects[i].energy())
        .fold(0.0, |a, b| a + b);

    let denom = e_noise + e_sub;
    let (hnr, capped) =
        if denom < 1e-9 * e_total { (HNR_CAP, true) } else { (e_harm / denom, false) };

    let subharm_count = grouping
        .subharmonics
        .iter()
        .filter(|&&i| objects[i].energy() > SIGNIFICANT_ENERGY_FRAC * e_total)
        .count();

    // Energy-distribution slope over the strong harmonics, log ordinate,
    // sign such that a falling spectrum (fundamental-heavy) reads positive.
    let fq_tilt = if grouping.strong.len() < 2 {
        0.0
    } else {
        let hs: Vec<f64> = grouping.strong.iter().map(|&h| h as f64).collect();
        let es: Vec<f64> =
            grouping.strong.iter().map(|&h| grouping.group(h).unwrap().energy.log10()).collect();
        -ols_line(&hs, &es).0
    };

    let v = BiomarkerVector {
        amp_std: acc[0],
        shimmer: acc[1],
        amp_slope: acc[2],
        freq_std: acc[3],
        jitter: acc[4],
        freq_slope: acc[5],
        phase_std: phase.shift_std,
        phase_drift: phase.drift,
        obj_per_harm: n_strong_objects as f64 / grouping.strong.len() as f64,
        subharm_count: subharm_count as f64,
        e_low_harm: 100.0 * e_strong / e_total,
        e_subharm: 100.0 * e_sub / e_total,
        hnr,
        fq_tilt,
    };
    Ok((v, capped))
}
