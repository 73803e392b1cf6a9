use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::tracker::{ObjectPoint, SoundObject};
use crate::util::{mean, ols_line, std_pop};

/// Per-object amplitude/frequency statistics. All percentage fields are
/// normalized by the object's own mean, so uniform gain cancels out.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectStats {
    pub mean_amp: f64,
    pub std_amp_pct: f64,
    /// Total variation: mean |step| of amplitude, as % of mean amplitude.
    pub shimmer_pct: f64,
    pub amp_slope_pct_per_s: f64,
    pub mean_freq: f64,
    pub std_freq_pct: f64,
    /// Total variation: mean |step| of frequency, as % of mean frequency.
    pub jitter_pct: f64,
    pub freq_slope_pct_per_s: f64,
    pub energy: f64,
    pub duration: f64,
    pub point_count: usize,
}

pub fn object_stats(obj: &SoundObject) -> Result<ObjectStats, FeatureError> {
    stats_from_points(&obj.points).map(|mut s| {
        s.energy = obj.energy();
        s
    })
}

/// Stats over an arbitrary point run (used for whole objects and for the
/// 200 ms local windows). Energy is left for the caller, whose notion of
/// span may differ from the points'.
pub(super) fn stats_from_points(points: &[ObjectPoint]) -> Result<ObjectStats, FeatureError> {
    if points.len() < 3 {
        return Err(FeatureError::TooFewPoints(points.len()));
    }
    let times: Vec<f64> = points.iter().map(|p| p.time).collect();
    let amps: Vec<f64> = points.iter().map(|p| p.amplitude).collect();
    let freqs: Vec<f64> = points.iter().map(|p| p.frequency).collect();
    let (mean_amp, mean_freq) = (mean(&amps), mean(&freqs));

    let tv = |xs: &[f64]| {
        xs.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (xs.len() - 1) as f64
    };
    Ok(ObjectStats {
        mean_amp,
        std_amp_pct: 100.0 * std_pop(&amps) / mean_amp,
        shimmer_pct: 100.0 * tv(&amps) / mean_amp,
        amp_slope_pct_per_s: 100.0 * ols_line(&times, &amps).0 / mean_amp,
        mean_freq,
        std_freq_pct: 100.0 * std_pop(&freqs) / mean_freq,
        jitter_pct: 100.0 * tv(&freqs) / mean_freq,
        freq_slope_pct_per_s: 100.0 * ols_line(&times, &freqs).0 / mean_freq,
        energy: 0.0,
        duration: times[times.len() - 1] - times[0],
        point_count: points.len(),
    })
}
