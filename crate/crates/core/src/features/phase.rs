use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::grouping::HarmonicGrouping;
use super::FeatureError;
use crate::tracker::SoundObject;
use crate::util::wrap_pi;

/// Shift sampling density: at most `MAX_SHIFTS_PER_SECTION` fundamental
/// crossings are kept per section, evenly strided so each section is
/// represented across its whole span rather than by its first few cycles.
pub const SHIFT_SECTION_S: f64 = 0.2;
pub const MAX_SHIFTS_PER_SECTION: usize = 8;

/// Dispersion of the harmonic shifts, pooled over the sampled harmonics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseStats {
    /// (harmonic, circular mean of its shift samples).
    pub mean_shift: Vec<(usize, f64)>,
    /// Pooled std (rad) of wrapped deviations from each circular mean.
    pub shift_std: f64,
    /// Mean over harmonics of the per-step total variation of the shifts.
    pub drift: f64,
}

/// Phase/amplitude evaluation along one object. `prefix[j]` is the model
/// phase at point j, so a lookup is one binary search plus the quadratic
/// tail of the current segment.
struct PhaseInterp<'a> {
    obj: &'a SoundObject,
    prefix: Vec<f64>,
}

impl<'a> PhaseInterp<'a> {
    fn new(obj: &'a SoundObject) -> Self {
        let mut prefix = Vec::with_capacity(obj.points.len());
        let mut phase = obj.initial_phase;
        prefix.push(phase);
        for w in obj.points.windows(2) {
            phase += PI * (w[0].frequency + w[1].frequency) * (w[1].time - w[0].time);
            prefix.push(phase);
        }
        PhaseInterp { obj, prefix }
    }

    /// (phase, amplitude) at `t`, or None outside the object's span.
    fn at(&self, t: f64) -> Option<(f64, f64)> {
        let pts = &self.obj.points;
        if t < pts[0].time || t > pts[pts.len() - 1].time {
            return None;
        }
        let j = pts.partition_point(|p| p.time <= t).saturating_sub(1);
        if j + 1 == pts.len() {
            return Some((self.prefix[j], pts[j].amplitude));
        }
        let (p0, p1) = (&pts[j], &pts[j + 1]);
        let dt = p1.time - p0.time;
        let u = t - p0.time;
        let phase = self.prefix[j]
            + TAU * (p0.frequency * u + 0.5 * (p1.frequency - p0.frequency) * u * u / dt);
        let amp = p0.amplitude + (p1.amplitude - p0.amplitude) * u / dt;
        Some((phase, amp))
    }
}

/// Times within the object's span where its phase passes a multiple of 2*pi
/// (the sine-convention zero upcrossing: the rendered component crosses zero
/// going positive). Phase is strictly increasing, so each target has exactly
/// one root per containing segment; the quadratic is solved in the
/// subtraction-free form.
fn object_upcrossings(obj: &SoundObject) -> Vec<f64> {
    let mut out = Vec::new();
    let mut phase = obj.initial_phase;
    let mut k = (phase / TAU).ceil();
    for w in obj.points.windows(2) {
        let dt = w[1].time - w[0].time;
        let (f0, f1) = (w[0].frequency, w[1].frequency);
        let end = phase + PI * (f0 + f1) * dt;
        while TAU * k < end {
            if TAU * k >= phase {
                let a = PI * (f1 - f0) / dt;
                let b = TAU * f0;
                let c = phase - TAU * k;
                let disc = (b * b - 4.0 * a * c).max(0.0);
                let u = (-2.0 * c / (b + disc.sqrt())).clamp(0.0, dt);
                out.push(w[0].time + u);
            }
            k += 1.0;
        }
        phase = end;
    }
    out
}

/// Fundamental zero-crossing instants inside `window`, merged over the F1
/// group's members, deduplicated within half a period, and thinned to the
/// per-section cap.
pub fn fundamental_crossings(
    objects: &[SoundObject],
    grouping: &HarmonicGrouping,
    window: (f64, f64),
) -> Result<Vec<f64>, FeatureError> {
    let group = grouping.group(1).ok_or(FeatureError::NoFundamental)?;
    let mut crossings: Vec<f64> = group
        .members
        .iter()
        .flat_map(|&i| object_upcrossings(&objects[i]))
        .filter(|&t| t >= window.0 && t < window.1)
        .collect();
    if crossings.is_empty() {
        return Ok(crossings);
    }
    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = 0.5 / grouping.f1;
    let mut merged = vec![crossings[0]];
    for &t in &crossings[1..] {
        if t - merged[merged.len() - 1] >= min_gap {
            merged.push(t);
        }
    }

    let mut kept = Vec::new();
    let mut i = 0;
    while i < merged.len() {
        let section = (merged[i] / SHIFT_SECTION_S).floor();
        let mut j = i;
        while j < merged.len() && (merged[j] / SHIFT_SECTION_S).floor() == section {
            j += 1;
        }
        let stride = (j - i).div_ceil(MAX_SHIFTS_PER_SECTION);
        kept.extend(merged[i..j].iter().copied().step_by(stride));
        i = j;
    }
    Ok(kept)
}

/// Shift samples for harmonic `h`: at each fundamental crossing the
/// amplitude-weighted resultant phase of the group's members, wrapped to
/// (-pi, pi]. Crossings no member covers yield no sample.
pub fn harmonic_shift_series(
    objects: &[SoundObject],
    grouping: &HarmonicGrouping,
    h: usize,
    window: (f64, f64),
) -> Result<Vec<f64>, FeatureError> {
    let crossings = fundamental_crossings(objects, grouping, window)?;
    let members: Vec<PhaseInterp> = grouping
        .group(h)
        .map(|g| g.members.iter().map(|&i| PhaseInterp::new(&objects[i])).collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for &t in &crossings {
        let (mut re, mut im) = (0.0, 0.0);
        for m in &members {
            if let Some((phase, amp)) = m.at(t) {
                re += amp * phase.cos();
                im += amp * phase.sin();
            }
        }
        if re != 0.0 || im != 0.0 {
            out.push(wrap_pi(im.atan2(re)));
        }
    }
    Ok(out)
}

/// Pool the dispersion of the per-harmonic shift series. Series with fewer
/// than two samples carry no dispersion information and are skipped; if all
/// are that short the stats are undefined.
pub fn phase_stats(series: &[(usize, Vec<f64>)]) -> Result<PhaseStats, FeatureError> {
    let mut mean_shift = Vec::new();
    let mut sq_sum = 0.0;
    let mut n_total = 0usize;
    let mut drift_sum = 0.0;
    let mut n_harm = 0usize;
    for (h, samples) in series {
        if samples.len() < 2 {
            continue;
        }
        let re: f64 = samples.iter().map(|s| s.cos()).sum();
        let im: f64 = samples.iter().map(|s| s.sin()).sum();
        let mu = im.atan2(re);
        mean_shift.push((*h, mu));
        sq_sum += samples.iter().map(|s| wrap_pi(s - mu).powi(2)).sum::<f64>();
        n_total += samples.len();
        drift_sum += samples.windows(2).map(|w| wrap_pi(w[1] - w[0]).abs()).sum::<f64>()
            / (samples.len() - 1) as f64;
        n_harm += 1;
    }
    if n_harm == 0 {
        return Err(FeatureError::InsufficientShiftSamples);
    }
    Ok(PhaseStats {
        mean_shift,
        shift_std: (sq_sum / n_total as f64).sqrt(),
        drift: drift_sum / n_harm as f64,
    })
}
