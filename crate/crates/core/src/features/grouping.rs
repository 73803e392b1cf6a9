use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::tracker::SoundObject;

/// Selection thresholds: an object matters if it carries > 1% of the total
/// energy or lasts longer than a second.
pub const SIGNIFICANT_ENERGY_FRAC: f64 = 0.01;
pub const SIGNIFICANT_DURATION_S: f64 = 1.0;
/// Members sit within ±3% of their harmonic's nominal frequency — half the
/// tracker's slow-variation bound, and still separating neighbors at h = 23
/// for any fundamental above 70 Hz.
pub const HARMONIC_TOL: f64 = 0.03;
pub const MAX_HARMONIC: usize = 23;
/// Fundamental search range (adult sustained vowel) and scan step.
pub const F1_SCAN_LO: f64 = 55.0;
pub const F1_SCAN_HI: f64 = 400.0;
const F1_SCAN_STEP: f64 = 0.5;
/// A harmonic is strong when its group holds at least this share of the
/// recording's energy.
pub const STRONG_FRAC: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicGroup {
    /// Harmonic number (1 = fundamental).
    pub h: usize,
    /// Indices into the tracked-object slice.
    pub members: Vec<usize>,
    pub energy: f64,
}

/// Exhaustive partition of the tracked objects around a fundamental. Every
/// object index lands in exactly one of: a harmonic group, `subharmonics`,
/// or a noise band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicGrouping {
    pub f1: f64,
    pub harmonics: Vec<HarmonicGroup>,
    /// Strong harmonic numbers, ascending. Contains 1 whenever the
    /// fundamental group is nonempty, plus every h at `STRONG_FRAC` energy.
    pub strong: Vec<usize>,
    /// Significant objects without a harmonic seat.
    pub subharmonics: Vec<usize>,
    pub noise_low: Vec<usize>,
    pub noise_mid: Vec<usize>,
    pub noise_high: Vec<usize>,
    pub total_energy: f64,
}

impl HarmonicGrouping {
    pub fn group(&self, h: usize) -> Option<&HarmonicGroup> {
        self.harmonics.iter().find(|g| g.h == h)
    }
    pub fn is_strong(&self, h: usize) -> bool {
        self.strong.contains(&h)
    }
}

pub fn select_significant(objects: &[SoundObject]) -> Vec<usize> {
    let total: f64 = objects.iter().map(|o| o.energy()).sum();
    (0..objects.len())
        .filter(|&i| {
            objects[i].energy() > SIGNIFICANT_ENERGY_FRAC * total
                || objects[i].duration() > SIGNIFICANT_DURATION_S
        })
        .collect()
}

fn supports(f: f64, d: f64) -> Option<usize> {
    let h = (f / d).round() as usize;
    (h >= 1 && (f - h as f64 * d).abs() <= HARMONIC_TOL * f).then_some(h)
}

/// Common-divisor search over the selected objects. The coarse 0.5 Hz scan
/// maximizes supporter energy (ties resolved toward larger divisors, so a
/// lone 220 Hz tone reads as 220 and not its subharmonic); the winner is
/// then refined by an energy-weighted least-squares fit over its supporters
/// with harmonic numbers frozen, snapped to a 0.01 Hz grid. Refinement
/// matters: the coarse winner sits at the edge of a support plateau and
/// alone would bias the fundamental by up to +3%.
pub fn find_fundamental(
    objects: &[SoundObject],
    selected: &[usize],
) -> Result<f64, FeatureError> {
    let freqs: Vec<f64> = selected.iter().map(|&i| objects[i].mean_frequency()).collect();
    let energies: Vec<f64> = selected.iter().map(|&i| objects[i].energy()).collect();
    let selected_energy: f64 = energies.iter().sum();

    let n_steps = ((F1_SCAN_HI - F1_SCAN_LO) / F1_SCAN_STEP).round() as usize;
    let mut best_d = F1_SCAN_LO;
    let mut best_e = -1.0;
    for i in 0..=n_steps {
        let d = F1_SCAN_LO + F1_SCAN_STEP * i as f64;
        let e: f64 = freqs
            .iter()
            .zip(&energies)
            .filter_map(|(&f, &en)| supports(f, d).map(|_| en))
            .sum();
        if e >= best_e {
            (best_d, best_e) = (d, e);
        }
    }
    if selected_energy <= 0.0 || best_e < 0.5 * selected_energy {
        return Err(FeatureError::NoHarmonicStructure);
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for (&f, &en) in freqs.iter().zip(&energies) {
        if let Some(h) = supports(f, best_d) {
            num += en * h as f64 * f;
            den += en * (h * h) as f64;
        }
    }
    Ok((100.0 * num / den).round() / 100.0)
}

pub fn group_objects(
    objects: &[SoundObject],
    selected: &[usize],
    f1: f64,
) -> HarmonicGrouping {
    let total_energy: f64 = objects.iter().map(|o| o.energy()).sum();
    let mut harmonics: Vec<HarmonicGroup> =
        (1..=MAX_HARMONIC).map(|h| HarmonicGroup { h, members: Vec::new(), energy: 0.0 }).collect();
    let mut subharmonics = Vec::new();
    let (mut noise_low, mut noise_mid, mut noise_high) = (Vec::new(), Vec::new(), Vec::new());

    for (i, obj) in objects.iter().enumerate() {
        let f = obj.mean_frequency();
        let h = (f / f1).round() as usize;
        if (1..=MAX_HARMONIC).contains(&h) && (f - h as f64 * f1).abs() <= HARMONIC_TOL * h as f64 * f1
        {
            harmonics[h - 1].members.push(i);
            harmonics[h - 1].energy += obj.energy();
        } else if selected.contains(&i) {
            subharmonics.push(i);
        } else if f < 200.0 {
            noise_low.push(i);
        } else if f <= 2000.0 {
            noise_mid.push(i);
        } else {
            noise_high.push(i);
        }
    }

    let strong: Vec<usize> = harmonics
        .iter()
        .filter(|g| {
            !g.members.is_empty() && (g.energy >= STRONG_FRAC * total_energy || g.h == 1)
        })
        .map(|g| g.h)
        .collect();
    harmonics.retain(|g| !g.members.is_empty());

    HarmonicGrouping {
        f1,
        harmonics,
        strong,
        subharmonics,
        noise_low,
        noise_mid,
        noise_high,
        total_energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::ObjectPoint;

    /// Constant-parameter object: `seconds` long, ~50 points.
    fn tone(freq: f64, amp: f64, seconds: f64) -> SoundObject {
        let n = 50;
        SoundObject {
            initial_phase: 0.0,
            points: (0..=n)
                .map(|i| ObjectPoint {
                    time: seconds * i as f64 / n as f64,
                    amplitude: amp,
                    frequency: freq,
                })
                .collect(),
        }
    }

    #[test]
    fn significance_thresholds() {
        // Ten equal objects: each holds 10% and is selected. An eleventh at
        // ~0.5% of the total is dropped when short but kept once it lasts
        // longer than a second (duration clause, energy unchanged per step).
        let mut objs: Vec<SoundObject> = (0..10).map(|i| tone(100.0 + i as f64, 1.0, 0.5)).collect();
        assert_eq!(select_significant(&objs).len(), 10);
        objs.push(tone(500.0, 0.15, 0.4));
        assert_eq!(select_significant(&objs).len(), 10);
        *objs.last_mut().unwrap() = tone(500.0, 0.15, 1.2);
        assert!(objs[10].energy() < 0.01 * objs.iter().map(|o| o.energy()).sum::<f64>());
        assert_eq!(select_significant(&objs).len(), 11);
    }

    #[test]
    fn fundamental_from_detuned_triad() {
        // Frozen against an independent brute-force scan of the same rule:
        // supporters {150.2, 299.8, 450.1} at h = 1, 2, 3 give the
        // energy-weighted divisor 2100.1/14 = 150.0071..., snapped to 150.01.
        let objs = vec![tone(150.2, 1.0, 2.0), tone(299.8, 1.0, 2.0), tone(450.1, 1.0, 2.0)];
        let sel = select_significant(&objs);
        let f1 = find_fundamental(&objs, &sel).unwrap();
        assert!((f1 - 150.01).abs() < 1e-9, "f1 = {f1}");
    }

    #[test]
    fn single_tone_is_its_own_fundamental() {
        // The tie rule (>= keeps the larger divisor) must not let 110 Hz win.
        let objs = vec![tone(220.0, 1.0, 2.0)];
        let f1 = find_fundamental(&objs, &[0]).unwrap();
        assert!((f1 - 220.0).abs() < 1e-9, "f1 = {f1}");
    }

    #[test]
    fn inharmonic_triple_has_no_fundamental() {
        // {200, 216, 233.3}: every pairwise support window along the divisor
        // axis is disjoint (verified by exhaustive scan at 0.05 Hz), so no
        // divisor ever captures more than one component = 1/3 of the energy.
        let objs = vec![tone(200.0, 1.0, 2.0), tone(216.0, 1.0, 2.0), tone(233.3, 1.0, 2.0)];
        let sel = select_significant(&objs);
        assert!(matches!(
            find_fundamental(&objs, &sel),
            Err(FeatureError::NoHarmonicStructure)
        ));
    }

    #[test]
    fn grouping_partitions_every_object() {
        let objs = vec![
            tone(150.0, 1.0, 2.0),           // h1
            tone(300.5, 0.7, 2.0),           // h2 (within 3%)
            tone(450.0, 0.5, 2.0),           // h3
            tone(225.0, 0.4, 2.0),           // 1.5x -> subharmonic (selected)
            tone(190.0, 0.001, 0.2),         // noise_low
            tone(1000.0, 0.001, 0.2),        // noise_mid
            tone(3700.0, 0.001, 0.2),        // noise_high (above the h=23 band)
        ];
        let sel = select_significant(&objs);
        let g = group_objects(&objs, &sel, 150.0);
        assert_eq!(g.group(1).unwrap().members, vec![0]);
        assert_eq!(g.group(2).unwrap().members, vec![1]);
        assert_eq!(g.group(3).unwrap().members, vec![2]);
        assert_eq!(g.subharmonics, vec![3]);
        assert_eq!(g.noise_low, vec![4]);
        assert_eq!(g.noise_mid, vec![5]);
        assert_eq!(g.noise_high, vec![6]);
        // Partition check: bucket energies sum to the total exactly.
        let bucket_sum: f64 = g.harmonics.iter().map(|gr| gr.energy).sum::<f64>()
            + g.subharmonics.iter().chain(&g.noise_low).chain(&g.noise_mid).chain(&g.noise_high)
                .map(|&i| objs[i].energy())
                .sum::<f64>();
        assert!((bucket_sum - g.total_energy).abs() <= 1e-9 * g.total_energy);
        // 150 is strong (fundamental always is); h2 at 0.49 share is strong;
        // h3 at 0.25/1.9 ~ 13% is strong too.
        assert_eq!(g.strong, vec![1, 2, 3]);
    }

    #[test]
    fn weak_fundamental_still_marked_strong() {
        let objs = vec![tone(150.0, 0.05, 2.0), tone(300.0, 1.0, 2.0)];
        let g = group_objects(&objs, &[0, 1], 150.0);
        assert!(g.is_strong(1) && g.is_strong(2));
        assert!(g.group(1).unwrap().energy < STRONG_FRAC * g.total_energy);
    }
}
