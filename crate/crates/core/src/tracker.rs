use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filterbank::Spectrum;
use crate::util::wrap_pi;

pub const FREQ_MIN: f64 = 64.0;
pub const FREQ_MAX: f64 = 10_000.0;
/// Allowed departure of a candidate's measured phase from the phase the
/// object's model predicts (trapezoidal integral of the stored frequency
/// track from the first point); beyond it the object closes.
pub const TAU_PHASE: f64 = PI / 4.0;
/// Max relative frequency change between consecutive points.
pub const MAX_FREQ_STEP: f64 = 0.06;
/// Candidates this far (dB) below the loudest band sample are noise.
pub const AMP_FLOOR_DB: f64 = 60.0;
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("length mismatch: original {original} vs resynthesis {resynthesis} samples")]
    LengthMismatch { original: usize, resynthesis: usize },
}

/// One measured point of a partial: instant, linear amplitude, and the mean
/// frequency over the step that arrived here (phase-advance derived).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPoint {
    #[serde(rename = "t")]
    pub time: f64,
    #[serde(rename = "a")]
    pub amplitude: f64,
    #[serde(rename = "f")]
    pub frequency: f64,
}

/// A phase-continuous partial. Between points, amplitude and frequency
/// interpolate linearly; phase integrates from `initial_phase` (sine
/// convention: the waveform is a(t)*sin(phase(t))).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundObject {
    pub initial_phase: f64,
    pub points: Vec<ObjectPoint>,
}

impl SoundObject {
    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn start_time(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.time)
    }

    pub fn end_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.time)
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Integral of squared amplitude over the object's span, exact for the
    /// piecewise-linear amplitude model.
    pub fn energy(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let (a0, a1) = (w[0].amplitude, w[1].amplitude);
                (w[1].time - w[0].time) * (a0 * a0 + a0 * a1 + a1 * a1) / 3.0
            })
            .sum()
    }

    pub fn mean_frequency(&self) -> f64 {
        crate::util::mean(&self.points.iter().map(|p| p.frequency).collect::<Vec<_>>())
    }
}

// ---------------------------------------------------------------------------
// Ridge candidates

/// A local maximum across the filter axis at one frame, refined by quadratic
/// interpolation of log-amplitude (exact for the bank's Gaussian profiles).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    col: u32,
    freq: f64,
    amp: f64,
    phase: f64,
}

struct CandidateGrid {
    offsets: Vec<usize>,
    items: Vec<Candidate>,
    peak_amp: f64,
}

impl CandidateGrid {
    fn at(&self, col: usize) -> &[Candidate] {
        &self.items[self.offsets[col]..self.offsets[col + 1]]
    }
}

const EXTRACT_CHUNK: usize = 16;

fn extract_candidates(spectrum: &Spectrum) -> CandidateGrid {
    let bank = spectrum.bank();
    let n_filters = bank.n_filters;
    let n_frames = spectrum.n_frames();
    let sr = bank.sample_rate as f64;
    let n_chunks = n_filters.div_ceil(EXTRACT_CHUNK);

    let per_chunk: Vec<(Vec<Candidate>, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let k_lo = c * EXTRACT_CHUNK;
            let k_hi = ((c + 1) * EXTRACT_CHUNK).min(n_filters);
            // One extra band each side for the neighbor comparisons.
            let lo = k_lo.saturating_sub(1);
            let hi = (k_hi + 1).min(n_filters);
            let bands = spectrum.compute_bands(lo..hi);
            let mut out = Vec::new();
            let mut peak: f64 = 0.0;
            for t in 1..n_frames {
                for k in k_lo.max(1)..k_hi.min(n_filters - 1) {
                    let below = bands[k - 1 - lo][t].norm();
                    let here = bands[k - lo][t].norm();
                    let above = bands[k + 1 - lo][t].norm();
                    peak = peak.max(here);
                    if !(below < here && above <= here) || here <= 0.0 {
                        continue;
                    }
                    if below <= 0.0 || above <= 0.0 {
                        continue; // log-interp undefined; numeric dust anyway
                    }
                    let (lm, l0, lp) = (below.ln(), here.ln(), above.ln());
                    let denom = lm - 2.0 * l0 + lp;
                    let delta = if denom < 0.0 { 0.5 * (lm - lp) / denom } else { 0.0 };
                    let delta = delta.clamp(-0.5, 0.5);
                    let freq = bank.centers[k]
                        * 2f64.powf(delta / bank.filters_per_octave as f64);
                    let amp = (l0 - 0.25 * (lm - lp) * delta).exp();
                    // Gate: the band's phase-advance frequency must agree
                    // with the interpolated ridge to half a filter spacing.
                    let z = bands[k - lo][t];
                    let zp = bands[k - lo][t - 1];
                    if zp.norm() <= 0.0 {
                        continue;
                    }
                    let f_inst = (z * zp.conj()).arg() * sr / TAU;
                    if (f_inst - freq).abs() > bank.half_spacing_hz(k) {
                        continue;
                    }
                    out.push(Candidate {
                        col: t as u32,
                        freq,
                        amp,
                        phase: z.arg(),
                    });
                }
            }
            (out, peak)
        })
        .collect();

    let peak_amp = per_chunk.iter().fold(0.0f64, |m, (_, p)| m.max(*p));

    // Counting merge by column; chunks are visited in filter order, so each
    // column's candidates stay sorted by k. Deterministic regardless of the
    // parallel schedule above.
    let mut counts = vec![0usize; n_frames + 1];
    for (chunk, _) in &per_chunk {
        for cand in chunk {
            counts[cand.col as usize + 1] += 1;
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let offsets = counts.clone();
    let total = offsets[n_frames];
    let mut items = vec![
        Candidate { col: 0, freq: 0.0, amp: 0.0, phase: 0.0 };
        total
    ];
    let mut cursor = offsets.clone();
    for (chunk, _) in &per_chunk {
        for cand in chunk {
            let c = cand.col as usize;
            items[cursor[c]] = *cand;
            cursor[c] += 1;
        }
    }
    CandidateGrid { offsets, items, peak_amp }
}

// ---------------------------------------------------------------------------
// Assembly

struct Active {
    id: u32,
    points: Vec<(usize, f64, f64)>, // (col, amp, freq)
    first_phase: f64,
    last_phase: f64,
    /// Phase the stored track predicts at the last point: `first_phase` plus
    /// the trapezoidal integral of the piecewise-linear frequency model.
    /// Exactly the phase `reconstruct` will realize there.
    model_phase: f64,
    last_ridge_freq: f64,
    next_due: usize,
}

impl Active {
    fn last_col(&self) -> usize {
        self.points.last().unwrap().0
    }
    fn freq(&self) -> f64 {
        self.points.last().unwrap().2
    }
    fn rebuild_model_phase(&mut self, sr: f64) {
        let mut m = self.first_phase;
        for w in self.points.windows(2) {
            m += PI * (w[0].2 + w[1].2) * (w[1].0 - w[0].0) as f64 / sr;
        }
        self.model_phase = m;
    }
}

/// The stretch of ridge ahead of each active object, as (id, last column,
/// last ridge frequency). A candidate ahead of another object's last point
/// and inside its step band belongs to that object's sweep; letting anyone
/// else take it splits a ridge between two interleaved objects. Ids grow in
/// creation order and only older objects block younger ones, so a fresh
/// transient seed can never starve the track already on the ridge.
struct RidgeGuard(Vec<(u32, usize, f64)>);

impl RidgeGuard {
    fn snapshot(actives: &[Active]) -> Self {
        RidgeGuard(
            actives
                .iter()
                .map(|a| (a.id, a.last_col(), a.last_ridge_freq))
                .collect(),
        )
    }
    fn blocks(&self, id: u32, col: usize, freq: f64) -> bool {
        self.0.iter().any(|&(other, last_col, rf)| {
            other < id && col > last_col && (freq - rf).abs() <= MAX_FREQ_STEP * rf
        })
    }
}

/// Assemble sound objects from a bank response. Candidate extraction runs in
/// parallel; the sweep itself is sequential and bit-deterministic.
pub fn track_objects(spectrum: &Spectrum) -> Vec<SoundObject> {
    let sr = spectrum.bank().sample_rate as f64;
    let n_frames = spectrum.n_frames();
    let grid = extract_candidates(spectrum);
    let floor = grid.peak_amp * 10f64.powf(-AMP_FLOOR_DB / 20.0);

    let mut claimed = vec![false; grid.items.len()];
    let mut actives: Vec<Active> = Vec::new();
    let mut finished: Vec<Active> = Vec::new();
    let mut next_id: u32 = 0;

    for col in 0..n_frames {
        // Extend every object due now; objects are visited in creation
        // order. An extension may claim a candidate in a nearby column on
        // either side of the nominal two-period target.
        let mut i = 0;
        while i < actives.len() {
            if actives[i].next_due != col {
                i += 1;
                continue;
            }
            let guard = RidgeGuard::snapshot(&actives);
            let extended =
                try_extend(&mut actives[i], &grid, &mut claimed, floor, sr, n_frames, col, &guard);
            if extended {
                i += 1;
            } else {
                let obj = actives.remove(i);
                if obj.points.len() >= MIN_POINTS {
                    finished.push(obj);
                }
            }
        }

        // Seed new objects from unclaimed candidates, loudest first. The
        // settling zones near the edges never seed; backward extension may
        // still reach into them.
        if spectrum.is_settling(col) {
            continue;
        }
        let cands = grid.at(col);
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by(|&a, &b| cands[b].amp.partial_cmp(&cands[a].amp).unwrap());
        for oi in order {
            let idx = grid.offsets[col] + oi;
            let cand = cands[oi];
            if claimed[idx]
                || cand.amp <= floor
                || !(FREQ_MIN..=FREQ_MAX).contains(&cand.freq)
            {
                continue;
            }
            // Suppress against the ridge value rather than the stored point
            // frequency: the latter is a step mean and lags near onsets.
            if actives
                .iter()
                .any(|a| (a.last_ridge_freq - cand.freq).abs() <= MAX_FREQ_STEP * a.last_ridge_freq)
            {
                continue;
            }
            let id = next_id;
            next_id += 1;
            claimed[idx] = true;
            let guard = RidgeGuard::snapshot(&actives);
            let mut obj = Active {
                id,
                points: vec![(col, cand.amp, cand.freq)],
                first_phase: cand.phase,
                last_phase: cand.phase,
                model_phase: cand.phase,
                last_ridge_freq: cand.freq,
                next_due: col + step_samples(cand.freq, sr),
            };
            extend_backward(&mut obj, &grid, &mut claimed, floor, sr, &guard);
            obj.rebuild_model_phase(sr);
            actives.push(obj);
        }
    }

    for obj in actives {
        if obj.points.len() >= MIN_POINTS {
            finished.push(obj);
        }
    }

    let mut objects: Vec<SoundObject> = finished
        .into_iter()
        .map(|a| SoundObject {
            initial_phase: wrap_pi(a.first_phase + PI / 2.0),
            points: a
                .points
                .iter()
                .map(|&(c, amp, f)| ObjectPoint { time: c as f64 / sr, amplitude: amp, frequency: f })
                .collect(),
        })
        .collect();
    objects.sort_by(|a, b| {
        (a.start_time(), a.points[0].frequency)
            .partial_cmp(&(b.start_time(), b.points[0].frequency))
            .unwrap()
    });
    objects
}

fn step_samples(freq: f64, sr: f64) -> usize {
    ((sr * 2.0 / freq).round() as usize).max(1)
}

/// Claim every candidate an accepted step swept past. Points sample the
/// ridge once per two periods; the columns in between still hold candidates
/// on the same ridge, and leaving them unclaimed lets a stray seed (e.g. a
/// brief transient side-ridge) walk backward onto the ridge and assemble a
/// duplicate object.
fn claim_wake(
    grid: &CandidateGrid,
    claimed: &mut [bool],
    c0: usize,
    c1: usize,
    f0: f64,
    f1: f64,
) {
    let span = (c1 - c0) as f64;
    for c in (c0 + 1)..c1 {
        let f_ref = f0 + (f1 - f0) * (c - c0) as f64 / span;
        let cands = grid.at(c);
        for (i, cand) in cands.iter().enumerate() {
            if (cand.freq - f_ref).abs() <= MAX_FREQ_STEP * f_ref {
                claimed[grid.offsets[c] + i] = true;
            }
        }
    }
}

/// Columns to try for the next point: the nominal two-period target first,
/// then outward within [1.5, 2.5] periods.
fn search_columns(base: usize, freq: f64, sr: f64, limit: usize) -> impl Iterator<Item = usize> {
    let ideal = base + step_samples(freq, sr);
    let lo = base + ((sr * 1.5 / freq).ceil() as usize).max(1);
    let hi = base + (sr * 2.5 / freq).floor() as usize;
    let max_d = (ideal - lo).max(hi - ideal);
    (0..=max_d)
        .flat_map(move |d| {
            [ideal.checked_sub(d), if d > 0 { ideal.checked_add(d) } else { None }]
        })
        .flatten()
        .filter(move |&t| t >= lo && t <= hi && t < limit)
}

#[allow(clippy::too_many_arguments)]
fn try_extend(
    obj: &mut Active,
    grid: &CandidateGrid,
    claimed: &mut [bool],
    floor: f64,
    sr: f64,
    n_frames: usize,
    col: usize,
    guard: &RidgeGuard,
) -> bool {
    let base = obj.last_col();
    let freq = obj.freq();
    for t in search_columns(base, freq, sr, n_frames) {
        let cands = grid.at(t);
        let mut order: Vec<usize> = (0..cands.len())
            .filter(|&i| {
                let c = &cands[i];
                !claimed[grid.offsets[t] + i]
                    && c.amp > floor
                    && (c.freq - freq).abs() <= MAX_FREQ_STEP * freq
                    && !guard.blocks(obj.id, t, c.freq)
            })
            .collect();
        order.sort_by(|&a, &b| {
            (cands[a].freq - freq)
                .abs()
                .partial_cmp(&(cands[b].freq - freq).abs())
                .unwrap()
        });
        for i in order {
            let cand = cands[i];
            let dt = (t - base) as f64 / sr;
            // Step frequency from the measured phase advance, unwrapped to
            // the nearest turn of the ridge-frequency trapezoid.
            let advance = PI * (obj.last_ridge_freq + cand.freq) * dt;
            let f_point =
                (advance + wrap_pi(cand.phase - obj.last_phase - advance)) / (TAU * dt);
            if (f_point - freq).abs() > MAX_FREQ_STEP * freq {
                continue;
            }
            // Accept gate: measured phase must stay with the phase the
            // stored track integrates to, so drift against the model — not
            // just per-step noise — closes the object.
            let err_model =
                wrap_pi(cand.phase - obj.model_phase - PI * (freq + cand.freq) * dt);
            if err_model.abs() > TAU_PHASE {
                continue;
            }
            claimed[grid.offsets[t] + i] = true;
            claim_wake(grid, claimed, base, t, freq, cand.freq);
            obj.model_phase += PI * (freq + f_point) * dt;
            obj.points.push((t, cand.amp, f_point));
            obj.last_phase = cand.phase;
            obj.last_ridge_freq = cand.freq;
            obj.next_due = (t + step_samples(f_point, sr)).max(col + 1);
            return true;
        }
    }
    false
}

/// Walk a fresh seed backward toward the recording start, claiming earlier
/// candidates under the same gates. The step frequency lands on the later
/// point of each step, keeping "frequency = mean over the arriving step".
fn extend_backward(
    obj: &mut Active,
    grid: &CandidateGrid,
    claimed: &mut [bool],
    floor: f64,
    sr: f64,
    guard: &RidgeGuard,
) {
    loop {
        let (first_col, _, first_freq) = obj.points[0];
        let first_phase = obj.first_phase;
        let ideal_back = step_samples(first_freq, sr);
        if first_col < (sr * 1.5 / first_freq).ceil() as usize {
            return; // too close to the start for another step
        }
        let lo = first_col.saturating_sub((sr * 2.5 / first_freq).floor() as usize);
        let hi = first_col - ((sr * 1.5 / first_freq).ceil() as usize).max(1);
        let ideal = first_col.saturating_sub(ideal_back).clamp(lo, hi);
        let max_d = (ideal - lo).max(hi - ideal);
        let mut accepted = false;
        'cols: for d in 0..=max_d {
            for t in [ideal.checked_sub(d), if d > 0 { ideal.checked_add(d) } else { None }]
                .into_iter()
                .flatten()
            {
                if t < lo || t > hi {
                    continue;
                }
                let cands = grid.at(t);
                let mut order: Vec<usize> = (0..cands.len())
                    .filter(|&i| {
                        let c = &cands[i];
                        !claimed[grid.offsets[t] + i]
                            && c.amp > floor
                            && (c.freq - first_freq).abs() <= MAX_FREQ_STEP * first_freq
                            && !guard.blocks(obj.id, t, c.freq)
                    })
                    .collect();
                order.sort_by(|&a, &b| {
                    (cands[a].freq - first_freq)
                        .abs()
                        .partial_cmp(&(cands[b].freq - first_freq).abs())
                        .unwrap()
                });
                for i in order {
                    let cand = cands[i];
                    let dt = (first_col - t) as f64 / sr;
                    let predicted = PI * (cand.freq + first_freq) * dt;
                    let err = wrap_pi(first_phase - cand.phase - predicted);
                    if err.abs() > TAU_PHASE {
                        continue;
                    }
                    let f_step = (predicted + err) / (TAU * dt);
                    if (f_step - first_freq).abs() > MAX_FREQ_STEP * first_freq {
                        continue;
                    }
                    claimed[grid.offsets[t] + i] = true;
                    claim_wake(grid, claimed, t, first_col, cand.freq, first_freq);
                    // The incoming step's frequency belongs to the later
                    // point; the new earliest point keeps its ridge value.
                    obj.points[0].2 = f_step;
                    obj.points.insert(0, (t, cand.amp, cand.freq));
                    obj.first_phase = cand.phase;
                    accepted = true;
                    break 'cols;
                }
            }
        }
        if !accepted {
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// Reconstruction

/// Render objects additively: piecewise-linear amplitude and frequency,
/// phase integrated from `initial_phase`, flat extrapolation up to one step
/// (2.5 periods) past each end — through to the recording edge when the
/// object already ends within a step of it. Output clamped to [-1, 1].
pub fn reconstruct(objects: &[SoundObject], sample_rate: u32, duration: f64) -> Vec<f64> {
    let sr = sample_rate as f64;
    let n = (duration * sr).round() as usize;
    let mut out = vec![0.0f64; n];
    for obj in objects {
        if obj.points.is_empty() {
            continue;
        }
        render_object(obj, sr, &mut out);
    }
    for s in &mut out {
        *s = s.clamp(-1.0, 1.0);
    }
    out
}

fn render_object(obj: &SoundObject, sr: f64, out: &mut [f64]) {
    let first = obj.points.first().unwrap();
    let last = obj.points.last().unwrap();
    let lead = 2.5 / first.frequency;
    let tail = 2.5 / last.frequency;
    let t_start = if first.time - lead <= 1.5 / sr { 0.0 } else { first.time - lead };
    let end_limit = out.len() as f64 / sr;
    let t_end = if last.time + tail >= end_limit - 1.5 / sr { end_limit } else { last.time + tail };

    // Leading flat extrapolation.
    render_segment(
        out,
        sr,
        t_start,
        first.time,
        (first.amplitude, first.amplitude),
        (first.frequency, first.frequency),
        obj.initial_phase - TAU * first.frequency * (first.time - t_start),
    );
    // Interior segments; phase accumulates exactly (trapezoid on linear f).
    let mut phase = obj.initial_phase;
    for w in obj.points.windows(2) {
        render_segment(
            out,
            sr,
            w[0].time,
            w[1].time,
            (w[0].amplitude, w[1].amplitude),
            (w[0].frequency, w[1].frequency),
            phase,
        );
        phase += PI * (w[0].frequency + w[1].frequency) * (w[1].time - w[0].time);
    }
    // Trailing flat extrapolation.
    render_segment(
        out,
        sr,
        last.time,
        t_end,
        (last.amplitude, last.amplitude),
        (last.frequency, last.frequency),
        phase,
    );
}

#[allow(clippy::too_many_arguments)]
fn render_segment(
    out: &mut [f64],
    sr: f64,
    t0: f64,
    t1: f64,
    (a0, a1): (f64, f64),
    (f0, f1): (f64, f64),
    phase0: f64,
) {
    if t1 <= t0 {
        return;
    }
    let dt = t1 - t0;
    let i_lo = (t0 * sr).ceil() as usize;
    let i_hi = ((t1 * sr).ceil() as usize).min(out.len());
    for (i, o) in out.iter_mut().enumerate().take(i_hi).skip(i_lo) {
        let u = i as f64 / sr - t0;
        let w = u / dt;
        let amp = a0 + (a1 - a0) * w;
        let phase = phase0 + TAU * (f0 * u + 0.5 * (f1 - f0) * u * u / dt);
        *o += amp * phase.sin();
    }
}

/// 1 - residual/original energy, floored at 0.
pub fn reproduction_score(original: &[f64], resynthesis: &[f64]) -> Result<f64, TrackerError> {
    if original.len() != resynthesis.len() {
        return Err(TrackerError::LengthMismatch {
            original: original.len(),
            resynthesis: resynthesis.len(),
        });
    }
    let energy: f64 = original.iter().map(|s| s * s).sum();
    let residual: f64 = original
        .iter()
        .zip(resynthesis)
        .map(|(o, r)| (o - r) * (o - r))
        .sum();
    if energy == 0.0 {
        return Ok(if residual == 0.0 { 1.0 } else { 0.0 });
    }
    Ok((1.0 - residual / energy).max(0.0))
}

/// JSON document for a tracked decomposition.
pub fn objects_to_json(objects: &[SoundObject]) -> serde_json::Value {
    serde_json::json!({
        "schema_version": crate::SCHEMA_VERSION,
        "objects": objects,
    })
}
