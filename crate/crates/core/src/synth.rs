use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{normalize_peak, Recording, CANONICAL_RATES};

pub const F0_MIN: f64 = 55.0;
pub const F0_MAX: f64 = 400.0;
pub const MAX_HARMONICS: usize = 23;

/// Correlation half-width (in glottal cycles) of the jitter/shimmer tracks.
/// Per-cycle white perturbation is unrecoverable through a narrowband
/// analysis filter whose impulse response spans ~12 cycles; real phonatory
/// perturbation spectra are likewise dominated by slow components. Smoothing
/// white noise with this kernel puts the perturbation energy where an
/// analyzer can see it while per-cycle total variation stays well defined.
const PERTURB_SMOOTH_CYCLES: f64 = 12.0;

/// Mean-reversion time (cycles) of the per-harmonic phase dispersion
/// process. Long enough that the induced frequency modulation stays small
/// next to deliberate jitter, short enough that a 6 s vowel still explores
/// the stationary distribution.
const PHASE_THETA_CYCLES: f64 = 400.0;

/// Relative f0 step at a voice break. A phase flip alone is not a usable
/// break marker: convolved with an analysis filter whose envelope spans ~12
/// cycles it becomes a smooth amplitude notch plus a <2% instantaneous
/// frequency excursion, which a continuity tracker rides through at any
/// voice fundamental. A sustained 10% register step sits outside any
/// plausible per-step frequency gate, so every break severs every harmonic.
const BREAK_F0_STEP: f64 = 0.10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    SpecInvalid(String),
}

/// Deterministic sustained-vowel specification. All perturbation magnitudes
/// are in the same units the analyzer reports: percent total variation per
/// cycle for jitter/shimmer, radians of stationary dispersion for the phase
/// walk, percent per second for slopes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub f0: f64,
    pub n_harmonics: usize,
    /// Relative harmonic amplitudes, one per harmonic.
    pub harmonic_amps: Vec<f64>,
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    pub f0_slope_pct_per_s: f64,
    pub amp_slope_pct_per_s: f64,
    /// Stationary std (rad) of each harmonic's independent phase dispersion.
    pub phase_walk_sigma: f64,
    /// Fixed phase offset per harmonic (rad); empty means all zero.
    pub phase_offsets: Vec<f64>,
    /// Voice-break instants (s). At the nearest cycle boundary after each,
    /// f0 steps by 10% (alternating direction, so pairs of breaks restore
    /// the original register) and every harmonic's phase flips by +pi.
    pub break_times: Vec<f64>,
    /// Additive white noise level; `None` means noise-free.
    pub noise_snr_db: Option<f64>,
    pub duration: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            f0: 150.0,
            n_harmonics: 5,
            harmonic_amps: vec![1.0, 0.7, 0.5, 0.35, 0.25],
            jitter_pct: 0.0,
            shimmer_pct: 0.0,
            f0_slope_pct_per_s: 0.0,
            amp_slope_pct_per_s: 0.0,
            phase_walk_sigma: 0.0,
            phase_offsets: Vec::new(),
            break_times: Vec::new(),
            noise_snr_db: None,
            duration: 3.0,
            sample_rate: 22_050,
            seed: 0,
        }
    }
}

/// Everything the generator actually realized, so tests measure against
/// recorded truth instead of assuming process distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub spec: SynthSpec,
    /// Start time (s) of every glottal cycle.
    pub cycle_times: Vec<f64>,
    /// Fundamental frequency (Hz) held over each cycle.
    pub cycle_freqs: Vec<f64>,
    /// Common amplitude multiplier anchored at each cycle start.
    pub amp_multipliers: Vec<f64>,
    /// Per-harmonic phase dispersion track (rad) anchored at cycle starts.
    pub phase_walks: Vec<Vec<f64>>,
    /// Cycle index at which each requested break lands.
    pub break_cycles: Vec<usize>,
    /// 100 * mean|df| / mean(f) over consecutive cycles, with the
    /// deterministic register steps at breaks divided out.
    pub realized_jitter_tv_pct: f64,
    /// 100 * mean|dm| / mean(m) over consecutive cycles.
    pub realized_shimmer_tv_pct: f64,
    /// Sample std (rad) of each harmonic's phase track.
    pub realized_phase_std: Vec<f64>,
}

pub fn generate(spec: &SynthSpec) -> Result<(Recording, GroundTruth), SynthError> {
    validate(spec)?;
    let sr = spec.sample_rate as f64;
    let n_samples = (spec.duration * sr).round() as usize;

    // The deviation track must be centered and scaled over exactly the
    // cycles the grid realizes, or the recorded TV misses its target; the
    // cycle count in turn depends (weakly) on the track, so iterate to a
    // fixpoint. Centered deviations barely move total duration, so this
    // settles in a step or two.
    let mut n_est = build_cycle_grid(spec, &[]).0.len();
    let mut jitter_dev = perturbation_track(spec.seed, 1, n_est, spec.jitter_pct);
    let (mut cycle_times, mut cycle_freqs) = build_cycle_grid(spec, &jitter_dev);
    for _ in 0..15 {
        if cycle_times.len() == n_est {
            break;
        }
        n_est = cycle_times.len();
        jitter_dev = perturbation_track(spec.seed, 1, n_est, spec.jitter_pct);
        (cycle_times, cycle_freqs) = build_cycle_grid(spec, &jitter_dev);
    }
    let n_cycles = cycle_times.len();
    let shimmer_dev = perturbation_track(spec.seed, 2, n_cycles, spec.shimmer_pct);

    let amp_multipliers: Vec<f64> = (0..n_cycles)
        .map(|n| (1.0 + shimmer_dev[n] / 100.0) * (1.0 + spec.amp_slope_pct_per_s * cycle_times[n] / 100.0))
        .collect();

    let phase_walks: Vec<Vec<f64>> = (0..spec.n_harmonics)
        .map(|h| phase_track(spec.seed, h, n_cycles, spec.phase_walk_sigma))
        .collect();

    let break_cycles: Vec<usize> = spec
        .break_times
        .iter()
        .map(|&bt| cycle_times.partition_point(|&ct| ct < bt).min(n_cycles - 1))
        .collect();

    let offsets: Vec<f64> = if spec.phase_offsets.is_empty() {
        vec![0.0; spec.n_harmonics]
    } else {
        spec.phase_offsets.clone()
    };

    // Render. Amplitude and phase-walk anchors interpolate linearly across
    // each cycle; frequency is constant within it.
    let mut samples = vec![0.0f64; n_samples];
    let mut cyc = 0usize;
    for (i, s) in samples.iter_mut().enumerate() {
        let ti = i as f64 / sr;
        while cyc + 1 < n_cycles && cycle_times[cyc + 1] <= ti {
            cyc += 1;
        }
        let frac_cycle = (ti - cycle_times[cyc]) * cycle_freqs[cyc];
        let u = frac_cycle.min(1.0); // interpolation weight within the cycle
        let phase1 = TAU * (cyc as f64 + frac_cycle);
        let amp_mul = lerp_anchor(&amp_multipliers, cyc, u);
        let n_breaks_passed = break_cycles.iter().filter(|&&bc| bc <= cyc).count();
        let break_shift = PI * n_breaks_passed as f64;
        let mut acc = 0.0;
        for h in 0..spec.n_harmonics {
            let walk = lerp_anchor(&phase_walks[h], cyc, u);
            let phase = (h + 1) as f64 * phase1 + offsets[h] + walk + break_shift;
            acc += spec.harmonic_amps[h] * amp_mul * phase.sin();
        }
        *s = acc;
    }

    if let Some(snr_db) = spec.noise_snr_db {
        let sig_power = samples.iter().map(|s| s * s).sum::<f64>() / n_samples as f64;
        let noise_std = (sig_power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = stream_rng(spec.seed, 100);
        for (g, s) in gaussians(&mut rng, n_samples).into_iter().zip(&mut samples) {
            *s += noise_std * g;
        }
    }

    let mut rec = Recording {
        samples,
        sample_rate: spec.sample_rate,
        source_id: format!("synth-{:016x}", spec.seed),
    };
    normalize_peak(&mut rec, 0.9);

    let unbroken_freqs: Vec<f64> = cycle_times
        .iter()
        .zip(&cycle_freqs)
        .map(|(&t, &f)| f / break_factor(&spec.break_times, t))
        .collect();
    let gt = GroundTruth {
        schema_version: crate::SCHEMA_VERSION,
        spec: spec.clone(),
        realized_jitter_tv_pct: tv_pct(&unbroken_freqs),
        realized_shimmer_tv_pct: tv_pct(&amp_multipliers),
        realized_phase_std: phase_walks.iter().map(|w| crate::util::std_pop(w)).collect(),
        cycle_times,
        cycle_freqs,
        amp_multipliers,
        phase_walks,
        break_cycles,
    };
    Ok((rec, gt))
}

/// Cycle grid with f0 held constant within each cycle, so the fundamental's
/// phase at cycle start n is exactly 2*pi*n.
fn build_cycle_grid(spec: &SynthSpec, jitter_dev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut times = Vec::new();
    let mut freqs = Vec::new();
    let hard_cap = (spec.duration * F0_MAX * 1.5 * (1.0 + BREAK_F0_STEP)) as usize + 16;
    let mut t = 0.0;
    while t < spec.duration && times.len() < hard_cap {
        let dev = jitter_dev.get(times.len()).or(jitter_dev.last()).copied().unwrap_or(0.0);
        let f = spec.f0
            * (1.0 + spec.f0_slope_pct_per_s * t / 100.0)
            * (1.0 + dev / 100.0)
            * break_factor(&spec.break_times, t);
        times.push(t);
        freqs.push(f);
        t += 1.0 / f;
    }
    (times, freqs)
}

/// Cumulative register multiplier at time `t`: each passed break steps f0 up
/// or down by `BREAK_F0_STEP`, alternating so pairs cancel.
fn break_factor(break_times: &[f64], t: f64) -> f64 {
    let mut fac = 1.0;
    for (k, &bt) in break_times.iter().enumerate() {
        if bt <= t {
            fac *= if k % 2 == 0 { 1.0 + BREAK_F0_STEP } else { 1.0 / (1.0 + BREAK_F0_STEP) };
        }
    }
    fac
}

fn validate(spec: &SynthSpec) -> Result<(), SynthError> {
    let fail = |msg: String| Err(SynthError::SpecInvalid(msg));
    if !(F0_MIN..=F0_MAX).contains(&spec.f0) {
        return fail(format!("f0 {} outside [{F0_MIN}, {F0_MAX}] Hz", spec.f0));
    }
    if spec.n_harmonics == 0 || spec.n_harmonics > MAX_HARMONICS {
        return fail(format!("n_harmonics {} outside 1..={MAX_HARMONICS}", spec.n_harmonics));
    }
    if !CANONICAL_RATES.contains(&spec.sample_rate) {
        return fail(format!("sample rate {} not canonical", spec.sample_rate));
    }
    if spec.n_harmonics as f64 * spec.f0 >= spec.sample_rate as f64 / 2.0 {
        return fail("highest harmonic at or above Nyquist".into());
    }
    if spec.harmonic_amps.len() != spec.n_harmonics {
        return fail(format!(
            "harmonic_amps has {} entries for {} harmonics",
            spec.harmonic_amps.len(),
            spec.n_harmonics
        ));
    }
    if spec.harmonic_amps.iter().any(|a| !a.is_finite() || *a < 0.0)
        || spec.harmonic_amps.iter().all(|&a| a == 0.0)
    {
        return fail("harmonic_amps must be nonnegative with at least one positive".into());
    }
    if !spec.phase_offsets.is_empty() && spec.phase_offsets.len() != spec.n_harmonics {
        return fail("phase_offsets must be empty or one per harmonic".into());
    }
    if !(spec.jitter_pct >= 0.0 && spec.jitter_pct < 20.0) {
        return fail(format!("jitter_pct {} outside [0, 20)", spec.jitter_pct));
    }
    if !(spec.shimmer_pct >= 0.0 && spec.shimmer_pct < 50.0) {
        return fail(format!("shimmer_pct {} outside [0, 50)", spec.shimmer_pct));
    }
    if !(spec.phase_walk_sigma >= 0.0 && spec.phase_walk_sigma < PI) {
        return fail("phase_walk_sigma outside [0, pi)".into());
    }
    if !(spec.duration >= 1.0 && spec.duration <= 600.0) {
        return fail(format!("duration {} outside [1, 600] s", spec.duration));
    }
    if spec.break_times.iter().any(|&b| b <= 0.0 || b >= spec.duration) {
        return fail("break_times must lie strictly inside (0, duration)".into());
    }
    if let Some(snr) = spec.noise_snr_db {
        if !snr.is_finite() {
            return fail("noise_snr_db must be finite (use null for noise-free)".into());
        }
    }
    if spec.f0_slope_pct_per_s.abs() * spec.duration > 50.0 || spec.amp_slope_pct_per_s.abs() * spec.duration > 80.0 {
        return fail("slope drives the signal out of its valid range".into());
    }
    Ok(())
}

/// Centered per-cycle deviation track (percent) whose cycle-to-cycle total
/// variation is exactly `target_tv_pct` of the carrier.
fn perturbation_track(seed: u64, stream: u64, n: usize, target_tv_pct: f64) -> Vec<f64> {
    if target_tv_pct == 0.0 || n < 2 {
        return vec![0.0; n];
    }
    let mut rng = stream_rng(seed, stream);
    let white = gaussians(&mut rng, n);
    let mut x = gaussian_smooth(&white, PERTURB_SMOOTH_CYCLES);
    let m = crate::util::mean(&x);
    for v in &mut x {
        *v -= m;
    }
    let tv = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64;
    // Centered deviations make mean(f) exactly the carrier, so this scale
    // lands the realized TV on the target to rounding error.
    let scale = if tv > 0.0 { target_tv_pct / tv } else { 0.0 };
    for v in &mut x {
        *v *= scale;
    }
    x
}

/// Mean-reverting per-harmonic phase dispersion, rescaled so the realized
/// sample std is exactly `sigma` radians.
fn phase_track(seed: u64, harmonic: usize, n: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 || n < 2 {
        return vec![0.0; n];
    }
    let mut rng = stream_rng(seed, 10 + harmonic as u64);
    let rho = 1.0 - 1.0 / PHASE_THETA_CYCLES;
    let innov_sd = (1.0 - rho * rho).sqrt();
    let white = gaussians(&mut rng, n + 1);
    let mut w = Vec::with_capacity(n);
    let mut state = white[0]; // start at stationary scale
    for g in &white[1..] {
        w.push(state);
        state = rho * state + innov_sd * g;
    }
    let m = crate::util::mean(&w);
    for v in &mut w {
        *v -= m;
    }
    let sd = crate::util::std_pop(&w);
    let scale = if sd > 0.0 { sigma / sd } else { 0.0 };
    for v in &mut w {
        *v *= scale;
    }
    w
}

fn tv_pct(track: &[f64]) -> f64 {
    if track.len() < 2 {
        return 0.0;
    }
    let tv = track.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (track.len() - 1) as f64;
    100.0 * tv / crate::util::mean(track)
}

fn lerp_anchor(anchors: &[f64], idx: usize, u: f64) -> f64 {
    let next = anchors.get(idx + 1).copied().unwrap_or(anchors[idx]);
    anchors[idx] + (next - anchors[idx]) * u
}

fn gaussian_smooth(x: &[f64], sigma: f64) -> Vec<f64> {
    let half = (4.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-half..=half)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let n = x.len() as i64;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let src = (i + j as i64 - half).clamp(0, n - 1) as usize;
                acc += x[src] * k;
            }
            acc / ksum
        })
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream.into());
    rng
}

/// Box-Muller; two uniforms per draw keeps the stream layout deterministic.
fn gaussians(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
        })
        .collect()
}
