use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::Recording;
use crate::util::phi;

pub const DEFAULT_F_LO: f64 = 64.0;
pub const DEFAULT_F_HI: f64 = 10_000.0;
pub const DEFAULT_FILTERS_PER_OCTAVE: u32 = 48;
/// Full -3 dB width, in units of the filter spacing.
pub const BANDWIDTH_SPACINGS: f64 = 1.5;
/// Band output within this distance of either recording edge is still
/// settling; ridge seeding skips it.
pub const SETTLING_S: f64 = 0.05;

const BAND_CHUNK: usize = 16;
const MAX_CACHED_CHUNKS: usize = 6;
/// Band amplitude below this is meaningless numeric residue.
const AMP_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FilterBankError {
    #[error("invalid frequency range: {0}")]
    InvalidRange(String),
    #[error("recording rate {recording} Hz does not match bank rate {bank} Hz")]
    SampleRateMismatch { recording: u32, bank: u32 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("band amplitude too low for a phase difference at frame {frame}")]
    AmplitudeTooLow { frame: usize },
}

/// Log-spaced bank of Gaussian (in log-frequency) zero-phase filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub centers: Vec<f64>,
    pub n_filters: usize,
    pub filters_per_octave: u32,
    /// Full -3 dB bandwidth of each filter, in octaves.
    pub bandwidth_octaves: f64,
    pub sample_rate: u32,
}

impl FilterBank {
    /// Gaussian std in octaves; -3 dB at half the bandwidth.
    pub fn sigma_octaves(&self) -> f64 {
        self.bandwidth_octaves / (2.0 * (2.0f64.ln()).sqrt())
    }

    /// Equivalent linear-frequency std (Hz) of filter k near its center.
    pub fn sigma_hz(&self, k: usize) -> f64 {
        self.centers[k] * std::f64::consts::LN_2 * self.sigma_octaves()
    }

    /// Temporal std (s) of filter k's envelope.
    pub fn sigma_t(&self, k: usize) -> f64 {
        1.0 / (std::f64::consts::TAU * self.sigma_hz(k))
    }

    /// Half the spacing to the next filter, in Hz: the ridge acceptance
    /// radius around filter k.
    pub fn half_spacing_hz(&self, k: usize) -> f64 {
        0.5 * self.centers[k] * (2f64.powf(1.0 / self.filters_per_octave as f64) - 1.0)
    }

    /// Index of the filter whose log-center is nearest `freq`.
    pub fn nearest_filter(&self, freq: f64) -> usize {
        let fpo = self.filters_per_octave as f64;
        let k = (fpo * (freq / self.centers[0]).log2()).round();
        (k.max(0.0) as usize).min(self.n_filters - 1)
    }
}

pub fn design_bank(
    sample_rate: u32,
    f_lo: f64,
    f_hi: f64,
    filters_per_octave: u32,
) -> Result<FilterBank, FilterBankError> {
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < sample_rate as f64 / 2.0) {
        return Err(FilterBankError::InvalidRange(format!(
            "need 0 < f_lo < f_hi < nyquist, got [{f_lo}, {f_hi}] at {sample_rate} Hz"
        )));
    }
    if filters_per_octave == 0 {
        return Err(FilterBankError::InvalidRange("filters_per_octave = 0".into()));
    }
    let fpo = filters_per_octave as f64;
    let n_filters = (fpo * (f_hi / f_lo).log2()).floor() as usize + 1;
    let ratio = 2f64.powf(1.0 / fpo);
    let centers: Vec<f64> = (0..n_filters).map(|k| f_lo * ratio.powi(k as i32)).collect();
    Ok(FilterBank {
        centers,
        n_filters,
        filters_per_octave,
        bandwidth_octaves: BANDWIDTH_SPACINGS / fpo,
        sample_rate,
    })
}

pub fn default_bank(sample_rate: u32) -> FilterBank {
    design_bank(sample_rate, DEFAULT_F_LO, DEFAULT_F_HI, DEFAULT_FILTERS_PER_OCTAVE)
        .expect("default bank parameters are valid")
}

/// One time-slice of the bank output: the complex response of every filter
/// at a single sample instant.
#[derive(Debug, Clone)]
pub struct SpectrumFrame {
    pub time: f64,
    pub response: Vec<Complex64>,
}

impl SpectrumFrame {
    pub fn amplitude(&self, k: usize) -> f64 {
        self.response[k].norm()
    }
    /// Phase in (-pi, pi].
    pub fn phase(&self, k: usize) -> f64 {
        crate::util::wrap_pi(self.response[k].arg())
    }
}

/// Bank response of one recording: one frame per input sample, evaluated
/// lazily in band chunks so the full frame-by-filter matrix never
/// materializes.
pub struct Spectrum {
    bank: FilterBank,
    n_frames: usize,
    pad: usize,
    n_fft: usize,
    freq_domain: Vec<Complex64>,
    ifft: Arc<dyn Fft<f64>>,
    cache: Mutex<ChunkCache>,
}

struct ChunkCache {
    chunks: HashMap<usize, Arc<Vec<Vec<Complex64>>>>,
    order: Vec<usize>,
}

pub fn analyze(bank: &FilterBank, rec: &Recording) -> Result<Spectrum, FilterBankError> {
    if rec.sample_rate != bank.sample_rate {
        return Err(FilterBankError::SampleRateMismatch {
            recording: rec.sample_rate,
            bank: bank.sample_rate,
        });
    }
    let sr = bank.sample_rate as f64;
    // Pad so the widest (lowest) filter's response to content at the edges
    // decays inside the padding rather than wrapping around.
    let pad = (5.0 * bank.sigma_t(0) * sr).ceil() as usize;
    let n = rec.samples.len();
    let n_fft = (n + 2 * pad).next_power_of_two();

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let ifft = planner.plan_fft_inverse(n_fft);

    let mut buf = vec![Complex64::default(); n_fft];
    for (b, &s) in buf[pad..pad + n].iter_mut().zip(&rec.samples) {
        *b = Complex64::new(s, 0.0);
    }
    fwd.process(&mut buf);

    Ok(Spectrum {
        bank: bank.clone(),
        n_frames: n,
        pad,
        n_fft,
        freq_domain: buf,
        ifft,
        cache: Mutex::new(ChunkCache { chunks: HashMap::new(), order: Vec::new() }),
    })
}

impl Spectrum {
    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn duration(&self) -> f64 {
        self.n_frames as f64 / self.bank.sample_rate as f64
    }

    /// True within [`SETTLING_S`] of either edge.
    pub fn is_settling(&self, t: usize) -> bool {
        let guard = (SETTLING_S * self.bank.sample_rate as f64).round() as usize;
        t < guard || t + guard >= self.n_frames
    }

    /// Analytic response of filter `k` at every frame.
    pub fn band(&self, k: usize) -> Result<Arc<Vec<Vec<Complex64>>>, FilterBankError> {
        if k >= self.bank.n_filters {
            return Err(FilterBankError::IndexOutOfRange(format!(
                "filter {k} of {}",
                self.bank.n_filters
            )));
        }
        let chunk_idx = k / BAND_CHUNK;
        {
            let cache = self.cache.lock().unwrap();
            if let Some(chunk) = cache.chunks.get(&chunk_idx) {
                return Ok(chunk.clone());
            }
        }
        let lo = chunk_idx * BAND_CHUNK;
        let hi = (lo + BAND_CHUNK).min(self.bank.n_filters);
        let chunk = Arc::new(self.compute_bands(lo..hi));
        let mut cache = self.cache.lock().unwrap();
        if !cache.chunks.contains_key(&chunk_idx) {
            if cache.order.len() >= MAX_CACHED_CHUNKS {
                let evict = cache.order.remove(0);
                cache.chunks.remove(&evict);
            }
            cache.chunks.insert(chunk_idx, chunk.clone());
            cache.order.push(chunk_idx);
        }
        Ok(chunk.clone())
    }

    pub fn band_sample(&self, k: usize, t: usize) -> Result<Complex64, FilterBankError> {
        if t >= self.n_frames {
            return Err(FilterBankError::IndexOutOfRange(format!(
                "frame {t} of {}",
                self.n_frames
            )));
        }
        let chunk = self.band(k)?;
        Ok(chunk[k % BAND_CHUNK][t])
    }

    /// Materialize the full response at one instant. Costly: evaluates every
    /// band chunk. Meant for inspection and tests, not inner loops.
    pub fn frame(&self, t: usize) -> Result<SpectrumFrame, FilterBankError> {
        let mut response = Vec::with_capacity(self.bank.n_filters);
        for k in 0..self.bank.n_filters {
            response.push(self.band_sample(k, t)?);
        }
        Ok(SpectrumFrame { time: t as f64 / self.bank.sample_rate as f64, response })
    }

    /// Compute a range of analytic band signals directly, bypassing (and not
    /// touching) the cache. Safe to call from parallel workers.
    pub(crate) fn compute_bands(&self, range: std::ops::Range<usize>) -> Vec<Vec<Complex64>> {
        range.map(|k| self.compute_band(k)).collect()
    }

    fn compute_band(&self, k: usize) -> Vec<Complex64> {
        let sr = self.bank.sample_rate as f64;
        let bin_hz = sr / self.n_fft as f64;
        let center = self.bank.centers[k];
        let sigma_oct = self.bank.sigma_octaves();

        // Real, even magnitude weighting on positive frequencies only:
        // zero-phase filtering and analytic-signal construction in one pass.
        let mut buf = vec![Complex64::default(); self.n_fft];
        let half_width_hz = 6.0 * self.bank.sigma_hz(k);
        let j_lo = (((center - half_width_hz).max(bin_hz)) / bin_hz).floor() as usize;
        let j_hi = (((center + half_width_hz) / bin_hz).ceil() as usize).min(self.n_fft / 2 - 1);
        let denom = 2.0 * sigma_oct * sigma_oct;
        for j in j_lo.max(1)..=j_hi {
            let f = j as f64 * bin_hz;
            let d = (f / center).log2();
            let w = (-d * d / denom).exp();
            buf[j] = self.freq_domain[j] * (2.0 * w / self.n_fft as f64);
        }
        self.ifft.process(&mut buf);

        let mut out: Vec<Complex64> = buf[self.pad..self.pad + self.n_frames].to_vec();

        // A stationary component truncated at the recording edges comes
        // through the filter scaled by phi(t/st) + phi((d-t)/st) - 1; divide
        // it back out so edge amplitudes stay faithful. Only the outer 5
        // sigma_t on each side differ measurably from 1.
        let sigma_t = self.bank.sigma_t(k);
        let d_total = self.n_frames as f64 / sr;
        let extent = ((5.0 * sigma_t * sr).ceil() as usize).min(self.n_frames);
        for (t, v) in out.iter_mut().enumerate().take(extent) {
            let ts = t as f64 / sr;
            let g = phi(ts / sigma_t) + phi((d_total - ts) / sigma_t) - 1.0;
            *v /= g.max(0.25);
        }
        for t in (self.n_frames - extent..self.n_frames).rev() {
            if t < extent {
                break; // already corrected above
            }
            let ts = t as f64 / sr;
            let g = phi(ts / sigma_t) + phi((d_total - ts) / sigma_t) - 1.0;
            out[t] /= g.max(0.25);
        }
        out
    }
}

/// Mean phase advance of filter `k` between frames `t-1` and `t`, as Hz.
pub fn instantaneous_frequency(spectrum: &Spectrum, k: usize, t: usize) -> Result<f64, FilterBankError> {
    if t == 0 || t >= spectrum.n_frames {
        return Err(FilterBankError::IndexOutOfRange(format!(
            "frame {t} (need 1..{})",
            spectrum.n_frames
        )));
    }
    let chunk = spectrum.band(k)?;
    let band = &chunk[k % BAND_CHUNK];
    let (prev, cur) = (band[t - 1], band[t]);
    if prev.norm() < AMP_EPS || cur.norm() < AMP_EPS {
        return Err(FilterBankError::AmplitudeTooLow { frame: t });
    }
    let sr = spectrum.bank.sample_rate as f64;
    Ok((cur * prev.conj()).arg() * sr / std::f64::consts::TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sine_rec(freq: f64, seconds: f64, amp: f64) -> Recording {
        let sr = 22_050u32;
        let n = (seconds * sr as f64).round() as usize;
        Recording {
            samples: (0..n).map(|i| amp * (TAU * freq * i as f64 / sr as f64).sin()).collect(),
            sample_rate: sr,
            source_id: "test".into(),
        }
    }

    #[test]
    fn default_bank_geometry() {
        let bank = default_bank(22_050);
        assert_eq!(bank.n_filters, 350);
        assert_eq!(bank.centers[0], 64.0);
        let ratio = 2f64.powf(1.0 / 48.0);
        for k in 1..bank.n_filters {
            assert!((bank.centers[k] / bank.centers[k - 1] - ratio).abs() < 1e-12);
        }
        assert!(*bank.centers.last().unwrap() <= 10_000.0);
        assert!((bank.centers[349] - 9883.7).abs() < 1.0);
    }

    #[test]
    fn octave_bank_has_49_filters() {
        let bank = design_bank(22_050, 64.0, 128.0, 48).unwrap();
        assert_eq!(bank.n_filters, 49);
        assert!((bank.centers[48] - 128.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(matches!(design_bank(22_050, 0.0, 100.0, 48), Err(FilterBankError::InvalidRange(_))));
        assert!(matches!(design_bank(22_050, 100.0, 90.0, 48), Err(FilterBankError::InvalidRange(_))));
        assert!(matches!(design_bank(22_050, 64.0, 11_025.0, 48), Err(FilterBankError::InvalidRange(_))));
    }

    #[test]
    fn analyze_rejects_rate_mismatch() {
        let bank = default_bank(44_100);
        let rec = sine_rec(440.0, 1.0, 0.5);
        assert!(matches!(
            analyze(&bank, &rec),
            Err(FilterBankError::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn sine_peaks_at_nearest_filter_with_true_amplitude() {
        let bank = default_bank(22_050);
        let k_expect = bank.nearest_filter(500.0);
        let rec = sine_rec(500.0, 1.5, 0.4);
        let spec = analyze(&bank, &rec).unwrap();

        // Time-averaged amplitude over the settled interior, per filter.
        let lo = 2_000usize;
        let hi = rec.samples.len() - 2_000;
        let mut best = (0usize, 0.0f64);
        let mut at_center = 0.0;
        for k in 0..bank.n_filters {
            let chunk = spec.band(k).unwrap();
            let band = &chunk[k % BAND_CHUNK];
            let avg = band[lo..hi].iter().map(|c| c.norm()).sum::<f64>() / (hi - lo) as f64;
            if avg > best.1 {
                best = (k, avg);
            }
            if k == k_expect {
                at_center = avg;
            }
        }
        assert_eq!(best.0, k_expect);
        // 500 Hz sits within half a spacing of the center, so the response
        // retains most of the sine's amplitude.
        assert!(at_center > 0.9 * 0.4 && at_center < 1.02 * 0.4, "amp {at_center}");
    }

    #[test]
    fn exact_center_sine_comes_through_at_unit_gain() {
        let bank = default_bank(22_050);
        let k = 133;
        let rec = sine_rec(bank.centers[k], 1.5, 0.5);
        let spec = analyze(&bank, &rec).unwrap();
        let chunk = spec.band(k).unwrap();
        let band = &chunk[k % BAND_CHUNK];
        let lo = 2_000usize;
        let hi = rec.samples.len() - 2_000;
        let avg = band[lo..hi].iter().map(|c| c.norm()).sum::<f64>() / (hi - lo) as f64;
        assert!((avg - 0.5).abs() < 0.005, "avg {avg}");
    }

    #[test]
    fn instantaneous_frequency_tracks_center_sine() {
        let bank = default_bank(22_050);
        let rec = sine_rec(440.0, 1.0, 0.5);
        let spec = analyze(&bank, &rec).unwrap();
        let k = bank.nearest_filter(440.0);
        // Settled everywhere past 50 ms at this center frequency.
        for &t in &[1_200usize, 5_000, 11_025, 20_000] {
            let f = instantaneous_frequency(&spec, k, t).unwrap();
            assert!((f - 440.0).abs() < 0.1 * 440.0 / 100.0, "t={t} f={f}");
        }
        // Also within one semitone's worth of neighboring filters.
        for dk in [-4i64, 4] {
            let kk = (k as i64 + dk) as usize;
            let f = instantaneous_frequency(&spec, kk, 11_025).unwrap();
            assert!((f - 440.0).abs() < 1.0, "k={kk} f={f}");
        }
    }

    #[test]
    fn chirp_midpoint_frequency() {
        let sr = 22_050u32;
        let seconds = 2.0;
        let n = (seconds * sr as f64) as usize;
        // Linear chirp 400 -> 500 Hz: phase = tau*(400 t + 25 t^2).
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr as f64;
                (TAU * (400.0 * t + 25.0 * t * t)).sin() * 0.5
            })
            .collect();
        let rec = Recording { samples, sample_rate: sr, source_id: "chirp".into() };
        let bank = default_bank(sr);
        let spec = analyze(&bank, &rec).unwrap();
        let k = bank.nearest_filter(450.0);
        let f = instantaneous_frequency(&spec, k, n / 2).unwrap();
        assert!((f - 450.0).abs() < 2.0, "midpoint f {f}");
    }

    #[test]
    fn zero_input_zero_output_and_low_amp_error() {
        let rec = Recording {
            samples: vec![0.0; 22_050],
            sample_rate: 22_050,
            source_id: "zero".into(),
        };
        let bank = default_bank(22_050);
        let spec = analyze(&bank, &rec).unwrap();
        for k in [0usize, 100, 349] {
            let chunk = spec.band(k).unwrap();
            assert!(chunk[k % BAND_CHUNK].iter().all(|c| c.norm() < 1e-12));
        }
        assert!(matches!(
            instantaneous_frequency(&spec, 100, 500),
            Err(FilterBankError::AmplitudeTooLow { .. })
        ));
    }

    #[test]
    fn index_errors() {
        let bank = default_bank(22_050);
        let rec = sine_rec(440.0, 1.0, 0.5);
        let spec = analyze(&bank, &rec).unwrap();
        assert!(matches!(
            instantaneous_frequency(&spec, 400, 100),
            Err(FilterBankError::IndexOutOfRange(_))
        ));
        assert!(matches!(
            instantaneous_frequency(&spec, 10, 0),
            Err(FilterBankError::IndexOutOfRange(_))
        ));
        assert!(matches!(
            instantaneous_frequency(&spec, 10, 1_000_000),
            Err(FilterBankError::IndexOutOfRange(_))
        ));
        assert!(spec.frame(100).is_ok());
        assert_eq!(spec.n_frames(), rec.samples.len());
    }

    #[test]
    fn zero_phase_symmetry() {
        // Even input about the midpoint -> every band's amplitude envelope
        // is even about the midpoint too.
        let sr = 22_050u32;
        let n = 22_051usize; // odd, exact center sample
        let center = (n - 1) as f64 / 2.0;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 - center) / sr as f64;
                (TAU * 300.0 * t).cos() * (-t * t / (2.0 * 0.05 * 0.05)).exp() * 0.5
            })
            .collect();
        let rec = Recording { samples, sample_rate: sr, source_id: "even".into() };
        let bank = default_bank(sr);
        let spec = analyze(&bank, &rec).unwrap();
        for k in [105usize, 107, 109] {
            let chunk = spec.band(k).unwrap();
            let band = &chunk[k % BAND_CHUNK];
            let mut max_amp = 0.0f64;
            for c in band.iter() {
                max_amp = max_amp.max(c.norm());
            }
            for i in 0..n / 2 {
                let a = band[i].norm();
                let b = band[n - 1 - i].norm();
                assert!(
                    (a - b).abs() <= 1e-6 * max_amp,
                    "k={k} i={i}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn broadband_energy_ratio_is_input_independent() {
        // The bank passes a stable constant fraction of broadband energy:
        // the ratio (sum of band energies)/(input energy) should match
        // across unrelated noise inputs.
        use rand::{Rng, SeedableRng};
        let sr = 22_050u32;
        let mut ratios = Vec::new();
        for seed in [1u64, 2] {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..sr as usize).map(|_| rng.random_range(-0.5..0.5)).collect();
            let energy_in: f64 = samples.iter().map(|s| s * s).sum();
            let rec = Recording { samples, sample_rate: sr, source_id: "noise".into() };
            let bank = default_bank(sr);
            let spec = analyze(&bank, &rec).unwrap();
            let mut energy_bands = 0.0;
            for k in 0..bank.n_filters {
                let chunk = spec.band(k).unwrap();
                // Interior only: edge correction intentionally reshapes the
                // outer 5 sigma_t.
                let band = &chunk[k % BAND_CHUNK];
                energy_bands += band[4_410..sr as usize - 4_410]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>();
            }
            let energy_in_interior: f64 = rec.samples[4_410..sr as usize - 4_410]
                .iter()
                .map(|s| s * s)
                .sum::<f64>()
                * energy_in
                / energy_in; // interior energy
            ratios.push(energy_bands / energy_in_interior);
        }
        let rel = (ratios[0] - ratios[1]).abs() / ratios[0];
        assert!(rel < 0.01, "ratios {ratios:?}");
    }

    #[test]
    fn settling_flag_covers_edges_only() {
        let bank = default_bank(22_050);
        let rec = sine_rec(440.0, 1.0, 0.5);
        let spec = analyze(&bank, &rec).unwrap();
        assert!(spec.is_settling(0));
        assert!(spec.is_settling(1_102 - 1));
        assert!(!spec.is_settling(1_103));
        assert!(!spec.is_settling(20_947 - 1));
        assert!(spec.is_settling(20_948));
    }
}
