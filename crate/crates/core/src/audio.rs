use std::path::Path;

use thiserror::Error;

pub const TARGET_RATE: u32 = 22_050;
pub const CANONICAL_RATES: [u32; 2] = [22_050, 44_100];
pub const MIN_DURATION_S: f64 = 1.0;
/// Peak level after load normalization; leaves headroom against resampling
/// overshoot when the file is written back out.
pub const NORMALIZED_PEAK: f64 = 0.9;

/// 16-bit full scale is 32767/32768, so "at the rails" can never be literal
/// |1.0| for decoded PCM.
const CLIP_LEVEL: f64 = 0.9999;
const SILENCE_RMS: f64 = 1e-4;
const SHORT_RECORDING_S: f64 = 6.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unreadable file {path}: {detail}")]
    UnreadableFile { path: String, detail: String },
    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("recording too short: {seconds:.3} s (need at least {MIN_DURATION_S} s)")]
    TooShort { seconds: f64 },
}

/// A mono voice recording. Samples are within [-1, 1] and the rate is one of
/// [`CANONICAL_RATES`]; `load_wav` establishes both.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl Recording {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationWarning {
    /// At least three consecutive samples pinned to full scale.
    Clipping { first_sample: usize },
    /// Overall RMS below a speech-plausible floor.
    NearSilence { rms: f64 },
    /// Shorter than the recommended sustained-phonation length.
    ShortRecording { seconds: f64 },
}

impl std::fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationWarning::Clipping { first_sample } => {
                write!(f, "clipping detected (first run at sample {first_sample})")
            }
            ValidationWarning::NearSilence { rms } => {
                write!(f, "near-silent recording (rms {rms:.2e})")
            }
            ValidationWarning::ShortRecording { seconds } => {
                write!(f, "short recording ({seconds:.2} s < {SHORT_RECORDING_S} s)")
            }
        }
    }
}

/// Decode, downmix and rate-convert a WAV file without level normalization.
/// Accepts 8/16/24-bit integer or 32-bit float PCM, one or two channels.
pub fn decode_wav(path: &Path) -> Result<Recording, AudioError> {
    let display = path.display().to_string();
    let unreadable = |detail: String| AudioError::UnreadableFile {
        path: display.clone(),
        detail,
    };
    let reader = hound::WavReader::open(path).map_err(|e| unreadable(e.to_string()))?;
    let spec = reader.spec();

    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedEncoding {
            path: display,
            detail: format!("{} channels", spec.channels),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24)) => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| unreadable(e.to_string()))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| unreadable(e.to_string()))?,
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: display,
                detail: format!("{format:?} {bits}-bit"),
            })
        }
    };

    let mono: Vec<f64> = if spec.channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|lr| 0.5 * (lr[0] + lr[1]))
            .collect()
    } else {
        interleaved
    };

    let seconds = mono.len() as f64 / spec.sample_rate as f64;
    if seconds < MIN_DURATION_S {
        return Err(AudioError::TooShort { seconds });
    }

    let (samples, sample_rate) = if CANONICAL_RATES.contains(&spec.sample_rate) {
        (mono, spec.sample_rate)
    } else {
        (resample(&mono, spec.sample_rate, TARGET_RATE), TARGET_RATE)
    };

    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or(display);
    Ok(Recording {
        samples: samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        sample_rate,
        source_id,
    })
}

/// Decode a WAV file into analysis-ready form: mono, canonical rate, peak
/// normalized to [`NORMALIZED_PEAK`].
pub fn load_wav(path: &Path) -> Result<Recording, AudioError> {
    let mut rec = decode_wav(path)?;
    normalize_peak(&mut rec, NORMALIZED_PEAK);
    Ok(rec)
}

/// Scale so the absolute peak hits `target`. Silence is left untouched.
pub fn normalize_peak(rec: &mut Recording, target: f64) {
    let peak = rec.peak();
    if peak > 0.0 {
        let g = target / peak;
        for s in &mut rec.samples {
            *s *= g;
        }
    }
}

/// Write as 16-bit PCM at the recording's rate.
pub fn write_wav(path: &Path, rec: &Recording) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rec.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let fail = |e: hound::Error| AudioError::UnreadableFile {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in &rec.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(fail)?;
    }
    writer.finalize().map_err(fail)
}

pub fn validate_recording(rec: &Recording) -> Vec<ValidationWarning> {
    let mut warnings = Vec::new();
    let mut run = 0usize;
    for (i, s) in rec.samples.iter().enumerate() {
        if s.abs() >= CLIP_LEVEL {
            run += 1;
            if run == 3 {
                warnings.push(ValidationWarning::Clipping {
                    first_sample: i + 1 - run,
                });
                break;
            }
        } else {
            run = 0;
        }
    }
    let rms = rec.rms();
    if rms < SILENCE_RMS {
        warnings.push(ValidationWarning::NearSilence { rms });
    }
    let seconds = rec.duration();
    if seconds < SHORT_RECORDING_S {
        warnings.push(ValidationWarning::ShortRecording { seconds });
    }
    warnings
}

/// Rational-ratio resampler: zero-stuff by L, Kaiser-windowed sinc lowpass,
/// take every M-th sample. The kernel is symmetric, so the filter is linear
/// phase and output sample m sits exactly at input time m*M/L.
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    assert!(from_rate > 0 && to_rate > 0);
    if from_rate == to_rate {
        return input.to_vec();
    }
    let g = gcd(from_rate, to_rate);
    let l = (to_rate / g) as i64;
    let m = (from_rate / g) as i64;

    // ~0.45 of the narrower Nyquist, 28 zero-crossing-pairs per branch,
    // beta 8.6 for ~90 dB stopband.
    let cutoff = 0.45 * (l as f64 / m as f64).min(1.0);
    let taps_per_branch = 28i64;
    let half = taps_per_branch * l / 2;
    let beta = 8.6;
    let i0_beta = bessel_i0(beta);
    let kernel: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / l as f64; // in input-sample units
            let w = {
                let r = i as f64 / half as f64;
                bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta
            };
            2.0 * cutoff * sinc(2.0 * cutoff * t) * w
        })
        .collect();

    let n_in = input.len() as i64;
    let n_out = ((n_in * l) + m - 1) / m;
    let mut out = Vec::with_capacity(n_out as usize);
    for j in 0..n_out {
        let u = j * m; // position on the upsampled grid
        let n_lo = (u - half).div_euclid(l) + i64::from((u - half).rem_euclid(l) != 0);
        let n_hi = (u + half).div_euclid(l);
        let mut acc = 0.0;
        for n in n_lo.max(0)..=n_hi.min(n_in - 1) {
            acc += input[n as usize] * kernel[(u - n * l + half) as usize];
        }
        out.push(acc);
    }
    out
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn bessel_i0(x: f64) -> f64 {
    // Power series; converges quickly for the argument range we use.
    let mut term = 1.0;
    let mut sum = 1.0;
    let half_x = x / 2.0;
    for k in 1..64 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sine(freq: f64, rate: u32, seconds: f64, amp: f64) -> Vec<f64> {
        let n = (seconds * rate as f64).round() as usize;
        (0..n)
            .map(|i| amp * (TAU * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    fn write_test_wav(path: &Path, spec: hound::WavSpec, frames: &[Vec<f64>]) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for frame in frames {
            for &s in frame {
                match (spec.sample_format, spec.bits_per_sample) {
                    (hound::SampleFormat::Int, bits) => {
                        let full = (1i64 << (bits - 1)) as f64;
                        let v = (s * full).round().clamp(-full, full - 1.0);
                        match bits {
                            8 => w.write_sample(v as i8).unwrap(),
                            16 => w.write_sample(v as i16).unwrap(),
                            _ => w.write_sample(v as i32).unwrap(),
                        }
                    }
                    (hound::SampleFormat::Float, _) => w.write_sample(s as f32).unwrap(),
                }
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn loads_canonical_stereo_and_downmixes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let s = sine(440.0, 44_100, 2.0, 0.5);
        let frames: Vec<Vec<f64>> = s.iter().map(|&v| vec![v, v]).collect();
        write_test_wav(&path, spec, &frames);

        let rec = load_wav(&path).unwrap();
        assert_eq!(rec.sample_rate, 44_100);
        assert_eq!(rec.samples.len(), s.len());
        assert!((rec.peak() - NORMALIZED_PEAK).abs() < 1e-6);
        assert_eq!(rec.source_id, "stereo");
    }

    #[test]
    fn common_mode_sine_survives_downmix_unscaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("common.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 22_050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let s = sine(330.0, 22_050, 1.5, 0.4);
        let frames: Vec<Vec<f64>> = s.iter().map(|&v| vec![v, v]).collect();
        write_test_wav(&path, spec, &frames);

        let rec = decode_wav(&path).unwrap();
        for (got, want) in rec.samples.iter().zip(&s) {
            assert!((got - want).abs() < 2.0 / 32768.0);
        }
    }

    #[test]
    fn resamples_noncanonical_rate_to_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r48k.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 48_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_test_wav(
            &path,
            spec,
            &sine(1000.0, 48_000, 2.0, 0.5)
                .into_iter()
                .map(|v| vec![v])
                .collect::<Vec<_>>(),
        );

        let rec = decode_wav(&path).unwrap();
        assert_eq!(rec.sample_rate, TARGET_RATE);
        assert!((rec.duration() - 2.0).abs() < 1e-3);
        // Interior should match an ideal 1 kHz sine at the new rate.
        let ideal = sine(1000.0, TARGET_RATE, rec.duration(), 0.5);
        let lo = TARGET_RATE as usize / 10;
        let hi = rec.samples.len() - lo;
        let err = rec.samples[lo..hi]
            .iter()
            .zip(&ideal[lo..hi])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / ((hi - lo) as f64).sqrt();
        assert!(err < 2e-3, "interior rms error {err}");
    }

    #[test]
    fn resampler_is_linear_phase() {
        // A centered impulse must stay centered after rate conversion.
        let mut input = vec![0.0; 4801];
        input[2400] = 1.0; // t = 0.05 s at 48 kHz
        let out = resample(&input, 48_000, 22_050);
        let (argmax, _) = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        let expected = 2400.0 * 22_050.0 / 48_000.0;
        assert!((argmax as f64 - expected).abs() <= 1.0);
    }

    #[test]
    fn decodes_8_24_and_float_encodings() {
        let dir = tempfile::tempdir().unwrap();
        for (bits, format) in [
            (8, hound::SampleFormat::Int),
            (24, hound::SampleFormat::Int),
            (32, hound::SampleFormat::Float),
        ] {
            let path = dir.path().join(format!("enc{bits}.wav"));
            let spec = hound::WavSpec {
                channels: 1,
                sample_rate: 22_050,
                bits_per_sample: bits,
                sample_format: format,
            };
            let s = sine(220.0, 22_050, 1.2, 0.5);
            write_test_wav(
                &path,
                spec,
                &s.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
            );
            let rec = decode_wav(&path).unwrap();
            assert_eq!(rec.sample_rate, 22_050);
            let tol = match bits {
                8 => 2.0 / 128.0,
                _ => 1e-3,
            };
            for (got, want) in rec.samples.iter().zip(&s) {
                assert!((got - want).abs() < tol, "{bits}-bit decode");
            }
        }
    }

    #[test]
    fn rejects_short_unreadable_and_exotic() {
        let dir = tempfile::tempdir().unwrap();

        let short = dir.path().join("short.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22_050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_test_wav(
            &short,
            spec,
            &sine(220.0, 22_050, 0.5, 0.5)
                .iter()
                .map(|&v| vec![v])
                .collect::<Vec<_>>(),
        );
        assert!(matches!(
            load_wav(&short),
            Err(AudioError::TooShort { .. })
        ));

        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"not a riff file at all").unwrap();
        assert!(matches!(
            load_wav(&garbage),
            Err(AudioError::UnreadableFile { .. })
        ));

        assert!(matches!(
            load_wav(&dir.path().join("missing.wav")),
            Err(AudioError::UnreadableFile { .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let mut rec = Recording {
            samples: sine(173.0, 22_050, 1.5, 1.0),
            sample_rate: 22_050,
            source_id: "rt".into(),
        };
        normalize_peak(&mut rec, NORMALIZED_PEAK);
        write_wav(&path, &rec).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.samples.len(), rec.samples.len());
        for (got, want) in back.samples.iter().zip(&rec.samples) {
            assert!((got - want).abs() <= 1.5 / 32768.0);
        }
    }

    #[test]
    fn validation_flags_clipping_silence_and_short() {
        let mut clipped = Recording {
            samples: sine(200.0, 22_050, 6.5, 0.5),
            sample_rate: 22_050,
            source_id: "c".into(),
        };
        clipped.samples[1000] = 1.0;
        clipped.samples[1001] = -1.0;
        clipped.samples[1002] = 1.0;
        let w = validate_recording(&clipped);
        assert!(matches!(
            w[0],
            ValidationWarning::Clipping { first_sample: 1000 }
        ));

        let silent = Recording {
            samples: vec![1e-6; 22_050 * 7],
            sample_rate: 22_050,
            source_id: "s".into(),
        };
        assert!(validate_recording(&silent)
            .iter()
            .any(|w| matches!(w, ValidationWarning::NearSilence { .. })));

        let short = Recording {
            samples: sine(200.0, 22_050, 2.0, 0.5),
            sample_rate: 22_050,
            source_id: "d".into(),
        };
        assert!(validate_recording(&short)
            .iter()
            .any(|w| matches!(w, ValidationWarning::ShortRecording { .. })));

        let clean = Recording {
            samples: sine(200.0, 22_050, 6.5, 0.5),
            sample_rate: 22_050,
            source_id: "ok".into(),
        };
        assert!(validate_recording(&clean).is_empty());
    }

    #[test]
    fn two_samples_at_rail_do_not_flag_clipping() {
        let mut rec = Recording {
            samples: sine(200.0, 22_050, 6.5, 0.5),
            sample_rate: 22_050,
            source_id: "edge".into(),
        };
        rec.samples[500] = 1.0;
        rec.samples[501] = 1.0;
        rec.samples[502] = 0.1;
        assert!(!validate_recording(&rec)
            .iter()
            .any(|w| matches!(w, ValidationWarning::Clipping { .. })));
    }
}
