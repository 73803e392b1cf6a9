use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use soundobj::{generate, GroundTruth, SynthSpec};

use crate::errors::CliError;
use crate::output;

#[derive(Args)]
pub struct SynthArgs {
    /// Output WAV; the realized ground truth lands beside it as .truth.json.
    #[arg(long, value_name = "PATH", required_unless_present = "out_dir", conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Corpus mode: one WAV + truth pair per grid point, into this directory.
    #[arg(long, value_name = "DIR", requires = "grid")]
    pub out_dir: Option<PathBuf>,
    /// Parameter sweep, e.g. "jitter=0.03,0.06;shimmer=0.6,1.5" (cartesian
    /// product; keys: jitter shimmer f0 f0-slope amp-slope phase-sigma snr
    /// seed duration).
    #[arg(long, requires = "out_dir")]
    pub grid: Option<String>,
    /// Class label written to labels.csv for every grid point.
    #[arg(long, requires = "out_dir")]
    pub label: Option<u8>,
    #[arg(long, default_value_t = 150.0)]
    pub f0: f64,
    /// Harmonic count; amplitudes are flat unless --amps says otherwise.
    #[arg(long)]
    pub harmonics: Option<usize>,
    /// Comma-separated relative harmonic amplitudes.
    #[arg(long)]
    pub amps: Option<String>,
    /// Jitter, % total variation per cycle.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Shimmer, % total variation per cycle.
    #[arg(long, default_value_t = 0.0)]
    pub shimmer: f64,
    /// Fundamental drift, %/s.
    #[arg(long, default_value_t = 0.0)]
    pub f0_slope: f64,
    /// Amplitude drift, %/s.
    #[arg(long, default_value_t = 0.0)]
    pub amp_slope: f64,
    /// Stationary std (rad) of each harmonic's phase walk.
    #[arg(long, default_value_t = 0.0)]
    pub phase_sigma: f64,
    /// Comma-separated fixed phase offsets (rad), one per harmonic.
    #[arg(long)]
    pub phase_offsets: Option<String>,
    /// Comma-separated voice-break instants (s).
    #[arg(long)]
    pub breaks: Option<String>,
    /// Additive noise SNR in dB; omit for noise-free.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 22_050)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let base = base_spec(&args)?;
    match (&args.out, &args.out_dir) {
        (Some(out), None) => single(out, &base),
        (None, Some(dir)) => corpus(dir, &base, args.grid.as_deref().unwrap_or(""), args.label),
        _ => unreachable!("clap enforces out xor out-dir"),
    }
}

fn single(out: &Path, spec: &SynthSpec) -> Result<(), CliError> {
    let truth_path = out.with_extension("truth.json");
    let truth = write_pair(out, &truth_path, spec)?;
    println!(
        "wrote {} + {} (realized jitter {:.3}%, shimmer {:.3}%)",
        out.display(),
        truth_path.display(),
        truth.realized_jitter_tv_pct,
        truth.realized_shimmer_tv_pct
    );
    Ok(())
}

fn corpus(dir: &Path, base: &SynthSpec, grid: &str, label: Option<u8>) -> Result<(), CliError> {
    let axes = parse_grid(grid)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;

    let mut points = vec![Vec::new()];
    for (_, choices) in &axes {
        let mut next = Vec::with_capacity(points.len() * choices.len());
        for p in &points {
            for i in 0..choices.len() {
                let mut q = p.clone();
                q.push(i);
                next.push(q);
            }
        }
        points = next;
    }

    let jobs: Vec<(String, SynthSpec)> = points
        .iter()
        .enumerate()
        .map(|(idx, point)| -> Result<(String, SynthSpec), CliError> {
            let mut spec = base.clone();
            let mut seed_is_axis = false;
            let mut name_parts = Vec::with_capacity(point.len());
            for ((key, choices), &i) in axes.iter().zip(point) {
                let (token, value) = &choices[i];
                apply(&mut spec, key, *value)?;
                seed_is_axis |= key == "seed";
                name_parts.push(format!("{key}{token}"));
            }
            // Distinct seeds per point, or every noise draw repeats verbatim
            // across the sweep.
            if !seed_is_axis {
                spec.seed = base.seed + idx as u64;
            }
            Ok((name_parts.join("_"), spec))
        })
        .collect::<Result<_, _>>()?;

    jobs.par_iter().try_for_each(|(name, spec)| -> Result<(), CliError> {
        let wav = dir.join(format!("{name}.wav"));
        let truth = dir.join(format!("{name}.truth.json"));
        write_pair(&wav, &truth, spec)?;
        Ok(())
    })?;

    if let Some(label) = label {
        // Merge with an existing labels.csv so a two-class corpus can be
        // assembled by running one grid per label into the same directory.
        let path = dir.join("labels.csv");
        let mut entries: std::collections::BTreeMap<String, String> = std::collections::BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
                let (id, rest) = line
                    .split_once(',')
                    .ok_or_else(|| CliError::Data(format!("{}: bad line {line:?}", path.display())))?;
                entries.insert(id.to_string(), rest.to_string());
            }
        }
        for (name, _) in &jobs {
            entries.insert(name.clone(), label.to_string());
        }
        let mut text = String::from("source_id,label\n");
        for (id, rest) in &entries {
            text.push_str(&format!("{id},{rest}\n"));
        }
        output::write_atomic(&path, text.as_bytes())?;
    }

    println!("wrote {} recordings to {}", jobs.len(), dir.display());
    Ok(())
}

fn write_pair(wav: &Path, truth_path: &Path, spec: &SynthSpec) -> Result<GroundTruth, CliError> {
    let (rec, truth) = generate(spec)?;
    output::write_wav_atomic(wav, &rec)?;
    let value = serde_json::to_value(&truth)
        .map_err(|e| CliError::Io(format!("serializing ground truth: {e}")))?;
    output::write_json_atomic(truth_path, &value)?;
    Ok(truth)
}

fn base_spec(args: &SynthArgs) -> Result<SynthSpec, CliError> {
    let mut spec = SynthSpec {
        f0: args.f0,
        jitter_pct: args.jitter,
        shimmer_pct: args.shimmer,
        f0_slope_pct_per_s: args.f0_slope,
        amp_slope_pct_per_s: args.amp_slope,
        phase_walk_sigma: args.phase_sigma,
        noise_snr_db: args.snr,
        duration: args.duration,
        sample_rate: args.sample_rate,
        seed: args.seed,
        ..SynthSpec::default()
    };
    match (&args.amps, args.harmonics) {
        (Some(text), n) => {
            let amps = parse_floats(text, "--amps")?;
            if let Some(n) = n {
                if n != amps.len() {
                    return Err(CliError::Data(format!(
                        "--harmonics {n} disagrees with {} --amps values",
                        amps.len()
                    )));
                }
            }
            spec.n_harmonics = amps.len();
            spec.harmonic_amps = amps;
        }
        (None, Some(n)) => {
            spec.n_harmonics = n;
            spec.harmonic_amps = vec![1.0; n];
        }
        (None, None) => {}
    }
    if let Some(text) = &args.phase_offsets {
        spec.phase_offsets = parse_floats(text, "--phase-offsets")?;
    }
    if let Some(text) = &args.breaks {
        spec.break_times = parse_floats(text, "--breaks")?;
    }
    Ok(spec)
}

fn parse_floats(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("bad {flag} value {:?}", t.trim())))
        })
        .collect()
}

fn apply(spec: &mut SynthSpec, key: &str, value: f64) -> Result<(), CliError> {
    match key {
        "jitter" => spec.jitter_pct = value,
        "shimmer" => spec.shimmer_pct = value,
        "f0" => spec.f0 = value,
        "f0-slope" => spec.f0_slope_pct_per_s = value,
        "amp-slope" => spec.amp_slope_pct_per_s = value,
        "phase-sigma" => spec.phase_walk_sigma = value,
        "snr" => spec.noise_snr_db = Some(value),
        "duration" => spec.duration = value,
        "seed" => spec.seed = value as u64,
        other => return Err(CliError::Data(format!("unknown grid key {other:?}"))),
    }
    Ok(())
}

type GridAxes = Vec<(String, Vec<(String, f64)>)>;

/// "jitter=0.03,0.06;shimmer=0.6,1.5" -> ordered axes with the original
/// tokens kept for file naming.
fn parse_grid(text: &str) -> Result<GridAxes, CliError> {
    let bad = |detail: String| CliError::Data(format!("bad --grid: {detail}"));
    let mut axes = Vec::new();
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=v1,v2 in {part:?}")))?;
        let key = key.trim().to_string();
        let choices: Vec<(String, f64)> = values
            .split(',')
            .map(|t| {
                let token = t.trim().to_string();
                let v = token
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad value {token:?} for {key}")))?;
                Ok((token, v))
            })
            .collect::<Result<_, CliError>>()?;
        if choices.is_empty() {
            return Err(bad(format!("no values for {key}")));
        }
        // Fail fast on unknown keys instead of at the first grid point.
        apply(&mut SynthSpec::default(), &key, choices[0].1)?;
        axes.push((key, choices));
    }
    if axes.is_empty() {
        return Err(bad("no axes".into()));
    }
    Ok(axes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parses_and_keeps_tokens() {
        let axes = parse_grid("jitter=0.03,0.06; shimmer=0.6,1.5").unwrap();
        assert_eq!(axes.len(), 2);
        assert_eq!(axes[0].0, "jitter");
        assert_eq!(axes[0].1[1], ("0.06".to_string(), 0.06));
        assert_eq!(axes[1].1.len(), 2);
    }

    #[test]
    fn grid_rejects_unknown_keys_and_junk() {
        assert!(parse_grid("vibrato=1,2").is_err());
        assert!(parse_grid("jitter=").is_err());
        assert!(parse_grid("").is_err());
        assert!(parse_grid("jitter 0.03").is_err());
    }
}
