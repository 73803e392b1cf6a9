use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use soundobj::features::FEATURE_NAMES;
use soundobj::filterbank::{default_bank, Spectrum};
use soundobj::{
    builtin_reference_ranges, compare_to_reference, feature_report, FeatureReport, ReferenceRanges,
};

use crate::errors::CliError;
use crate::output;

pub const REFERENCE_ENV: &str = "SOUNDOBJ_REFERENCE_RANGES";

/// Band CSVs are for plotting; cap the row count so a minute of audio does
/// not become a million-line file.
const MAX_BAND_ROWS: usize = 512;

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Input WAV.
    pub wav: PathBuf,
    /// Write the feature report as JSON ("-" for stdout).
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Place each feature against reference cohort ranges. A bare flag uses
    /// $SOUNDOBJ_REFERENCE_RANGES if set, else the built-in table;
    /// --reference=PATH names a ranges file.
    #[arg(long, value_name = "PATH", num_args = 0..=1, require_equals = true)]
    pub reference: Option<Option<PathBuf>>,
    /// Dump tracked sound objects as JSON.
    #[arg(long, value_name = "PATH")]
    pub objects: Option<PathBuf>,
    /// Dump the filter-bank amplitude envelopes as CSV (time rows, one
    /// column per filter, downsampled).
    #[arg(long, value_name = "PATH")]
    pub bands: Option<PathBuf>,
    /// Resynthesize the tracked objects and write the result as WAV.
    #[arg(long, value_name = "PATH")]
    pub reconstruct: Option<PathBuf>,
}

pub fn run(args: AnalyzeArgs) -> Result<(), CliError> {
    let rec = soundobj::load_wav(&args.wav)?;
    let warnings: Vec<String> =
        soundobj::validate_recording(&rec).iter().map(|w| w.to_string()).collect();
    let duration = rec.samples.len() as f64 / rec.sample_rate as f64;

    let bank = default_bank(rec.sample_rate);
    let spectrum = soundobj::analyze(&bank, &rec)?;
    let objects = soundobj::track_objects(&spectrum);

    // Side artifacts come out even when the feature stage rejects the
    // recording; they are exactly what you want for diagnosing a rejection.
    if let Some(path) = &args.bands {
        write_band_csv(path, &spectrum)?;
    }
    if let Some(path) = &args.objects {
        output::write_json_atomic(path, &soundobj::objects_to_json(&objects))?;
    }
    if let Some(path) = &args.reconstruct {
        let samples = soundobj::reconstruct(&objects, rec.sample_rate, duration);
        let remake = soundobj::Recording {
            samples,
            sample_rate: rec.sample_rate,
            source_id: rec.source_id.clone(),
        };
        output::write_wav_atomic(path, &remake)?;
    }

    let report = feature_report(&objects, duration, &rec.source_id)?;

    let placement = match &args.reference {
        None => None,
        Some(path) => {
            let ranges = load_ranges(path.as_deref())?;
            let cohort_names: Vec<String> =
                ranges.cohorts.iter().map(|c| c.name.clone()).collect();
            let placements = compare_to_reference(&report.features, &ranges);
            let by_feature: HashMap<&str, Vec<String>> =
                placements.iter().map(|p| (p.feature, p.cohorts.clone())).collect();
            Some((cohort_names, by_feature, placements))
        }
    };

    let mut value = serde_json::to_value(&report)
        .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    let obj = value.as_object_mut().expect("feature report serializes as an object");
    obj.insert("n_objects".into(), serde_json::json!(objects.len()));
    obj.insert("warnings".into(), serde_json::json!(warnings));
    if let Some((_, _, placements)) = &placement {
        obj.insert(
            "reference_placement".into(),
            serde_json::to_value(placements)
                .map_err(|e| CliError::Io(format!("serializing placement: {e}")))?,
        );
    }

    let mut json_to_stdout = false;
    if let Some(path) = &args.json {
        if path.as_os_str() == "-" {
            println!("{}", serde_json::to_string_pretty(&value).expect("rendered above"));
            json_to_stdout = true;
        } else {
            output::write_json_atomic(path, &value)?;
        }
    }
    if !json_to_stdout {
        print_summary(&rec.source_id, duration, rec.sample_rate, objects.len(), &report,
                      &warnings, &placement);
    }
    Ok(())
}

fn load_ranges(path: Option<&Path>) -> Result<ReferenceRanges, CliError> {
    match path {
        Some(p) => ranges_from_file(p),
        None => match std::env::var_os(REFERENCE_ENV) {
            Some(p) => ranges_from_file(Path::new(&p)),
            None => Ok(builtin_reference_ranges().clone()),
        },
    }
}

fn ranges_from_file(path: &Path) -> Result<ReferenceRanges, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    soundobj::features::parse_reference_ranges(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

type Placement = (Vec<String>, HashMap<&'static str, Vec<String>>, Vec<soundobj::features::FeaturePlacement>);

fn print_summary(
    source_id: &str,
    duration: f64,
    sample_rate: u32,
    n_objects: usize,
    report: &FeatureReport,
    warnings: &[String],
    placement: &Option<Placement>,
) {
    println!("source: {source_id} ({duration:.2} s @ {sample_rate} Hz)");
    println!("f1: {:.2} Hz, objects: {n_objects}", report.f1_hz);
    let values = report.features.as_array();
    match placement {
        None => {
            for (name, v) in FEATURE_NAMES.iter().zip(values) {
                println!("  {name:<14} {v:>9.3}");
            }
        }
        Some((cohort_names, by_feature, _)) => {
            let mut tallies: Vec<usize> = vec![0; cohort_names.len()];
            for (name, v) in FEATURE_NAMES.iter().zip(values) {
                let cohorts = by_feature.get(name).map(Vec::as_slice).unwrap_or(&[]);
                for c in cohorts {
                    if let Some(i) = cohort_names.iter().position(|n| n == c) {
                        tallies[i] += 1;
                    }
                }
                println!("  {name:<14} {v:>9.3}  {}", cohorts.join(","));
            }
            let tally_text: Vec<String> = cohort_names
                .iter()
                .zip(&tallies)
                .map(|(n, t)| format!("{n} {t}/{}", FEATURE_NAMES.len()))
                .collect();
            println!("reference: {}", tally_text.join(", "));
        }
    }
    if !report.flags.is_empty() {
        println!("flags: {}", report.flags.join(", "));
    }
    for w in warnings {
        println!("warning: {w}");
    }
}

/// One row per sampled frame, one amplitude column per filter. Sampling
/// column-major keeps each lazily evaluated band chunk hot exactly once.
fn write_band_csv(path: &Path, spectrum: &Spectrum) -> Result<(), CliError> {
    let n = spectrum.n_frames();
    let bank = spectrum.bank();
    let sr = bank.sample_rate as f64;
    let stride = n.div_ceil(MAX_BAND_ROWS).max(1);
    let frames: Vec<usize> = (0..n).step_by(stride).collect();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(bank.n_filters);
    for k in 0..bank.n_filters {
        let mut col = Vec::with_capacity(frames.len());
        for &t in &frames {
            col.push(spectrum.band_sample(k, t)?.norm());
        }
        columns.push(col);
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time_s".to_string()];
    header.extend(bank.centers.iter().map(|c| format!("{c:.2}")));
    wtr.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for (row, &t) in frames.iter().enumerate() {
        let mut record = Vec::with_capacity(bank.n_filters + 1);
        record.push(format!("{:.6}", t as f64 / sr));
        for col in &columns {
            record.push(format!("{:.6e}", col[row]));
        }
        wtr.write_record(&record).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    output::write_atomic(path, &bytes)
}
