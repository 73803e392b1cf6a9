use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use soundobj::filterbank::default_bank;
use soundobj::model::{write_dataset_csv, DatasetRow, Gender, LabeledDataset};
use soundobj::{feature_report, track_objects};

use crate::errors::CliError;
use crate::output;

#[derive(Args)]
pub struct BatchArgs {
    /// Directory scanned (non-recursively) for .wav files.
    pub dir: PathBuf,
    /// CSV mapping source_id -> label, with optional gender and age columns.
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    /// Output dataset CSV, one row per successfully analyzed recording.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Sidecar failure report (default: <out>.failures.json).
    #[arg(long, value_name = "PATH")]
    pub failures: Option<PathBuf>,
}

struct LabelEntry {
    label: u8,
    gender: Option<Gender>,
    age: Option<f64>,
}

pub fn run(args: BatchArgs) -> Result<(), CliError> {
    let labels = read_labels(&args.labels)?;
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.dir.display())))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Io(format!("{}: {e}", args.dir.display())))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    // Sorted input order makes the output row order (and the CSV bytes)
    // reproducible regardless of readdir and scheduling order.
    wavs.sort();
    if wavs.is_empty() {
        return Err(CliError::Data(format!("no .wav files in {}", args.dir.display())));
    }

    let results: Vec<Result<DatasetRow, (String, CliError)>> =
        wavs.par_iter().map(|path| analyze_one(path, &labels)).collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err((source_id, e)) => failures.push(serde_json::json!({
                "source_id": source_id,
                "kind": e.kind(),
                "error": e.to_string(),
            })),
        }
    }

    // The sidecar is written even when empty so pipelines can rely on it.
    let failures_path = args
        .failures
        .clone()
        .unwrap_or_else(|| sibling_with_suffix(&args.out, ".failures.json"));
    output::write_json_atomic(
        &failures_path,
        &serde_json::json!({
            "schema_version": soundobj::SCHEMA_VERSION,
            "failures": failures,
        }),
    )?;

    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "no recording produced a dataset row ({} failures in {})",
            failures.len(),
            failures_path.display()
        )));
    }

    let ds = LabeledDataset { scenario: String::new(), rows };
    let mut bytes = Vec::new();
    write_dataset_csv(&ds, &mut bytes)?;
    output::write_atomic(&args.out, &bytes)?;

    println!(
        "wrote {} rows to {} ({} failures -> {})",
        ds.rows.len(),
        args.out.display(),
        failures.len(),
        failures_path.display()
    );
    Ok(())
}

fn analyze_one(
    path: &Path,
    labels: &HashMap<String, LabelEntry>,
) -> Result<DatasetRow, (String, CliError)> {
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let fail = |e: CliError| (source_id.clone(), e);

    let entry = labels
        .get(&source_id)
        .ok_or_else(|| fail(CliError::Data(format!("no label for {source_id}"))))?;

    let rec = soundobj::load_wav(path).map_err(|e| fail(e.into()))?;
    let bank = default_bank(rec.sample_rate);
    let spectrum = soundobj::analyze(&bank, &rec).map_err(|e| fail(e.into()))?;
    let objects = track_objects(&spectrum);
    let duration = rec.samples.len() as f64 / rec.sample_rate as f64;
    let report =
        feature_report(&objects, duration, &rec.source_id).map_err(|e| fail(e.into()))?;

    Ok(DatasetRow {
        source_id,
        features: report.features,
        gender: entry.gender,
        age: entry.age,
        label: entry.label,
    })
}

fn read_labels(path: &Path) -> Result<HashMap<String, LabelEntry>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("source_id")
        .ok_or_else(|| CliError::Data(format!("{}: missing source_id column", path.display())))?;
    let label_col = col("label")
        .ok_or_else(|| CliError::Data(format!("{}: missing label column", path.display())))?;
    let gender_col = col("gender");
    let age_col = col("age");

    let mut map = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        let bad = |what: &str| {
            CliError::Data(format!("{} row {}: {what}", path.display(), i + 2))
        };
        let source_id = record.get(id_col).unwrap_or("").to_string();
        if source_id.is_empty() {
            return Err(bad("empty source_id"));
        }
        let label = match record.get(label_col).unwrap_or("") {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(&format!("label must be 0 or 1, got {other:?}"))),
        };
        let gender = match gender_col.and_then(|c| record.get(c)).unwrap_or("") {
            "" => None,
            "f" | "female" | "0" => Some(Gender::Female),
            "m" | "male" | "1" => Some(Gender::Male),
            other => return Err(bad(&format!("unrecognized gender {other:?}"))),
        };
        let age = match age_col.and_then(|c| record.get(c)).unwrap_or("") {
            "" => None,
            text => Some(
                text.parse::<f64>()
                    .map_err(|_| bad(&format!("bad age {text:?}")))?,
            ),
        };
        map.insert(source_id, LabelEntry { label, gender, age });
    }
    Ok(map)
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
