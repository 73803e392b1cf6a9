use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use soundobj::features::FEATURE_NAMES;

use crate::errors::CliError;
use crate::output;

#[derive(Args)]
pub struct ReportArgs {
    /// Analyze-report JSON files, or directories scanned for *.json.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write the aggregate as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

struct Row {
    source_id: String,
    f1_hz: f64,
    values: Vec<f64>,
    flags: Vec<String>,
    /// cohort -> number of features inside its interquartile range.
    placement: BTreeMap<String, usize>,
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    let mut files = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no report files found".into()));
    }

    let rows: Vec<Row> = files.iter().map(|p| read_row(p)).collect::<Result<_, _>>()?;

    print_table(&rows);

    if let Some(path) = &args.json {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| {
                let features: serde_json::Map<String, serde_json::Value> = FEATURE_NAMES
                    .iter()
                    .zip(&r.values)
                    .map(|(n, v)| (n.to_string(), serde_json::json!(v)))
                    .collect();
                serde_json::json!({
                    "source_id": r.source_id,
                    "f1_hz": r.f1_hz,
                    "features": features,
                    "flags": r.flags,
                    "placement_counts": r.placement,
                })
            })
            .collect();
        output::write_json_atomic(
            path,
            &serde_json::json!({
                "schema_version": soundobj::SCHEMA_VERSION,
                "rows": json_rows,
            }),
        )?;
    }
    Ok(())
}

fn read_row(path: &Path) -> Result<Row, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let bad = |what: &str| CliError::Data(format!("{}: {what}", path.display()));

    let source_id = value["source_id"]
        .as_str()
        .ok_or_else(|| bad("missing source_id"))?
        .to_string();
    let f1_hz = value["f1_hz"].as_f64().ok_or_else(|| bad("missing f1_hz"))?;
    let features = value["features"]
        .as_object()
        .ok_or_else(|| bad("missing features object"))?;
    let values: Vec<f64> = FEATURE_NAMES
        .iter()
        .map(|name| {
            features
                .get(*name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| bad(&format!("missing feature {name}")))
        })
        .collect::<Result<_, _>>()?;
    let flags = value["flags"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default();

    let mut placement = BTreeMap::new();
    if let Some(entries) = value["reference_placement"].as_array() {
        for entry in entries {
            if let Some(cohorts) = entry["cohorts"].as_array() {
                for c in cohorts {
                    if let Some(name) = c.as_str() {
                        *placement.entry(name.to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
    }

    Ok(Row { source_id, f1_hz, values, flags, placement })
}

fn print_table(rows: &[Row]) {
    let id_width = rows
        .iter()
        .map(|r| r.source_id.len())
        .chain(std::iter::once("SOURCE".len()))
        .max()
        .unwrap_or(6);
    print!("{:<id_width$} {:>8}", "SOURCE", "F1_HZ");
    for name in FEATURE_NAMES {
        print!(" {name:>13}");
    }
    println!();
    for r in rows {
        print!("{:<id_width$} {:>8.2}", r.source_id, r.f1_hz);
        for v in &r.values {
            print!(" {v:>13.4}");
        }
        println!();
    }

    if rows.iter().any(|r| !r.placement.is_empty()) {
        println!();
        println!("reference placement (features inside each cohort's quartile range):");
        for r in rows {
            let text: Vec<String> = r
                .placement
                .iter()
                .map(|(cohort, n)| format!("{cohort} {n}/{}", FEATURE_NAMES.len()))
                .collect();
            let text = if text.is_empty() { "none".to_string() } else { text.join(", ") };
            println!("  {:<id_width$} {text}", r.source_id);
        }
    }

    let flagged: Vec<&Row> = rows.iter().filter(|r| !r.flags.is_empty()).collect();
    if !flagged.is_empty() {
        println!();
        for r in flagged {
            println!("flags {:<id_width$} {}", r.source_id, r.flags.join(", "));
        }
    }
}
