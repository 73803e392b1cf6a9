use std::path::PathBuf;

use clap::Args;
use soundobj::model::{
    cross_validate, format_metrics_table, read_dataset_csv, FeatureMode, FittedSFLRE,
};

use crate::errors::CliError;
use crate::output;

#[derive(Args)]
pub struct CvArgs {
    /// Dataset CSV as produced by `batch`.
    pub dataset: PathBuf,
    /// Scenario name for the report (default: dataset file stem).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Number of stratified folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Seeds: a comma list ("3,5,8") or an inclusive range ("1..10").
    #[arg(long, default_value = "1..10")]
    pub seeds: String,
    /// 14 = sound-object features alone; 16 = plus gender and age.
    #[arg(long, default_value_t = 14)]
    pub mode: u32,
    /// Write the full run-by-run report as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

pub fn run(args: CvArgs) -> Result<(), CliError> {
    if args.k < 2 {
        return Err(CliError::Data(format!("--k must be at least 2, got {}", args.k)));
    }
    let seeds = parse_seeds(&args.seeds)?;
    let mode = match args.mode {
        14 => FeatureMode::Fourteen,
        16 => FeatureMode::Sixteen,
        other => return Err(CliError::Data(format!("--mode must be 14 or 16, got {other}"))),
    };
    let scenario = args.scenario.clone().unwrap_or_else(|| {
        args.dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });

    let file = std::fs::File::open(&args.dataset)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.dataset.display())))?;
    let ds = read_dataset_csv(file, &scenario)?;

    let report = cross_validate::<FittedSFLRE>(&ds, args.k, &seeds, mode)?;

    println!("{} runs ({} seeds x {} folds)", report.runs.len(), seeds.len(), args.k);
    print!("{}", format_metrics_table(std::slice::from_ref(&report)));

    if let Some(path) = &args.json {
        let mut value = serde_json::to_value(&report)
            .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
        value
            .as_object_mut()
            .expect("cv report serializes as an object")
            .insert("schema_version".into(), serde_json::json!(soundobj::SCHEMA_VERSION));
        output::write_json_atomic(path, &value)?;
    }
    Ok(())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = |detail: &str| CliError::Data(format!("bad --seeds {text:?}: {detail}"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| bad("expected integers around .."))?;
        let hi: u64 = b.trim().parse().map_err(|_| bad("expected integers around .."))?;
        if hi < lo {
            return Err(bad("range is empty"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected a comma list of integers"))?
    };
    if seeds.is_empty() {
        return Err(bad("no seeds"));
    }
    Ok(seeds)
}
