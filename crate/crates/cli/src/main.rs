use clap::{Parser, Subcommand};

mod analyze;
mod batch;
mod cv;
mod errors;
mod output;
mod report;
mod synth;

#[derive(Parser)]
#[command(
    name = "soundobj",
    version,
    about = "Decompose voice recordings into sound objects, extract acoustic \
             biomarkers, and cross-validate classifiers over them"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one WAV into a feature report (plus optional dumps).
    Analyze(analyze::AnalyzeArgs),
    /// Analyze a directory of WAVs into a labeled dataset CSV.
    Batch(batch::BatchArgs),
    /// Cross-validate the ensemble classifier on a dataset CSV.
    Cv(cv::CvArgs),
    /// Generate synthetic vowels with recorded ground truth.
    Synth(synth::SynthArgs),
    /// Summarize analyze reports into one table.
    Report(report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Errors if a pool already exists; only reachable once here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Batch(args) => batch::run(args),
        Command::Cv(args) => cv::run(args),
        Command::Synth(args) => synth::run(args),
        Command::Report(args) => report::run(args),
    };
    if let Err(e) = result {
        eprintln!("{}", e.stderr_json());
        std::process::exit(e.exit_code());
    }
}
