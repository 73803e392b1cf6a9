use soundobj::model::ModelError;
use soundobj::synth::SynthError;
use soundobj::{AudioError, FeatureError, FilterBankError};
use thiserror::Error;

/// Exit-code contract: 1 for I/O trouble, 2 when the analysis itself says no
/// (a verdict about the recording), 3 for bad flags or bad data files. Shell
/// pipelines branch on the distinction.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Domain(_) => "domain",
            CliError::Data(_) => "data",
        }
    }

    /// One line of JSON on stderr so callers never have to parse prose.
    pub fn stderr_json(&self) -> String {
        serde_json::json!({
            "schema_version": soundobj::SCHEMA_VERSION,
            "kind": self.kind(),
            "error": self.to_string(),
        })
        .to_string()
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::UnreadableFile { .. } => CliError::Io(e.to_string()),
            // Wrong encodings and too-short clips are problems with what the
            // caller handed us, not with the filesystem.
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::ReferenceData(_) => CliError::Data(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<FilterBankError> for CliError {
    fn from(e: FilterBankError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
