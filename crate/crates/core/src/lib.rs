//! Decomposition of voice recordings into phase-continuous sound objects,
//! acoustic biomarkers derived from them, and a simple ensemble classifier
//! over those biomarkers. A deterministic vowel synthesizer with recorded
//! ground truth closes the loop for end-to-end validation.

pub mod audio;
pub mod features;
pub mod filterbank;
pub mod model;
pub mod synth;
pub mod tracker;
pub(crate) mod util;

/// Stamped into every JSON artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

pub use audio::{load_wav, validate_recording, write_wav, AudioError, Recording};
pub use features::{
    builtin_reference_ranges, compare_to_reference, feature_report, BiomarkerVector, FeatureError,
    FeatureReport, ReferenceRanges,
};
pub use filterbank::{analyze, design_bank, FilterBank, FilterBankError, Spectrum};
pub use synth::{generate, GroundTruth, SynthError, SynthSpec};
pub use tracker::{
    objects_to_json, reconstruct, reproduction_score, track_objects, ObjectPoint, SoundObject,
};
