//! Sweep orchestration: corpus manifests, external transcribers as
//! subprocess commands, per-cell result caching, and baseline-vs-variant
//! comparison over the (recording x SNR x system) matrix.

mod compare;
mod manifest;
mod sweep;
mod transcriber;

pub use compare::{compare_systems, MetricColumn, SignificanceTable, TestDetail, VariantRow};
pub use manifest::{load_manifest, Manifest, ManifestRecord, Split};
pub use sweep::{run_sweep, CellFailure, CellKey, SweepConfig, SweepMetadata, SweepResult};
pub use transcriber::{
    mock_transcriber, run_transcriber, MockParams, NotesFormat, System, TranscriberSpec,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("duplicate recording id {0:?}")]
    DuplicateId(String),
    #[error("unknown split {0:?} (expected train, validation, or test)")]
    UnknownSplit(String),
    #[error("invalid transcriber spec: {0}")]
    InvalidSpec(String),
    #[error("transcriber {system_id} failed with {status}: {stderr}")]
    TranscriberFailure {
        system_id: String,
        status: String,
        stderr: String,
    },
    #[error("transcriber {system_id} timed out after {timeout_s} s")]
    Timeout { system_id: String, timeout_s: f64 },
    #[error("cannot parse transcriber output {path}: {detail}")]
    OutputParse { path: String, detail: String },
    #[error("manifest is empty after filtering")]
    EmptyManifest,
    #[error("unknown system id {0:?}")]
    UnknownSystem(String),
    #[error("cell coverage mismatch between {baseline} and {variant}; missing: {missing}")]
    CoverageMismatch {
        baseline: String,
        variant: String,
        missing: String,
    },
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Wav(#[from] crate::wav::WavError),
    #[error(transparent)]
    Midi(#[from] crate::midi::MidiError),
    #[error(transparent)]
    Notes(#[from] crate::notes::NotesError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
