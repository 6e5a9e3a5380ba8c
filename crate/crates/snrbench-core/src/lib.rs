//! Noise-robustness benchmarking toolkit for music transcription systems.
//!
//! The crate covers the full loop of a transcription noise study:
//!
//! * [`audio`] / [`wav`]: mono audio buffers, WAV I/O, and the power/RMS/
//!   gain/clip primitives everything else builds on.
//! * [`augment`]: deterministic white-noise generation, exact-SNR mixing
//!   with RMS restoration and clip guarding, SNR sweep grids, and a
//!   clean-to-noise-ratio (CNR) sampling policy for training augmentation.
//! * [`notes`] / [`midi`] / [`eval`]: note-event parsing (Standard MIDI
//!   Files and a plain TSV interchange format) and onset precision/recall/F1
//!   via maximum bipartite matching.
//! * [`stats`]: Student-t significance tests computed from first principles
//!   and extraction of contiguous significant SNR ranges.
//! * [`harness`]: corpus manifests, external transcribers as subprocess
//!   commands, per-cell result caching, and the (recording x SNR x system)
//!   sweep orchestration.
//! * [`report`]: SVG degradation curves and Markdown significance tables.
//!
//! All randomized operations are pure functions of explicit seeds; two runs
//! with the same inputs produce byte-identical artifacts regardless of the
//! worker count.

pub mod audio;
pub mod augment;
pub mod eval;
pub mod harness;
pub mod jobs;
pub mod midi;
pub mod notes;
pub mod report;
pub mod seed;
pub mod selftest;
pub mod stats;
pub mod wav;

pub use audio::{AudioBuffer, AudioError, ClipReport};
pub use augment::{AugmentationDecision, CnrPolicy, MixMetadata, SnrGrid};
pub use eval::EvalResult;
pub use notes::{NoteEvent, NoteList};
pub use stats::{Metric, TTestKind, TTestResult};
