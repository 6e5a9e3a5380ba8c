//! Transcription systems: external subprocess commands plus a built-in
//! synthetic stand-in for desk-scale end-to-end runs.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::notes::{self, NoteEvent, NoteList};

/// Output file format an external transcriber produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NotesFormat {
    Midi,
    Tsv,
}

/// An external transcriber invoked as a child process.
///
/// The command template must contain `{input}` and `{output}` exactly once
/// each; they are replaced with shell-quoted paths and the command runs via
/// `sh -c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriberSpec {
    pub system_id: String,
    pub command_template: String,
    pub output_format: NotesFormat,
    pub timeout_s: f64,
}

impl TranscriberSpec {
    pub fn new(
        system_id: impl Into<String>,
        command_template: impl Into<String>,
        output_format: NotesFormat,
        timeout_s: f64,
    ) -> Result<Self, HarnessError> {
        let spec = TranscriberSpec {
            system_id: system_id.into(),
            command_template: command_template.into(),
            output_format,
            timeout_s,
        };
        for placeholder in ["{input}", "{output}"] {
            match spec.command_template.matches(placeholder).count() {
                1 => {}
                n => {
                    return Err(HarnessError::InvalidSpec(format!(
                        "template must contain {placeholder} exactly once, found {n}"
                    )))
                }
            }
        }
        if spec.timeout_s.is_nan() || spec.timeout_s <= 0.0 {
            return Err(HarnessError::InvalidSpec(format!(
                "timeout must be positive, got {}",
                spec.timeout_s
            )));
        }
        Ok(spec)
    }
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

/// Run an external transcriber on one audio file and parse its output.
pub fn run_transcriber(
    spec: &TranscriberSpec,
    audio_path: &Path,
    work_dir: &Path,
) -> Result<NoteList, HarnessError> {
    let stem = audio_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "audio".into());
    let ext = match spec.output_format {
        NotesFormat::Midi => "mid",
        NotesFormat::Tsv => "tsv",
    };
    let output_path = work_dir.join(format!("{stem}.out.{ext}"));

    let command = spec
        .command_template
        .replace("{input}", &shell_quote(audio_path))
        .replace("{output}", &shell_quote(&output_path));

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| HarnessError::Io {
            path: command.clone(),
            source,
        })?;

    // Drain stderr on a helper thread so a chatty child cannot deadlock on
    // a full pipe while we poll for exit.
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stderr_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout_s);
    let status = loop {
        match child.try_wait().map_err(|source| HarnessError::Io {
            path: command.clone(),
            source,
        })? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                // Do not join the reader: a grandchild may still hold the
                // pipe open; the detached thread exits when it closes.
                drop(stderr_thread);
                return Err(HarnessError::Timeout {
                    system_id: spec.system_id.clone(),
                    timeout_s: spec.timeout_s,
                });
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    let stderr_bytes = stderr_thread.join().unwrap_or_default();

    if !status.success() {
        let mut stderr = String::from_utf8_lossy(&stderr_bytes).into_owned();
        if stderr.len() > 8192 {
            stderr.truncate(8192);
            stderr.push_str("...");
        }
        return Err(HarnessError::TranscriberFailure {
            system_id: spec.system_id.clone(),
            status: status.to_string(),
            stderr,
        });
    }

    let parsed = match spec.output_format {
        NotesFormat::Tsv => {
            notes::read_notes_tsv(&output_path).map_err(|e| HarnessError::OutputParse {
                path: output_path.display().to_string(),
                detail: e.to_string(),
            })?
        }
        NotesFormat::Midi => {
            crate::midi::read_midi(&output_path).map_err(|e| HarnessError::OutputParse {
                path: output_path.display().to_string(),
                detail: e.to_string(),
            })?
        }
    };
    let _ = std::fs::remove_file(&output_path);
    Ok(parsed)
}

/// Degradation parameters for the built-in mock transcriber.
///
/// Each reference note is dropped independently with probability
/// `drop_floor + (1 - drop_floor) * sigmoid(-steepness * (snr - knee_snr_db))`;
/// survivors get uniform onset jitter in +-jitter_s. The defaults put the
/// knee of the resulting score curve near 6-12 dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockParams {
    /// Drop probability that remains even at very high SNR.
    pub drop_floor: f64,
    /// Slope of the sigmoid around the knee.
    pub steepness: f64,
    /// SNR at which half of the above-floor notes drop.
    pub knee_snr_db: f64,
    /// Survivor onset jitter half-width in seconds.
    pub jitter_s: f64,
}

impl Default for MockParams {
    fn default() -> Self {
        MockParams {
            drop_floor: 0.02,
            steepness: 0.4,
            knee_snr_db: 6.0,
            jitter_s: 0.01,
        }
    }
}

impl MockParams {
    /// Per-note drop probability at a given SNR.
    pub fn drop_probability(&self, snr_db: f64) -> f64 {
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        self.drop_floor
            + (1.0 - self.drop_floor) * sigmoid(-self.steepness * (snr_db - self.knee_snr_db))
    }

    /// Analytic expectation of recall (the keep probability).
    pub fn expected_recall(&self, snr_db: f64) -> f64 {
        1.0 - self.drop_probability(snr_db)
    }

    /// Analytic expectation of F1 when jitter stays inside the matching
    /// tolerance: precision is 1, so F1 = 2q / (1 + q) with q the keep
    /// probability.
    pub fn expected_f1(&self, snr_db: f64) -> f64 {
        let q = self.expected_recall(snr_db);
        if q > 0.0 {
            2.0 * q / (1.0 + q)
        } else {
            0.0
        }
    }
}

/// Synthetic transcriber mimicking SNR-dependent degradation.
///
/// Deterministic in `seed`; notes are processed in the reference's sorted
/// order.
pub fn mock_transcriber(
    reference: &NoteList,
    snr_db: f64,
    params: &MockParams,
    seed: u64,
) -> NoteList {
    assert!(
        (0.0..=1.0).contains(&params.drop_floor),
        "drop floor must lie in [0, 1]"
    );
    assert!(params.steepness > 0.0, "steepness must be positive");
    assert!(params.jitter_s >= 0.0, "jitter must be non-negative");

    let p_drop = params.drop_probability(snr_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);

    let mut kept = Vec::new();
    for note in reference.iter() {
        let drop = unit() < p_drop;
        let jitter = (2.0 * unit() - 1.0) * params.jitter_s;
        if drop {
            continue;
        }
        // Shift onset and offset together so durations (and the
        // offset > onset invariant) survive; clamp into t >= 0.
        let shift = jitter.max(-note.onset_s);
        kept.push(NoteEvent {
            onset_s: note.onset_s + shift,
            offset_s: note.offset_s + shift,
            pitch: note.pitch,
            velocity: note.velocity,
        });
    }
    NoteList::from_events(kept)
}

/// A system under test: an external command or the built-in mock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum System {
    External(TranscriberSpec),
    Mock {
        system_id: String,
        params: MockParams,
    },
}

impl System {
    pub fn mock(system_id: impl Into<String>, params: MockParams) -> Self {
        System::Mock {
            system_id: system_id.into(),
            params,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            System::External(spec) => &spec.system_id,
            System::Mock { system_id, .. } => system_id,
        }
    }

    /// Everything that determines this system's output, for cache keys.
    pub(crate) fn fingerprint(&self) -> String {
        match self {
            System::External(spec) => format!(
                "external|{}|{:?}|{}",
                spec.command_template, spec.output_format, spec.timeout_s
            ),
            System::Mock { params, .. } => format!(
                "mock|{}|{}|{}|{}",
                params.drop_floor, params.steepness, params.knee_snr_db, params.jitter_s
            ),
        }
    }

    /// Whether running this system requires the noisy audio on disk.
    pub(crate) fn needs_audio_file(&self) -> bool {
        matches!(self, System::External(_))
    }
}
