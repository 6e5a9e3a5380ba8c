//! End-to-end demonstration on a synthetic corpus: 5 seeded recordings,
//! the default 18-level SNR grid, and the built-in mock transcriber.
//!
//! Everything derives from the given seed, so two runs write byte-identical
//! sweep files and SVG regardless of worker count. Doubles as the fixture
//! behind the acceptance suite's determinism checks.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::harness::{self, load_manifest, MockParams, Split, SweepConfig, System};
use crate::notes::{NoteEvent, NoteList};
use crate::report;
use crate::seed::SeedHasher;
use crate::stats::Metric;
use crate::wav::{self, WavEncoding};

const RECORDINGS: usize = 5;
const SAMPLE_RATE: u32 = 16_000;
const DURATION_S: f64 = 2.0;
const NOTES_PER_RECORDING: usize = 40;

#[derive(Debug, Error)]
pub enum SelftestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} sweep cells failed; first: {1}")]
    CellFailures(usize, String),
    #[error("expected mock F1 curve is not monotone at {snr_db} dB")]
    NotMonotone { snr_db: f64 },
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error(transparent)]
    Wav(#[from] wav::WavError),
    #[error(transparent)]
    Midi(#[from] crate::midi::MidiError),
    #[error(transparent)]
    Report(#[from] crate::report::ReportError),
}

/// Artifacts written by [`run_selftest`].
#[derive(Debug)]
pub struct SelftestOutcome {
    pub sweep_json_path: PathBuf,
    pub sweep_csv_path: PathBuf,
    pub svg_path: PathBuf,
    pub cell_count: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SelftestError + '_ {
    move |source| SelftestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Deterministic synthetic recording: seeded random notes rendered as a
/// sum of decaying sinusoids.
fn synth_recording(seed: u64) -> (AudioBuffer, NoteList) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);

    let mut events = Vec::with_capacity(NOTES_PER_RECORDING);
    for _ in 0..NOTES_PER_RECORDING {
        let onset = unit() * (DURATION_S - 0.3);
        let duration = 0.1 + unit() * 0.2;
        let pitch = 36 + (unit() * 48.0) as u8;
        let velocity = 40 + (unit() * 80.0) as u8;
        events.push(
            NoteEvent::new(onset, onset + duration, pitch, Some(velocity))
                .expect("synthetic note is valid"),
        );
    }
    let notes = NoteList::from_events(events);

    let n = (DURATION_S * f64::from(SAMPLE_RATE)) as usize;
    let mut samples = vec![0.0f64; n];
    for note in notes.iter() {
        let freq = 440.0 * 2f64.powf((f64::from(note.pitch) - 69.0) / 12.0);
        let amp = 0.1 + f64::from(note.velocity.unwrap_or(64)) / 127.0 * 0.2;
        let start = (note.onset_s * f64::from(SAMPLE_RATE)) as usize;
        let end = ((note.offset_s + 0.05) * f64::from(SAMPLE_RATE)).min(n as f64) as usize;
        for (i, sample) in samples[start..end].iter_mut().enumerate() {
            let t = i as f64 / f64::from(SAMPLE_RATE);
            *sample += amp * (-4.0 * t).exp() * (std::f64::consts::TAU * freq * t).sin();
        }
    }
    // Normalize peak into comfortable headroom.
    let peak = samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak > 0.0 {
        let gain = 0.6 / peak;
        for s in &mut samples {
            *s *= gain;
        }
    }
    (
        AudioBuffer::new(samples, SAMPLE_RATE).expect("positive sample rate"),
        notes,
    )
}

/// Build the synthetic corpus, run the mock sweep, and write the sweep
/// JSON/CSV plus the F1 curve SVG into `out_dir`.
pub fn run_selftest(
    out_dir: impl AsRef<Path>,
    seed: u64,
    workers: Option<usize>,
) -> Result<SelftestOutcome, SelftestError> {
    let out_dir = out_dir.as_ref();
    let corpus_dir = out_dir.join("corpus");
    std::fs::create_dir_all(&corpus_dir).map_err(io_err(&corpus_dir))?;

    // Synthesize corpus + manifest.
    let mut manifest_csv = String::from("id,audio_filename,midi_filename,split\n");
    for idx in 0..RECORDINGS {
        let rec_seed = SeedHasher::new("selftest-recording")
            .u64(seed)
            .u64(idx as u64)
            .finish();
        let (audio, notes) = synth_recording(rec_seed);
        let id = format!("synth{idx:02}");
        let wav_path = corpus_dir.join(format!("{id}.wav"));
        let midi_path = corpus_dir.join(format!("{id}.mid"));
        wav::write_wav(&audio, &wav_path, WavEncoding::Float32)?;
        crate::midi::write_midi(&notes, &midi_path, 960, 500_000)?;
        manifest_csv.push_str(&format!("{id},{id}.wav,{id}.mid,test\n"));
    }
    let manifest_path = corpus_dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest_csv).map_err(io_err(&manifest_path))?;
    let manifest = load_manifest(&manifest_path, Some(Split::Test))?;

    // Mock-transcriber sweep over the default grid.
    let params = MockParams::default();
    let config = SweepConfig {
        master_seed: seed,
        workers,
        ..SweepConfig::default()
    };
    let systems = [System::mock("mock", params)];
    let sweep = harness::run_sweep(&manifest, &systems, &config)?;
    if !sweep.failures.is_empty() {
        return Err(SelftestError::CellFailures(
            sweep.failures.len(),
            sweep.failures[0].reason.clone(),
        ));
    }

    // The analytic expectation must be monotone non-decreasing in SNR.
    let mut last = f64::NEG_INFINITY;
    for snr in config.grid.levels() {
        let f1 = params.expected_f1(snr);
        if f1 < last {
            return Err(SelftestError::NotMonotone { snr_db: snr });
        }
        last = f1;
    }

    let sweep_json_path = out_dir.join("sweep.json");
    std::fs::write(&sweep_json_path, sweep.to_json_string()).map_err(io_err(&sweep_json_path))?;
    let sweep_csv_path = out_dir.join("sweep.csv");
    std::fs::write(&sweep_csv_path, sweep.to_csv_string()).map_err(io_err(&sweep_csv_path))?;

    let mut series = report::series_for_metric(&sweep, Metric::F1);
    series.push(report::PlotSeries::new(
        "mock (expected)",
        config
            .grid
            .levels()
            .into_iter()
            .map(|snr| report::PlotPoint {
                snr_db: snr,
                mean: params.expected_f1(snr),
                stderr: 0.0,
            })
            .collect(),
    ));
    let svg_path = out_dir.join("f1_curves.svg");
    report::render_snr_curves(&series, &svg_path)?;

    Ok(SelftestOutcome {
        sweep_json_path,
        sweep_csv_path,
        svg_path,
        cell_count: sweep.cell_count(),
    })
}
