//! End-to-end harness behavior with real subprocess transcribers:
//! identity transcription, cache idempotence, failure isolation, and
//! worker-count independence.

use std::fs;
use std::path::{Path, PathBuf};

use snrbench_core::audio::sine;
use snrbench_core::augment::SnrGrid;
use snrbench_core::harness::{
    load_manifest, run_sweep, NotesFormat, Split, SweepConfig, SweepResult, System, TranscriberSpec,
};
use snrbench_core::midi::write_midi;
use snrbench_core::notes::{write_notes_tsv, NoteEvent, NoteList};
use snrbench_core::selftest::run_selftest;
use snrbench_core::wav::{write_wav, WavEncoding};

/// Three tiny recordings with references in both MIDI (for the manifest)
/// and TSV (for the identity transcriber to copy).
fn build_corpus(dir: &Path) -> PathBuf {
    let refs_dir = dir.join("refs");
    fs::create_dir_all(&refs_dir).unwrap();
    let mut manifest = String::from("id,audio_filename,midi_filename,split\n");
    for idx in 0..3u8 {
        let id = format!("rec{idx:02}");
        let notes = NoteList::from_events(
            (0..10)
                .map(|n| {
                    NoteEvent::new(
                        0.05 + 0.08 * f64::from(n) + 0.01 * f64::from(idx),
                        0.05 + 0.08 * f64::from(n) + 0.05 + 0.01 * f64::from(idx),
                        60 + n + idx,
                        Some(80),
                    )
                    .unwrap()
                })
                .collect::<Vec<_>>(),
        );
        let audio = sine(
            0.4 + 0.1 * f64::from(idx),
            330.0 + 110.0 * f64::from(idx),
            1.0,
            8_000,
        );
        write_wav(&audio, dir.join(format!("{id}.wav")), WavEncoding::Float32).unwrap();
        write_midi(&notes, dir.join(format!("{id}.mid")), 960, 500_000).unwrap();
        // The tick-quantized reference is what evaluation will parse, so
        // the identity TSV must hold the same quantized notes.
        let quantized = snrbench_core::midi::read_midi(dir.join(format!("{id}.mid"))).unwrap();
        write_notes_tsv(&quantized, refs_dir.join(format!("{id}.tsv"))).unwrap();
        manifest.push_str(&format!("{id},{id}.wav,{id}.mid,test\n"));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).unwrap();
    path
}

/// Identity transcriber: copies the reference TSV matching the recording id
/// embedded in the noisy file name, and logs each invocation.
fn identity_system(refs_dir: &Path, log: &Path) -> System {
    let template = format!(
        "b=$(basename {{input}}); id=${{b%%__*}}; echo run >> {log}; cp {refs}/$id.tsv {{output}}",
        log = log.display(),
        refs = refs_dir.display(),
    );
    System::External(TranscriberSpec::new("identity", template, NotesFormat::Tsv, 30.0).unwrap())
}

fn invocation_count(log: &Path) -> usize {
    fs::read_to_string(log)
        .map(|t| t.lines().count())
        .unwrap_or(0)
}

#[test]
fn identity_transcriber_scores_perfectly_and_cache_skips_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = build_corpus(dir.path());
    let manifest = load_manifest(&manifest_path, Some(Split::Test)).unwrap();
    let log = dir.path().join("invocations.log");
    let systems = [identity_system(&dir.path().join("refs"), &log)];

    let config = SweepConfig {
        grid: SnrGrid::new(0.0, 6.0, 3.0).unwrap(),
        master_seed: 11,
        cache_dir: Some(dir.path().join("cache")),
        ..SweepConfig::default()
    };
    let cold = run_sweep(&manifest, &systems, &config).unwrap();
    assert_eq!(cold.cell_count(), 9);
    assert!(cold.failures.is_empty(), "{:?}", cold.failures);
    for (_, eval) in cold.cells() {
        assert_eq!((eval.precision, eval.recall, eval.f1), (1.0, 1.0, 1.0));
    }
    let cold_invocations = invocation_count(&log);
    assert_eq!(cold_invocations, 9);

    // Warm rerun: zero transcriber invocations, byte-identical result.
    let warm = run_sweep(&manifest, &systems, &config).unwrap();
    assert_eq!(invocation_count(&log), cold_invocations);
    assert_eq!(warm.to_json_string(), cold.to_json_string());

    // Same inputs without the cache recompute to the same cells.
    let uncached = run_sweep(
        &manifest,
        &systems,
        &SweepConfig {
            cache_dir: None,
            ..config.clone()
        },
    )
    .unwrap();
    assert_eq!(uncached.to_json_string(), cold.to_json_string());
}

#[test]
fn midi_output_transcribers_parse_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = build_corpus(dir.path());
    let manifest = load_manifest(&manifest_path, None).unwrap();
    // Copies the reference MIDI itself as the "transcription".
    let template = format!(
        "b=$(basename {{input}}); id=${{b%%__*}}; cp {}/$id.mid {{output}}",
        dir.path().display(),
    );
    let systems = [System::External(
        TranscriberSpec::new("midicopy", template, NotesFormat::Midi, 30.0).unwrap(),
    )];
    let config = SweepConfig {
        grid: SnrGrid::new(0.0, 3.0, 3.0).unwrap(),
        master_seed: 3,
        ..SweepConfig::default()
    };
    let sweep = run_sweep(&manifest, &systems, &config).unwrap();
    assert!(sweep.failures.is_empty(), "{:?}", sweep.failures);
    for (_, eval) in sweep.cells() {
        assert_eq!((eval.precision, eval.recall, eval.f1), (1.0, 1.0, 1.0));
    }
}

#[test]
fn injected_failures_are_isolated_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = build_corpus(dir.path());
    let manifest = load_manifest(&manifest_path, None).unwrap();
    let refs = dir.path().join("refs");
    // Fails for rec01 only.
    let template = format!(
        "b=$(basename {{input}}); id=${{b%%__*}}; \
         case $id in rec01) echo kaput >&2; exit 3;; esac; \
         cp {refs}/$id.tsv {{output}}",
        refs = refs.display(),
    );
    let systems = [System::External(
        TranscriberSpec::new("flaky", template, NotesFormat::Tsv, 30.0).unwrap(),
    )];
    let config = SweepConfig {
        grid: SnrGrid::new(0.0, 9.0, 3.0).unwrap(),
        master_seed: 5,
        ..SweepConfig::default()
    };
    let sweep = run_sweep(&manifest, &systems, &config).unwrap();
    // 3 recordings x 4 levels; rec01's 4 cells fail, the other 8 succeed.
    assert_eq!(sweep.cell_count(), 8);
    assert_eq!(sweep.failures.len(), 4);
    for failure in &sweep.failures {
        assert_eq!(failure.recording_id, "rec01");
        assert!(failure.reason.contains("kaput"), "{}", failure.reason);
    }
}

#[test]
fn mock_sweep_is_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = build_corpus(dir.path());
    let manifest = load_manifest(&manifest_path, None).unwrap();
    let systems = [System::mock("mock", Default::default())];
    let run = |workers: Option<usize>| {
        let config = SweepConfig {
            grid: SnrGrid::new(-6.0, 12.0, 3.0).unwrap(),
            master_seed: 21,
            workers,
            ..SweepConfig::default()
        };
        run_sweep(&manifest, &systems, &config)
            .unwrap()
            .to_json_string()
    };
    let single = run(Some(1));
    assert_eq!(single, run(Some(4)));
    assert_eq!(single, run(None));
}

#[test]
fn unreadable_audio_is_a_per_cell_failure() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = build_corpus(dir.path());
    fs::remove_file(dir.path().join("rec02.wav")).unwrap();
    let manifest = load_manifest(&manifest_path, None).unwrap();
    let systems = [System::mock("mock", Default::default())];
    let config = SweepConfig {
        grid: SnrGrid::new(0.0, 3.0, 3.0).unwrap(),
        master_seed: 2,
        ..SweepConfig::default()
    };
    let sweep = run_sweep(&manifest, &systems, &config).unwrap();
    assert_eq!(sweep.cell_count(), 4);
    assert_eq!(sweep.failures.len(), 2);
    assert!(sweep.failures.iter().all(|f| f.recording_id == "rec02"));
}

#[test]
fn keep_audio_writes_sidecar_named_wavs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = build_corpus(dir.path());
    let manifest = load_manifest(&manifest_path, None).unwrap();
    let audio_dir = dir.path().join("noisy");
    let systems = [System::mock("mock", Default::default())];
    let config = SweepConfig {
        grid: SnrGrid::new(-6.0, 0.0, 3.0).unwrap(),
        master_seed: 2,
        keep_audio_dir: Some(audio_dir.clone()),
        ..SweepConfig::default()
    };
    run_sweep(&manifest, &systems, &config).unwrap();
    for id in ["rec00", "rec01", "rec02"] {
        for level in ["-6", "-3", "0"] {
            let path = audio_dir.join(format!("{id}__snr{level}.wav"));
            assert!(path.is_file(), "missing {}", path.display());
        }
    }
}

#[test]
fn selftest_artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_selftest(dir.path().join("a"), 123, Some(2)).unwrap();
    let b = run_selftest(dir.path().join("b"), 123, Some(7)).unwrap();
    assert_eq!(a.cell_count, 90);
    let read = |p: &Path| fs::read(p).unwrap();
    assert_eq!(read(&a.sweep_json_path), read(&b.sweep_json_path));
    assert_eq!(read(&a.sweep_csv_path), read(&b.sweep_csv_path));
    assert_eq!(read(&a.svg_path), read(&b.svg_path));

    // Different seed, different bytes.
    let c = run_selftest(dir.path().join("c"), 124, None).unwrap();
    assert_ne!(read(&a.sweep_json_path), read(&c.sweep_json_path));
}

#[test]
fn report_consumes_exactly_what_sweep_writes() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_selftest(dir.path(), 5, None).unwrap();
    let json_text = fs::read_to_string(&outcome.sweep_json_path).unwrap();
    let sweep = SweepResult::from_json_str(&json_text).unwrap();

    let csv_text = fs::read_to_string(&outcome.sweep_csv_path).unwrap();
    let csv_cells = SweepResult::cells_from_csv(&csv_text).unwrap();
    assert_eq!(csv_cells.len(), sweep.cell_count());
    for (key, eval) in &csv_cells {
        assert_eq!(sweep.get(key), Some(eval));
    }

    // Both routes feed the renderer.
    let from_json =
        snrbench_core::report::series_for_metric(&sweep, snrbench_core::stats::Metric::F1);
    let from_csv = snrbench_core::report::series_from_cell_pairs(
        csv_cells.iter().map(|(k, e)| (k, e)),
        snrbench_core::stats::Metric::F1,
    );
    assert_eq!(from_json, from_csv);
    let svg = snrbench_core::report::snr_curves_svg(&from_csv).unwrap();
    assert!(svg.contains("<polyline"));
}
