//! Corpus augmentation: file layout, sidecar schema, determinism, and
//! order independence of the hash-derived noise seeds.

use std::fs;
use std::path::Path;

use snrbench_core::audio::sine;
use snrbench_core::augment::{augment_corpus, SnrGrid};
use snrbench_core::harness::{load_manifest, Manifest, Split};
use snrbench_core::wav::{write_wav, WavEncoding};

fn two_record_manifest(dir: &Path) -> Manifest {
    let a = sine(0.4, 220.0, 0.5, 8_000);
    let b = sine(0.6, 440.0, 0.5, 8_000);
    write_wav(&a, dir.join("first.wav"), WavEncoding::Float32).unwrap();
    write_wav(&b, dir.join("second.wav"), WavEncoding::Float32).unwrap();
    let manifest_path = dir.join("m.csv");
    fs::write(
        &manifest_path,
        "id,audio_filename,midi_filename,split\n\
         first,first.wav,first.mid,test\n\
         second,second.wav,second.mid,test\n",
    )
    .unwrap();
    load_manifest(&manifest_path, Some(Split::Test)).unwrap()
}

#[test]
fn default_grid_writes_36_wavs_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = two_record_manifest(dir.path());
    let out = dir.path().join("aug");
    let report = augment_corpus(
        &manifest,
        &SnrGrid::sweep_default(),
        7,
        &out,
        WavEncoding::Float32,
    )
    .unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.entries.len(), 36);
    let wavs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .and_then(|x| x.to_str())
                == Some("wav")
        })
        .count();
    let sidecars = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .and_then(|x| x.to_str())
                == Some("json")
        })
        .count();
    assert_eq!((wavs, sidecars), (36, 36));
    assert!(out.join("first__snr-6.wav").is_file());
    assert!(out.join("first__snr45.wav").is_file());
    assert!(out.join("second__snr0.json").is_file());

    // Pinned sidecar schema.
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("first__snr-6.json")).unwrap()).unwrap();
    for field in [
        "source_id",
        "target_snr_db",
        "achieved_snr_db",
        "noise_seed",
        "noise_gain",
        "renorm_gain",
        "clipped_sample_count",
        "total_sample_count",
    ] {
        assert!(sidecar.get(field).is_some(), "sidecar missing {field}");
    }
    assert_eq!(sidecar["source_id"], "first");
    assert_eq!(sidecar["target_snr_db"], -6.0);
    let achieved = sidecar["achieved_snr_db"].as_f64().unwrap();
    assert!((achieved + 6.0).abs() <= 0.05);
}

#[test]
fn reruns_and_reversed_order_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = two_record_manifest(dir.path());
    let grid = SnrGrid::new(-6.0, 6.0, 3.0).unwrap();

    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    let out3 = dir.path().join("run3");
    augment_corpus(&manifest, &grid, 99, &out1, WavEncoding::Float32).unwrap();
    augment_corpus(&manifest, &grid, 99, &out2, WavEncoding::Float32).unwrap();

    let mut reversed = manifest.clone();
    reversed.records.reverse();
    augment_corpus(&reversed, &grid, 99, &out3, WavEncoding::Float32).unwrap();

    for entry in fs::read_dir(&out1).unwrap() {
        let name = entry.unwrap().file_name();
        let bytes1 = fs::read(out1.join(&name)).unwrap();
        assert_eq!(
            bytes1,
            fs::read(out2.join(&name)).unwrap(),
            "{name:?} rerun"
        );
        assert_eq!(
            bytes1,
            fs::read(out3.join(&name)).unwrap(),
            "{name:?} reversed"
        );
    }

    // A different master seed changes the noise.
    let out4 = dir.path().join("run4");
    augment_corpus(&manifest, &grid, 100, &out4, WavEncoding::Float32).unwrap();
    assert_ne!(
        fs::read(out1.join("first__snr0.wav")).unwrap(),
        fs::read(out4.join("first__snr0.wav")).unwrap()
    );
}

#[test]
fn unreadable_input_is_collected_and_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = two_record_manifest(dir.path());
    fs::remove_file(dir.path().join("second.wav")).unwrap();
    let grid = SnrGrid::new(0.0, 3.0, 3.0).unwrap();
    let report = augment_corpus(
        &manifest,
        &grid,
        1,
        dir.path().join("aug"),
        WavEncoding::Float32,
    )
    .unwrap();
    assert_eq!(report.entries.len(), 2);
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures.iter().all(|f| f.source_id == "second"));
}

#[test]
fn unwritable_out_dir_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = two_record_manifest(dir.path());
    let blocked = dir.path().join("blocked");
    fs::write(&blocked, b"a file, not a directory").unwrap();
    let grid = SnrGrid::new(0.0, 3.0, 3.0).unwrap();
    let result = augment_corpus(
        &manifest,
        &grid,
        1,
        blocked.join("sub"),
        WavEncoding::Float32,
    );
    assert!(result.is_err());
}

#[test]
fn pcm16_output_is_also_readable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = two_record_manifest(dir.path());
    let grid = SnrGrid::new(12.0, 12.0, 3.0).unwrap();
    let out = dir.path().join("aug");
    let report = augment_corpus(&manifest, &grid, 5, &out, WavEncoding::Pcm16).unwrap();
    assert_eq!(report.entries.len(), 2);
    let back = snrbench_core::wav::read_wav(out.join("first__snr12.wav")).unwrap();
    assert_eq!(back.sample_rate(), 8_000);
    assert!(back.samples().iter().all(|x| x.abs() <= 1.0));
}
