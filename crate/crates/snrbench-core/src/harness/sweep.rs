//! The (system x recording x SNR) evaluation sweep.
//!
//! Each cell injects noise at a hash-derived seed, runs the system on the
//! noisy audio, and scores the transcription against the reference MIDI.
//! Cells are independent jobs over a bounded worker pool; results reduce in
//! deterministic key order, so serialized output is byte-identical for any
//! worker count or cache state. Noisy audio lives in a per-cell temp dir
//! and is deleted after transcription unless an audio directory is given.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use super::transcriber::{mock_transcriber, run_transcriber, System};
use super::HarnessError;
use crate::augment::{self, SnrGrid};
use crate::eval::{evaluate, EvalResult};
use crate::jobs;
use crate::notes::NoteList;
use crate::seed::{self, SeedHasher};
use crate::wav::{self, WavEncoding};

/// Sweep parameters. Everything that influences cell results is covered by
/// the cache key.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub grid: SnrGrid,
    pub master_seed: u64,
    pub onset_tolerance_s: f64,
    pub clip_limit: f64,
    pub audio_encoding: WavEncoding,
    pub cache_dir: Option<PathBuf>,
    /// Keep synthesized noisy audio here instead of deleting it.
    pub keep_audio_dir: Option<PathBuf>,
    /// Worker pool size; `None` uses the global default.
    pub workers: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: SnrGrid::sweep_default(),
            master_seed: 0,
            onset_tolerance_s: 0.05,
            clip_limit: 1.0,
            audio_encoding: WavEncoding::Float32,
            cache_dir: None,
            keep_audio_dir: None,
            workers: None,
        }
    }
}

/// Identity of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub system_id: String,
    pub recording_id: String,
    pub snr_db: f64,
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.system_id
            .cmp(&other.system_id)
            .then_with(|| self.recording_id.cmp(&other.recording_id))
            .then_with(|| self.snr_db.total_cmp(&other.snr_db))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A cell that failed; failures never abort sibling cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub system_id: String,
    pub recording_id: String,
    pub snr_db: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub master_seed: u64,
    pub grid: SnrGrid,
    pub tolerance_s: f64,
}

/// Full sweep outcome: scored cells in deterministic key order plus
/// recorded failures.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub metadata: SweepMetadata,
    cells: BTreeMap<CellKey, EvalResult>,
    pub failures: Vec<CellFailure>,
}

#[derive(Serialize, Deserialize)]
struct CellRow {
    system_id: String,
    recording_id: String,
    snr_db: f64,
    eval: EvalResult,
}

#[derive(Serialize, Deserialize)]
struct SweepFile {
    metadata: SweepMetadata,
    cells: Vec<CellRow>,
    failures: Vec<CellFailure>,
}

impl SweepResult {
    pub fn new(metadata: SweepMetadata) -> Self {
        SweepResult {
            metadata,
            cells: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    pub fn insert(&mut self, key: CellKey, eval: EvalResult) {
        self.cells.insert(key, eval);
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &EvalResult)> {
        self.cells.iter()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, key: &CellKey) -> Option<&EvalResult> {
        self.cells.get(key)
    }

    /// Distinct system ids, ascending. Cells sort by system first, so one
    /// pass over group boundaries suffices.
    pub fn system_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for key in self.cells.keys() {
            if out.last().map(String::as_str) != Some(key.system_id.as_str()) {
                out.push(key.system_id.clone());
            }
        }
        out
    }

    /// Deterministic pretty JSON document.
    pub fn to_json_string(&self) -> String {
        let file = SweepFile {
            metadata: self.metadata,
            cells: self
                .cells
                .iter()
                .map(|(k, &eval)| CellRow {
                    system_id: k.system_id.clone(),
                    recording_id: k.recording_id.clone(),
                    snr_db: k.snr_db,
                    eval,
                })
                .collect(),
            failures: self.failures.clone(),
        };
        serde_json::to_string_pretty(&file).expect("sweep result serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let file: SweepFile = serde_json::from_str(text)?;
        let mut result = SweepResult::new(file.metadata);
        for row in file.cells {
            result.insert(
                CellKey {
                    system_id: row.system_id,
                    recording_id: row.recording_id,
                    snr_db: row.snr_db,
                },
                row.eval,
            );
        }
        result.failures = file.failures;
        Ok(result)
    }

    /// Tidy CSV: one row per cell.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("system_id,recording_id,snr_db,tp,fp,fn,precision,recall,f1\n");
        for (key, eval) in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                csv_field(&key.system_id),
                csv_field(&key.recording_id),
                key.snr_db,
                eval.true_positives,
                eval.false_positives,
                eval.false_negatives,
                eval.precision,
                eval.recall,
                eval.f1
            ));
        }
        out
    }

    /// Parse cells back out of the tidy CSV (metadata is JSON-only).
    pub fn cells_from_csv(text: &str) -> Result<Vec<(CellKey, EvalResult)>, HarnessError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| HarnessError::Schema(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| HarnessError::Schema(format!("missing column {name}")))
        };
        let (c_sys, c_rec, c_snr) = (col("system_id")?, col("recording_id")?, col("snr_db")?);
        let (c_tp, c_fp, c_fn) = (col("tp")?, col("fp")?, col("fn")?);
        let mut out = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| HarnessError::Schema(format!("row {}: {e}", i + 2)))?;
            let get = |idx: usize| row.get(idx).unwrap_or("");
            let parse_err = |what: &str| HarnessError::Schema(format!("row {}: bad {what}", i + 2));
            let key = CellKey {
                system_id: get(c_sys).to_string(),
                recording_id: get(c_rec).to_string(),
                snr_db: get(c_snr).parse().map_err(|_| parse_err("snr_db"))?,
            };
            let eval = EvalResult::from_counts(
                get(c_tp).parse().map_err(|_| parse_err("tp"))?,
                get(c_fp).parse().map_err(|_| parse_err("fp"))?,
                get(c_fn).parse().map_err(|_| parse_err("fn"))?,
            );
            out.push((key, eval));
        }
        Ok(out)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Everything that determines a cell's result; stored inside each cache
/// entry and verified on read, so stale or colliding entries are recomputed
/// rather than trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheParams {
    system_fingerprint: String,
    recording_id: String,
    snr_db: f64,
    master_seed: u64,
    tolerance_s: f64,
    clip_limit: f64,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    params: CacheParams,
    eval: EvalResult,
}

fn sanitize(component: &str) -> String {
    component
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cache_path(dir: &Path, system_id: &str, params: &CacheParams) -> PathBuf {
    let hash = SeedHasher::new("cache")
        .str(&params.system_fingerprint)
        .str(&params.recording_id)
        .f64(params.snr_db)
        .u64(params.master_seed)
        .f64(params.tolerance_s)
        .f64(params.clip_limit)
        .finish();
    dir.join(format!(
        "{}__{}__snr{}__{hash:016x}.json",
        sanitize(system_id),
        sanitize(&params.recording_id),
        augment::format_snr_level(params.snr_db),
    ))
}

fn cache_lookup(path: &Path, params: &CacheParams) -> Option<EvalResult> {
    let bytes = std::fs::read(path).ok()?;
    let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
    (entry.params == *params).then_some(entry.eval)
}

/// Atomic write: temp file in the same directory, then rename.
fn cache_store(dir: &Path, path: &Path, params: &CacheParams, eval: EvalResult) {
    let entry = CacheEntry {
        params: params.clone(),
        eval,
    };
    let Ok(json) = serde_json::to_vec_pretty(&entry) else {
        return;
    };
    let Ok(mut tmp) = tempfile::NamedTempFile::new_in(dir) else {
        return;
    };
    use std::io::Write;
    if tmp.write_all(&json).is_ok() {
        let _ = tmp.persist(path);
    }
}

/// Run the full sweep. Per-cell failures are recorded, not fatal.
pub fn run_sweep(
    manifest: &Manifest,
    systems: &[System],
    config: &SweepConfig,
) -> Result<SweepResult, HarnessError> {
    if manifest.is_empty() {
        return Err(HarnessError::EmptyManifest);
    }
    if systems.is_empty() {
        return Err(HarnessError::InvalidSpec("no systems given".into()));
    }
    let mut ids = HashSet::new();
    for system in systems {
        if !ids.insert(system.id()) {
            return Err(HarnessError::InvalidSpec(format!(
                "duplicate system id {:?}",
                system.id()
            )));
        }
    }
    if let Some(dir) = &config.cache_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    if let Some(dir) = &config.keep_audio_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }

    let levels = config.grid.levels();
    let mut sweep_jobs: Vec<(usize, usize, f64)> =
        Vec::with_capacity(systems.len() * manifest.records.len() * levels.len());
    for s in 0..systems.len() {
        for r in 0..manifest.records.len() {
            for &snr in &levels {
                sweep_jobs.push((s, r, snr));
            }
        }
    }

    let outcomes = jobs::with_workers(config.workers, || {
        // References parse once per recording, inside the pool.
        let references: Vec<Result<NoteList, String>> =
            jobs::map_jobs(manifest.records.iter().collect::<Vec<_>>(), |record| {
                crate::midi::read_midi(&record.midi_path).map_err(|e| e.to_string())
            });
        jobs::map_jobs(sweep_jobs, |(s, r, snr)| {
            let record = &manifest.records[r];
            let system = &systems[s];
            let key = CellKey {
                system_id: system.id().to_string(),
                recording_id: record.id.clone(),
                snr_db: snr,
            };
            match run_cell(system, record, &references[r], snr, config) {
                Ok(eval) => Ok((key, eval)),
                Err(e) => Err(CellFailure {
                    system_id: key.system_id,
                    recording_id: key.recording_id,
                    snr_db: snr,
                    reason: e.to_string(),
                }),
            }
        })
    });

    let mut result = SweepResult::new(SweepMetadata {
        master_seed: config.master_seed,
        grid: config.grid,
        tolerance_s: config.onset_tolerance_s,
    });
    for outcome in outcomes {
        match outcome {
            Ok((key, eval)) => result.insert(key, eval),
            Err(failure) => result.failures.push(failure),
        }
    }
    result.failures.sort_by(|a, b| {
        (&a.system_id, &a.recording_id)
            .cmp(&(&b.system_id, &b.recording_id))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    Ok(result)
}

fn run_cell(
    system: &System,
    record: &super::manifest::ManifestRecord,
    reference: &Result<NoteList, String>,
    snr_db: f64,
    config: &SweepConfig,
) -> Result<EvalResult, HarnessError> {
    let params = CacheParams {
        system_fingerprint: system.fingerprint(),
        recording_id: record.id.clone(),
        snr_db,
        master_seed: config.master_seed,
        tolerance_s: config.onset_tolerance_s,
        clip_limit: config.clip_limit,
    };
    let cached_path = config
        .cache_dir
        .as_deref()
        .map(|dir| cache_path(dir, system.id(), &params));
    if let Some(path) = &cached_path {
        if let Some(eval) = cache_lookup(path, &params) {
            return Ok(eval);
        }
    }

    let reference = reference
        .as_ref()
        .map_err(|e| HarnessError::Schema(format!("reference MIDI unreadable: {e}")))?;

    let signal = wav::read_wav(&record.audio_path)?;
    let noise_seed = seed::noise_seed(config.master_seed, &record.id, snr_db);
    let (noisy, _meta) = augment::inject_noise(&signal, snr_db, noise_seed, config.clip_limit)?;

    // Synthesize the noisy WAV where the system (or the keep-audio request)
    // needs it; otherwise skip the disk round-trip.
    let mut tempdir = None;
    let noisy_path = match (&config.keep_audio_dir, system.needs_audio_file()) {
        (Some(dir), _) => {
            let path = dir.join(augment::augmented_filename(&record.id, snr_db));
            wav::write_wav(&noisy, &path, config.audio_encoding)?;
            Some(path)
        }
        (None, true) => {
            let dir = tempfile::tempdir().map_err(|source| HarnessError::Io {
                path: "tempdir".into(),
                source,
            })?;
            let path = dir
                .path()
                .join(augment::augmented_filename(&record.id, snr_db));
            wav::write_wav(&noisy, &path, config.audio_encoding)?;
            tempdir = Some(dir);
            Some(path)
        }
        (None, false) => None,
    };

    let estimate = match system {
        System::External(spec) => {
            let path = noisy_path.as_deref().expect("external systems get audio");
            let work_dir = path.parent().unwrap_or(Path::new("."));
            run_transcriber(spec, path, work_dir)?
        }
        System::Mock { system_id, params } => {
            let mock_seed = SeedHasher::new("mock")
                .u64(config.master_seed)
                .str(system_id)
                .str(&record.id)
                .f64(snr_db)
                .finish();
            mock_transcriber(reference, snr_db, params, mock_seed)
        }
    };
    drop(tempdir);

    let eval = evaluate(reference, &estimate, config.onset_tolerance_s);
    if let (Some(dir), Some(path)) = (config.cache_dir.as_deref(), &cached_path) {
        cache_store(dir, path, &params, eval);
    }
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_keys_order_by_system_recording_then_snr() {
        let k = |s: &str, r: &str, snr: f64| CellKey {
            system_id: s.into(),
            recording_id: r.into(),
            snr_db: snr,
        };
        let mut keys = [
            k("b", "r1", -6.0),
            k("a", "r2", 0.0),
            k("a", "r1", 45.0),
            k("a", "r1", -6.0),
        ];
        keys.sort();
        assert_eq!(
            keys.iter()
                .map(|x| (x.system_id.as_str(), x.recording_id.as_str(), x.snr_db))
                .collect::<Vec<_>>(),
            vec![
                ("a", "r1", -6.0),
                ("a", "r1", 45.0),
                ("a", "r2", 0.0),
                ("b", "r1", -6.0)
            ]
        );
    }

    #[test]
    fn system_ids_are_distinct_and_sorted() {
        let mut result = SweepResult::new(SweepMetadata {
            master_seed: 0,
            grid: SnrGrid::sweep_default(),
            tolerance_s: 0.05,
        });
        for (sys, rec, snr) in [("b", "r1", 0.0), ("a", "r1", 0.0), ("a", "r2", 3.0)] {
            result.insert(
                CellKey {
                    system_id: sys.into(),
                    recording_id: rec.into(),
                    snr_db: snr,
                },
                EvalResult::from_counts(1, 0, 0),
            );
        }
        assert_eq!(result.system_ids(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let mut result = SweepResult::new(SweepMetadata {
            master_seed: 42,
            grid: SnrGrid::sweep_default(),
            tolerance_s: 0.05,
        });
        result.insert(
            CellKey {
                system_id: "sys".into(),
                recording_id: "rec".into(),
                snr_db: -6.0,
            },
            EvalResult::from_counts(8, 2, 1),
        );
        result.failures.push(CellFailure {
            system_id: "sys".into(),
            recording_id: "bad".into(),
            snr_db: 0.0,
            reason: "unreadable".into(),
        });
        let json = result.to_json_string();
        let back = SweepResult::from_json_str(&json).unwrap();
        assert_eq!(back, result);
        assert_eq!(back.to_json_string(), json);
    }

    #[test]
    fn csv_cells_round_trip() {
        let mut result = SweepResult::new(SweepMetadata {
            master_seed: 1,
            grid: SnrGrid::sweep_default(),
            tolerance_s: 0.05,
        });
        let key = CellKey {
            system_id: "s,ys".into(),
            recording_id: "rec".into(),
            snr_db: 4.5,
        };
        result.insert(key.clone(), EvalResult::from_counts(3, 1, 2));
        let csv_text = result.to_csv_string();
        let cells = SweepResult::cells_from_csv(&csv_text).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].0, key);
        assert_eq!(cells[0].1, EvalResult::from_counts(3, 1, 2));
    }

    #[test]
    fn cache_entry_round_trips_and_rejects_mismatched_params() {
        let dir = tempfile::tempdir().unwrap();
        let params = CacheParams {
            system_fingerprint: "mock|x".into(),
            recording_id: "rec".into(),
            snr_db: 3.0,
            master_seed: 7,
            tolerance_s: 0.05,
            clip_limit: 1.0,
        };
        let path = cache_path(dir.path(), "sys", &params);
        let eval = EvalResult::from_counts(5, 0, 0);
        cache_store(dir.path(), &path, &params, eval);
        assert_eq!(cache_lookup(&path, &params), Some(eval));

        let mut other = params.clone();
        other.master_seed = 8;
        assert_eq!(cache_lookup(&path, &other), None);
    }
}
