//! White-noise injection at exact SNR, sweep grids, and the CNR sampling
//! policy for training-time augmentation.
//!
//! The mixing pipeline is: generate seeded noise, scale it to hit the target
//! SNR against the measured signal power, add, rescale the mixture back to
//! the signal's original RMS, then hard-clip to full scale. The renormalize
//! step scales signal and noise components equally, so the component power
//! ratio (and therefore the achieved SNR) is preserved; the clip count
//! quantifies any residual distortion.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError, ClipReport};
use crate::harness::Manifest;
use crate::jobs;
use crate::seed::{self, SeedHasher};
use crate::wav::{self, WavEncoding, WavError};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("silent signal: SNR is undefined when signal power is zero")]
    SilentSignal,
    #[error("noise power must be positive, got {0}")]
    NonPositiveNoisePower(f64),
    #[error("invalid SNR grid: {0}")]
    InvalidGrid(String),
    #[error("invalid CNR policy: {0}")]
    InvalidPolicy(String),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Wav(#[from] WavError),
}

/// Arithmetic SNR grid in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrGrid {
    pub lo_db: f64,
    pub hi_db: f64,
    pub step_db: f64,
}

/// Grids beyond this many levels are treated as malformed.
const MAX_GRID_LEVELS: f64 = 1e6;

impl SnrGrid {
    pub fn new(lo_db: f64, hi_db: f64, step_db: f64) -> Result<Self, AugmentError> {
        if !lo_db.is_finite() || !hi_db.is_finite() || lo_db > hi_db {
            return Err(AugmentError::InvalidGrid(format!(
                "bounds must be finite with lo <= hi, got {lo_db}..{hi_db}"
            )));
        }
        if !step_db.is_finite() || step_db <= 0.0 {
            return Err(AugmentError::InvalidGrid(format!(
                "step must be positive and finite, got {step_db}"
            )));
        }
        if (hi_db - lo_db) / step_db >= MAX_GRID_LEVELS {
            return Err(AugmentError::InvalidGrid(format!(
                "{lo_db}..{hi_db} by {step_db} exceeds {MAX_GRID_LEVELS} levels"
            )));
        }
        Ok(SnrGrid {
            lo_db,
            hi_db,
            step_db,
        })
    }

    /// The 18-level inference sweep grid: -6 dB to 45 dB in 3 dB steps.
    pub fn sweep_default() -> Self {
        SnrGrid {
            lo_db: -6.0,
            hi_db: 45.0,
            step_db: 3.0,
        }
    }

    /// Ascending grid levels: lo, lo+step, ..., up to hi.
    ///
    /// Fields can arrive unvalidated (deserialized or struct-literal
    /// grids); anything malformed yields no levels instead of looping.
    pub fn levels(&self) -> Vec<f64> {
        let span = (self.hi_db - self.lo_db) / self.step_db;
        if !(0.0..MAX_GRID_LEVELS).contains(&span) {
            return Vec::new();
        }
        // The epsilon keeps float accumulation from dropping an intended
        // final level (e.g. 0..0.3 by 0.1).
        let count = (span + 1e-9).floor() as u64 + 1;
        (0..count)
            .map(|i| {
                let v = self.lo_db + i as f64 * self.step_db;
                if v > self.hi_db {
                    self.hi_db
                } else {
                    v
                }
            })
            .collect()
    }

    /// True when `snr_db` coincides with a grid level.
    pub fn contains(&self, snr_db: f64) -> bool {
        self.levels().iter().any(|&l| (l - snr_db).abs() < 1e-9)
    }
}

impl Default for SnrGrid {
    fn default() -> Self {
        SnrGrid::sweep_default()
    }
}

/// Clean-to-noise ratio policy for training-time augmentation draws.
///
/// `cnr` is the proportion of clean to noise-injected audio;
/// `f64::INFINITY` means clean audio only. Noisy draws sample an SNR
/// uniformly from `[snr_lo_db, snr_hi_db]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnrPolicy {
    pub cnr: f64,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub seed: u64,
}

impl CnrPolicy {
    pub fn new(cnr: f64, seed: u64) -> Result<Self, AugmentError> {
        CnrPolicy::with_snr_range(cnr, 0.0, 24.0, seed)
    }

    pub fn with_snr_range(
        cnr: f64,
        snr_lo_db: f64,
        snr_hi_db: f64,
        seed: u64,
    ) -> Result<Self, AugmentError> {
        if cnr.is_nan() || cnr < 0.0 {
            return Err(AugmentError::InvalidPolicy(format!(
                "CNR must be non-negative or infinite, got {cnr}"
            )));
        }
        if snr_lo_db.is_nan() || snr_hi_db.is_nan() || snr_lo_db > snr_hi_db {
            return Err(AugmentError::InvalidPolicy(format!(
                "SNR range lo {snr_lo_db} exceeds hi {snr_hi_db}"
            )));
        }
        Ok(CnrPolicy {
            cnr,
            snr_lo_db,
            snr_hi_db,
            seed,
        })
    }

    /// Probability of drawing clean audio: cnr / (1 + cnr).
    pub fn clean_probability(&self) -> f64 {
        if self.cnr.is_infinite() {
            1.0
        } else {
            self.cnr / (1.0 + self.cnr)
        }
    }

    /// Decide clean-vs-noisy for one draw.
    ///
    /// Pure function of (seed, draw_index): repeated calls with the same
    /// index return the same decision, and indices can be consumed in any
    /// order or in parallel.
    pub fn sample_decision(&self, draw_index: u64) -> AugmentationDecision {
        let key = SeedHasher::new("cnr-draw")
            .u64(self.seed)
            .u64(draw_index)
            .finish();
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let u = unit_co(&mut rng);
        if u < self.clean_probability() {
            AugmentationDecision::Clean
        } else {
            let v = unit_co(&mut rng);
            AugmentationDecision::Noisy {
                snr_db: self.snr_lo_db + v * (self.snr_hi_db - self.snr_lo_db),
            }
        }
    }
}

/// Outcome of one CNR policy draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AugmentationDecision {
    Clean,
    Noisy { snr_db: f64 },
}

/// Bookkeeping for one noise injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixMetadata {
    pub target_snr_db: f64,
    pub achieved_snr_db: f64,
    pub noise_gain: f64,
    pub renorm_gain: f64,
    pub clip: ClipReport,
    pub noise_seed: u64,
}

/// Uniform in [0, 1): 53 random bits scaled by 2^-53.
fn unit_co(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Uniform in (0, 1]; safe under log().
fn unit_oc(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Seeded i.i.d. standard-normal noise.
///
/// Box-Muller over a ChaCha8 stream, with the transcendentals taken from
/// `libm` so the same seed yields bit-identical buffers on every platform.
pub fn white_noise(length: usize, sample_rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(length);
    while samples.len() < length {
        let u1 = unit_oc(&mut rng);
        let u2 = unit_co(&mut rng);
        let radius = (-2.0 * libm::log(u1)).sqrt();
        let theta = std::f64::consts::TAU * u2;
        samples.push(radius * libm::cos(theta));
        if samples.len() < length {
            samples.push(radius * libm::sin(theta));
        }
    }
    AudioBuffer::new(samples, sample_rate).expect("sample rate checked by callers")
}

/// Gain g such that mixing `g * noise` into the signal yields exactly
/// `snr_db`: g = sqrt(P_s / (P_n * 10^(snr/10))).
pub fn noise_gain_for_snr(
    signal_power: f64,
    noise_power: f64,
    snr_db: f64,
) -> Result<f64, AugmentError> {
    if signal_power <= 0.0 {
        return Err(AugmentError::SilentSignal);
    }
    if noise_power <= 0.0 {
        return Err(AugmentError::NonPositiveNoisePower(noise_power));
    }
    Ok((signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// Mix seeded white noise into `signal` at `snr_db`, restore the original
/// RMS, and hard-clip at `clip_limit`.
///
/// The achieved SNR in the metadata is measured from the separately tracked
/// signal and noise components after renormalization, before clipping.
pub fn inject_noise(
    signal: &AudioBuffer,
    snr_db: f64,
    noise_seed: u64,
    clip_limit: f64,
) -> Result<(AudioBuffer, MixMetadata), AugmentError> {
    let signal_power = signal.power()?;
    if signal_power == 0.0 {
        return Err(AugmentError::SilentSignal);
    }
    let noise = white_noise(signal.len(), signal.sample_rate(), noise_seed);
    let noise_power = noise.power()?;
    let noise_gain = noise_gain_for_snr(signal_power, noise_power, snr_db)?;
    let scaled_noise = noise.scale(noise_gain)?;
    let mix = signal.add(&scaled_noise);

    let renorm_gain = signal_power.sqrt() / mix.rms()?;
    let renormed = mix.scale(renorm_gain)?;

    let signal_component = signal.scale(renorm_gain)?;
    let noise_component = scaled_noise.scale(renorm_gain)?;
    let achieved_snr_db = 10.0 * (signal_component.power()? / noise_component.power()?).log10();

    let (out, clip) = renormed.hard_clip(clip_limit)?;
    Ok((
        out,
        MixMetadata {
            target_snr_db: snr_db,
            achieved_snr_db,
            noise_gain,
            renorm_gain,
            clip,
            noise_seed,
        },
    ))
}

/// dB level rendered for filenames: integer when whole ("-6", "45"),
/// decimal otherwise ("4.5").
pub fn format_snr_level(snr_db: f64) -> String {
    if snr_db.fract() == 0.0 {
        format!("{}", snr_db as i64)
    } else {
        format!("{snr_db}")
    }
}

/// Output WAV name for one (recording, level) cell.
pub fn augmented_filename(recording_id: &str, snr_db: f64) -> String {
    format!("{recording_id}__snr{}.wav", format_snr_level(snr_db))
}

/// Sidecar JSON written next to each augmented WAV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub source_id: String,
    pub target_snr_db: f64,
    pub achieved_snr_db: f64,
    pub noise_seed: u64,
    pub noise_gain: f64,
    pub renorm_gain: f64,
    pub clipped_sample_count: u64,
    pub total_sample_count: u64,
}

impl Sidecar {
    pub fn new(source_id: &str, meta: &MixMetadata) -> Self {
        Sidecar {
            source_id: source_id.to_string(),
            target_snr_db: meta.target_snr_db,
            achieved_snr_db: meta.achieved_snr_db,
            noise_seed: meta.noise_seed,
            noise_gain: meta.noise_gain,
            renorm_gain: meta.renorm_gain,
            clipped_sample_count: meta.clip.clipped_sample_count,
            total_sample_count: meta.clip.total_sample_count,
        }
    }
}

/// One successfully written (recording, level) cell.
#[derive(Debug, Clone)]
pub struct AugmentEntry {
    pub source_id: String,
    pub snr_db: f64,
    pub wav_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub metadata: MixMetadata,
}

/// A per-record failure that did not stop the run.
#[derive(Debug, Clone)]
pub struct AugmentFailure {
    pub source_id: String,
    pub snr_db: f64,
    pub reason: String,
}

/// Outcome of [`augment_corpus`]: entries sorted by (id, level).
#[derive(Debug, Default)]
pub struct CorpusReport {
    pub entries: Vec<AugmentEntry>,
    pub failures: Vec<AugmentFailure>,
}

/// Generate the full (recording x SNR level) augmented corpus.
///
/// Writes `<id>__snr<level>.wav` plus a JSON sidecar per cell. Noise seeds
/// are hashed from (master_seed, id, level), so output bytes are identical
/// for any processing order or worker count. Unreadable inputs are recorded
/// as failures and the run continues; an unwritable output directory is
/// fatal.
pub fn augment_corpus(
    manifest: &Manifest,
    grid: &SnrGrid,
    master_seed: u64,
    out_dir: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<CorpusReport, AugmentError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|source| AugmentError::OutputDir {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let levels = grid.levels();
    let jobs: Vec<(String, PathBuf, f64)> = manifest
        .records
        .iter()
        .flat_map(|rec| {
            levels
                .iter()
                .map(move |&snr| (rec.id.clone(), rec.audio_path.clone(), snr))
        })
        .collect();

    let results = jobs::map_jobs(jobs, |(id, audio_path, snr)| {
        augment_one(&id, &audio_path, snr, master_seed, out_dir, encoding).map_err(|e| {
            AugmentFailure {
                source_id: id.clone(),
                snr_db: snr,
                reason: e.to_string(),
            }
        })
    });

    let mut report = CorpusReport::default();
    for r in results {
        match r {
            Ok(entry) => report.entries.push(entry),
            Err(failure) => report.failures.push(failure),
        }
    }
    report.entries.sort_by(|a, b| {
        (&a.source_id, a.snr_db)
            .partial_cmp(&(&b.source_id, b.snr_db))
            .unwrap()
    });
    report.failures.sort_by(|a, b| {
        (&a.source_id, a.snr_db)
            .partial_cmp(&(&b.source_id, b.snr_db))
            .unwrap()
    });
    Ok(report)
}

fn augment_one(
    id: &str,
    audio_path: &Path,
    snr_db: f64,
    master_seed: u64,
    out_dir: &Path,
    encoding: WavEncoding,
) -> Result<AugmentEntry, AugmentError> {
    let signal = wav::read_wav(audio_path)?;
    let noise_seed = seed::noise_seed(master_seed, id, snr_db);
    let (mixed, metadata) = inject_noise(&signal, snr_db, noise_seed, 1.0)?;

    let wav_path = out_dir.join(augmented_filename(id, snr_db));
    wav::write_wav(&mixed, &wav_path, encoding)?;

    let sidecar_path = wav_path.with_extension("json");
    let sidecar = Sidecar::new(id, &metadata);
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&sidecar_path, json).map_err(|source| WavError::Io {
        path: sidecar_path.display().to_string(),
        source,
    })?;

    Ok(AugmentEntry {
        source_id: id.to_string(),
        snr_db,
        wav_path,
        sidecar_path,
        metadata,
    })
}
