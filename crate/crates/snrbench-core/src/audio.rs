//! Mono audio container and the power/RMS/gain/clip primitives.
//!
//! Samples are stored as `f64` at nominal full scale [-1.0, +1.0] and all
//! accumulations run in double precision, so gain/power algebra holds to
//! near machine precision even on long files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("empty buffer: power and RMS are undefined on zero samples")]
    EmptyBuffer,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite gain {0}")]
    NonFiniteGain(f64),
    #[error("clip limit must be positive, got {0}")]
    NonPositiveClipLimit(f64),
}

/// Mono sample sequence with sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

/// Count of samples saturated by [`AudioBuffer::hard_clip`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipReport {
    pub clipped_sample_count: u64,
    pub total_sample_count: u64,
}

impl ClipReport {
    pub fn any(&self) -> bool {
        self.clipped_sample_count > 0
    }
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean-square amplitude, (1/N)*sum(x_i^2).
    ///
    /// Computed over the whole buffer, leading/trailing silence included.
    pub fn power(&self) -> Result<f64, AudioError> {
        if self.samples.is_empty() {
            return Err(AudioError::EmptyBuffer);
        }
        let sum_sq: f64 = self.samples.iter().map(|&x| x * x).sum();
        Ok(sum_sq / self.samples.len() as f64)
    }

    /// Root-mean-square amplitude, sqrt(power).
    pub fn rms(&self) -> Result<f64, AudioError> {
        Ok(self.power()?.sqrt())
    }

    /// Multiply every sample by `gain`.
    pub fn scale(&self, gain: f64) -> Result<AudioBuffer, AudioError> {
        if !gain.is_finite() {
            return Err(AudioError::NonFiniteGain(gain));
        }
        Ok(AudioBuffer {
            samples: self.samples.iter().map(|&x| x * gain).collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Saturate samples to [-limit, +limit].
    ///
    /// Samples already in range are passed through bit-identically; the
    /// report counts samples with |x| > limit.
    pub fn hard_clip(&self, limit: f64) -> Result<(AudioBuffer, ClipReport), AudioError> {
        if limit.is_nan() || limit <= 0.0 {
            return Err(AudioError::NonPositiveClipLimit(limit));
        }
        let mut clipped = 0u64;
        let samples: Vec<f64> = self
            .samples
            .iter()
            .map(|&x| {
                if x > limit {
                    clipped += 1;
                    limit
                } else if x < -limit {
                    clipped += 1;
                    -limit
                } else {
                    x
                }
            })
            .collect();
        Ok((
            AudioBuffer {
                samples,
                sample_rate: self.sample_rate,
            },
            ClipReport {
                clipped_sample_count: clipped,
                total_sample_count: self.samples.len() as u64,
            },
        ))
    }

    /// Element-wise sum of two equal-length buffers.
    pub(crate) fn add(&self, other: &AudioBuffer) -> AudioBuffer {
        debug_assert_eq!(self.samples.len(), other.samples.len());
        AudioBuffer {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Deterministic test signal: `amplitude * sin(2*pi*freq*t)`.
pub fn sine(amplitude: f64, freq_hz: f64, duration_s: f64, sample_rate: u32) -> AudioBuffer {
    let n = (duration_s * f64::from(sample_rate)).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(sample_rate);
            amplitude * (2.0 * std::f64::consts::PI * freq_hz * t).sin()
        })
        .collect();
    AudioBuffer::new(samples, sample_rate).expect("sample rate must be positive")
}
