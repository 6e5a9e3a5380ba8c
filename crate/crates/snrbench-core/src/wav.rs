//! RIFF/WAVE reader and writer for PCM 16-bit and IEEE float 32-bit data.
//!
//! Reading downmixes multichannel material to mono by per-frame arithmetic
//! mean. Writing emits mono files. Anything outside those two encodings is
//! rejected with an explicit unsupported-codec error rather than guessed at.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::audio::AudioBuffer;

/// Refuse to slurp files larger than this; the toolkit holds whole
/// recordings in memory.
const MAX_DATA_BYTES: u64 = 1 << 30;

const TAG_PCM: u16 = 1;
const TAG_IEEE_FLOAT: u16 = 3;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {chunk} chunk: {detail}")]
    Format { chunk: &'static str, detail: String },
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("data chunk of {0} bytes exceeds the {MAX_DATA_BYTES}-byte limit")]
    TooLarge(u64),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}

/// Sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, chunk: &'static str) -> Result<&'a [u8], WavError> {
        if self.pos + n > self.bytes.len() {
            return Err(WavError::Format {
                chunk,
                detail: format!(
                    "needs {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, chunk: &'static str) -> Result<u16, WavError> {
        let b = self.take(2, chunk)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, chunk: &'static str) -> Result<u32, WavError> {
        let b = self.take(4, chunk)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Read a WAV file, downmixing to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if meta.len() > MAX_DATA_BYTES {
        return Err(WavError::TooLarge(meta.len()));
    }
    let bytes = fs::read(path).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_wav(&bytes)
}

/// Decode WAV bytes, downmixing to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "RIFF")? != b"RIFF" {
        return Err(WavError::Format {
            chunk: "RIFF",
            detail: "missing RIFF magic".into(),
        });
    }
    let _riff_size = cur.u32("RIFF")?;
    if cur.take(4, "RIFF")? != b"WAVE" {
        return Err(WavError::Format {
            chunk: "RIFF",
            detail: "missing WAVE form type".into(),
        });
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while cur.pos + 8 <= bytes.len() {
        let id: [u8; 4] = cur.take(4, "chunk header")?.try_into().unwrap();
        let size = cur.u32("chunk header")? as usize;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(WavError::Format {
                        chunk: "fmt ",
                        detail: format!("chunk size {size} < 16"),
                    });
                }
                let body = cur.take(size, "fmt ")?;
                let mut f = Cursor {
                    bytes: body,
                    pos: 0,
                };
                fmt = Some(FmtChunk {
                    format_tag: f.u16("fmt ")?,
                    channels: f.u16("fmt ")?,
                    sample_rate: f.u32("fmt ")?,
                    bits_per_sample: {
                        let _byte_rate = f.u32("fmt ")?;
                        let _block_align = f.u16("fmt ")?;
                        f.u16("fmt ")?
                    },
                });
            }
            b"data" => {
                data = Some(cur.take(size, "data")?);
            }
            _ => {
                // fact, LIST, cue, ...: skip.
                cur.take(size, "chunk body")?;
            }
        }
        if size % 2 == 1 && cur.pos < bytes.len() {
            cur.pos += 1; // chunks are word-aligned
        }
    }

    let fmt = fmt.ok_or(WavError::Format {
        chunk: "fmt ",
        detail: "chunk missing".into(),
    })?;
    let data = data.ok_or(WavError::Format {
        chunk: "data",
        detail: "chunk missing".into(),
    })?;
    if fmt.channels == 0 {
        return Err(WavError::Format {
            chunk: "fmt ",
            detail: "zero channels".into(),
        });
    }
    if fmt.sample_rate == 0 {
        return Err(WavError::Format {
            chunk: "fmt ",
            detail: "zero sample rate".into(),
        });
    }

    let interleaved: Vec<f64> = match (fmt.format_tag, fmt.bits_per_sample) {
        (TAG_PCM, 16) => {
            if !data.len().is_multiple_of(2) {
                return Err(WavError::Format {
                    chunk: "data",
                    detail: "odd byte count for 16-bit PCM".into(),
                });
            }
            data.chunks_exact(2)
                .map(|b| f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0)
                .collect()
        }
        (TAG_IEEE_FLOAT, 32) => {
            if !data.len().is_multiple_of(4) {
                return Err(WavError::Format {
                    chunk: "data",
                    detail: "byte count not a multiple of 4 for float32".into(),
                });
            }
            data.chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect()
        }
        (TAG_PCM, bits) => {
            return Err(WavError::UnsupportedCodec(format!("{bits}-bit PCM")));
        }
        (TAG_IEEE_FLOAT, bits) => {
            return Err(WavError::UnsupportedCodec(format!("{bits}-bit IEEE float")));
        }
        (tag, _) => {
            return Err(WavError::UnsupportedCodec(format!("format tag {tag:#06x}")));
        }
    };

    let channels = fmt.channels as usize;
    if !interleaved.len().is_multiple_of(channels) {
        return Err(WavError::Format {
            chunk: "data",
            detail: format!(
                "{} samples do not divide into {channels} channels",
                interleaved.len()
            ),
        });
    }
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Ok(AudioBuffer::new(mono, fmt.sample_rate)?)
}

/// Write a mono WAV file.
pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<(), WavError> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer, encoding)?;
    let mut file = fs::File::create(path).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Encode a mono WAV file to bytes.
pub fn encode_wav(buffer: &AudioBuffer, encoding: WavEncoding) -> Result<Vec<u8>, WavError> {
    if let Some(idx) = buffer.samples().iter().position(|x| !x.is_finite()) {
        return Err(WavError::NonFiniteSample(idx));
    }
    let n = buffer.len();
    let (format_tag, bits): (u16, u16) = match encoding {
        WavEncoding::Pcm16 => (TAG_PCM, 16),
        WavEncoding::Float32 => (TAG_IEEE_FLOAT, 32),
    };
    let bytes_per_sample = u32::from(bits) / 8;
    let data_size = n as u32 * bytes_per_sample;
    // fact chunk is required for non-PCM formats.
    let fact_size: u32 = if format_tag == TAG_IEEE_FLOAT { 12 } else { 0 };
    let riff_size = 4 + (8 + 16) + fact_size + (8 + data_size);

    let mut out = Vec::with_capacity(riff_size as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_size.to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format_tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buffer.sample_rate().to_le_bytes());
    let byte_rate = buffer.sample_rate() * bytes_per_sample;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());

    if format_tag == TAG_IEEE_FLOAT {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }

    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    match encoding {
        WavEncoding::Pcm16 => {
            for &x in buffer.samples() {
                let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        WavEncoding::Float32 => {
            for &x in buffer.samples() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}
