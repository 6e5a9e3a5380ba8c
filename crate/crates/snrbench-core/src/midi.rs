//! Standard MIDI File (format 0/1) note extraction.
//!
//! Note-ons (velocity > 0) pair FIFO with the next note-off (or velocity-0
//! note-on) of equal pitch on the same channel within the same track.
//! Tick times convert to seconds through the merged tempo map of all
//! tracks; notes still open at end-of-track are closed there. Offsets and
//! velocities are parsed faithfully but the onset metric downstream ignores
//! them.

use std::collections::VecDeque;
use std::path::Path;

use thiserror::Error;

use crate::notes::{NoteEvent, NoteList};

const DEFAULT_TEMPO_US_PER_QN: u32 = 500_000; // 120 bpm

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Parsed notes plus a count of tolerated oddities (orphan note-offs,
/// zero-length notes nudged to minimal duration).
#[derive(Debug, Clone)]
pub struct ParsedMidi {
    pub notes: NoteList,
    pub warning_count: u32,
}

/// Read an SMF file and return its notes.
pub fn read_midi(path: impl AsRef<Path>) -> Result<NoteList, MidiError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| MidiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_midi(&bytes)?.notes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: impl Into<String>) -> MidiError {
        MidiError::Parse {
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "needs {n} bytes, only {} left",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16_be(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32_be(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most 4 bytes.
    fn varint(&mut self) -> Result<u32, MidiError> {
        let mut value: u32 = 0;
        for i in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
            if i == 3 {
                break;
            }
        }
        Err(self.err("variable-length quantity exceeds 4 bytes"))
    }
}

/// Tempo map: monotone (tick, microseconds-per-quarter) changes.
struct TempoMap {
    ppq: f64,
    changes: Vec<(u64, u32)>,
}

impl TempoMap {
    fn new(ppq: u16, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        TempoMap {
            ppq: f64::from(ppq),
            changes,
        }
    }

    /// Seconds elapsed from tick 0 to `tick`, integrating across segments.
    fn seconds_at(&self, tick: u64) -> f64 {
        let mut seconds = 0.0;
        let mut cur_tick = 0u64;
        let mut cur_tempo = DEFAULT_TEMPO_US_PER_QN;
        for &(change_tick, tempo) in &self.changes {
            if change_tick >= tick {
                break;
            }
            if change_tick > cur_tick {
                seconds += (change_tick - cur_tick) as f64 / self.ppq * f64::from(cur_tempo) * 1e-6;
                cur_tick = change_tick;
            }
            cur_tempo = tempo;
        }
        seconds + (tick - cur_tick) as f64 / self.ppq * f64::from(cur_tempo) * 1e-6
    }
}

enum TrackEvent {
    NoteOn {
        channel: u8,
        pitch: u8,
        velocity: u8,
    },
    NoteOff {
        channel: u8,
        pitch: u8,
    },
}

struct RawTrack {
    events: Vec<(u64, TrackEvent)>,
    tempo_changes: Vec<(u64, u32)>,
    end_tick: u64,
}

/// Parse SMF bytes into notes.
pub fn parse_midi(bytes: &[u8]) -> Result<ParsedMidi, MidiError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(MidiError::Parse {
            offset: 0,
            detail: "missing MThd chunk".into(),
        });
    }
    let header_len = r.u32_be()?;
    if header_len < 6 {
        return Err(r.err(format!("MThd length {header_len} < 6")));
    }
    let format = r.u16_be()?;
    let ntrks = r.u16_be()?;
    let division = r.u16_be()?;
    r.take(header_len as usize - 6)?;

    if format > 1 {
        return Err(MidiError::Unsupported(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::Unsupported("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(r.err("zero ticks per quarter note"));
    }

    let mut tracks = Vec::new();
    for _ in 0..ntrks {
        let id = r.take(4)?;
        let len = r.u32_be()? as usize;
        let body_start = r.pos;
        let body = r.take(len)?;
        if id != b"MTrk" {
            // Unknown chunk types must be skipped per the SMF spec.
            continue;
        }
        tracks.push(parse_track(body, body_start)?);
    }

    let tempo_changes: Vec<(u64, u32)> = tracks
        .iter()
        .flat_map(|t| t.tempo_changes.iter().copied())
        .collect();
    let tempo_map = TempoMap::new(division, tempo_changes);

    let mut warning_count = 0u32;
    let mut notes = Vec::new();
    for track in &tracks {
        // FIFO queues of open note onsets per (channel, pitch).
        let mut open: Vec<VecDeque<(u64, u8)>> = vec![VecDeque::new(); 128 * 16];
        let slot = |channel: u8, pitch: u8| usize::from(channel) * 128 + usize::from(pitch);
        let mut close = |onset: (u64, u8), off_tick: u64, pitch: u8, warnings: &mut u32| {
            let (on_tick, velocity) = onset;
            let onset_s = tempo_map.seconds_at(on_tick);
            let mut offset_s = tempo_map.seconds_at(off_tick.max(on_tick));
            if offset_s <= onset_s {
                // Zero-length notes occur in the wild; nudge to minimal
                // duration so downstream invariants hold.
                offset_s = onset_s + 1e-6;
                *warnings += 1;
            }
            notes.push(NoteEvent {
                onset_s,
                offset_s,
                pitch,
                velocity: Some(velocity.max(1)),
            });
        };
        for &(tick, ref event) in &track.events {
            match *event {
                TrackEvent::NoteOn {
                    channel,
                    pitch,
                    velocity,
                } => {
                    open[slot(channel, pitch)].push_back((tick, velocity));
                }
                TrackEvent::NoteOff { channel, pitch } => {
                    match open[slot(channel, pitch)].pop_front() {
                        Some(onset) => close(onset, tick, pitch, &mut warning_count),
                        None => warning_count += 1, // orphan note-off
                    }
                }
            }
        }
        for (idx, queue) in open.iter_mut().enumerate() {
            let pitch = (idx % 128) as u8;
            while let Some(onset) = queue.pop_front() {
                close(onset, track.end_tick, pitch, &mut warning_count);
            }
        }
    }

    Ok(ParsedMidi {
        notes: NoteList::from_events(notes),
        warning_count,
    })
}

fn parse_track(body: &[u8], base_offset: usize) -> Result<RawTrack, MidiError> {
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    // Error offsets should point into the whole file.
    macro_rules! fail {
        ($r:expr, $msg:expr) => {
            return Err(MidiError::Parse {
                offset: base_offset + $r.pos,
                detail: $msg.into(),
            })
        };
    }

    let mut events = Vec::new();
    let mut tempo_changes = Vec::new();
    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;
    let mut end_tick: Option<u64> = None;

    while r.pos < body.len() {
        let delta = r.varint().map_err(|e| offset_shift(e, base_offset))?;
        tick += u64::from(delta);

        let status = match r.peek() {
            Some(b) if b >= 0x80 => {
                r.pos += 1;
                if b < 0xF0 {
                    running_status = Some(b);
                }
                b
            }
            Some(_) => match running_status {
                Some(s) => s,
                None => fail!(r, "data byte with no running status"),
            },
            None => fail!(r, "truncated event"),
        };

        match status {
            0x80..=0xEF => {
                let kind = status & 0xF0;
                let channel = status & 0x0F;
                let d1 = r.u8().map_err(|e| offset_shift(e, base_offset))?;
                let needs_two = !matches!(kind, 0xC0 | 0xD0);
                let d2 = if needs_two {
                    r.u8().map_err(|e| offset_shift(e, base_offset))?
                } else {
                    0
                };
                if d1 > 0x7F || d2 > 0x7F {
                    fail!(r, format!("data byte out of range in status {status:#04x}"));
                }
                match kind {
                    0x90 if d2 > 0 => events.push((
                        tick,
                        TrackEvent::NoteOn {
                            channel,
                            pitch: d1,
                            velocity: d2,
                        },
                    )),
                    0x90 | 0x80 => events.push((tick, TrackEvent::NoteOff { channel, pitch: d1 })),
                    _ => {} // aftertouch, CC, program, pitch bend: ignored
                }
            }
            0xFF => {
                let meta_type = r.u8().map_err(|e| offset_shift(e, base_offset))?;
                let len = r.varint().map_err(|e| offset_shift(e, base_offset))? as usize;
                let data = r.take(len).map_err(|e| offset_shift(e, base_offset))?;
                match meta_type {
                    0x51 => {
                        if data.len() != 3 {
                            fail!(r, format!("tempo meta event of length {len}, expected 3"));
                        }
                        let tempo = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if tempo == 0 {
                            fail!(r, "zero tempo");
                        }
                        tempo_changes.push((tick, tempo));
                    }
                    0x2F => {
                        end_tick = Some(tick);
                        break;
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                let len = r.varint().map_err(|e| offset_shift(e, base_offset))? as usize;
                r.take(len).map_err(|e| offset_shift(e, base_offset))?;
            }
            _ => fail!(r, format!("unexpected status byte {status:#04x}")),
        }
    }

    let end_tick = end_tick.unwrap_or_else(|| events.last().map_or(tick, |&(t, _)| t.max(tick)));
    Ok(RawTrack {
        events,
        tempo_changes,
        end_tick,
    })
}

fn offset_shift(e: MidiError, base: usize) -> MidiError {
    match e {
        MidiError::Parse { offset, detail } => MidiError::Parse {
            offset: base + offset,
            detail,
        },
        other => other,
    }
}

/// Minimal SMF writer: format 0, one track, one initial tempo.
///
/// Onsets/offsets quantize to the tick grid (`ppq` ticks per quarter at
/// `tempo_us_per_qn`), which bounds the round-trip time error by half a
/// tick. Used to build reference fixtures and the selftest corpus.
pub fn write_midi(
    list: &NoteList,
    path: impl AsRef<Path>,
    ppq: u16,
    tempo_us_per_qn: u32,
) -> Result<(), MidiError> {
    let path = path.as_ref();
    let bytes = encode_midi(list, ppq, tempo_us_per_qn);
    std::fs::write(path, bytes).map_err(|source| MidiError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Encode a format-0 SMF in memory. See [`write_midi`].
pub fn encode_midi(list: &NoteList, ppq: u16, tempo_us_per_qn: u32) -> Vec<u8> {
    assert!(ppq > 0 && ppq < 0x8000, "ppq must be in 1..32768");
    assert!(tempo_us_per_qn > 0, "tempo must be positive");
    let ticks_per_second = f64::from(ppq) / (f64::from(tempo_us_per_qn) * 1e-6);
    let to_tick = |seconds: f64| (seconds * ticks_per_second).round().max(0.0) as u64;

    // (tick, is_off, pitch, velocity); offs sort before ons at equal ticks
    // so re-struck pitches pair correctly on read-back.
    let mut moments: Vec<(u64, bool, u8, u8)> = Vec::with_capacity(list.len() * 2);
    for n in list.iter() {
        let on = to_tick(n.onset_s);
        let off = to_tick(n.offset_s).max(on + 1);
        moments.push((on, false, n.pitch, n.velocity.unwrap_or(64)));
        moments.push((off, true, n.pitch, 0));
    }
    moments.sort_by_key(|&(tick, is_off, pitch, _)| (tick, !is_off, pitch));

    let mut track = Vec::new();
    let push_varint = |out: &mut Vec<u8>, mut v: u64| {
        let mut stack = [0u8; 5];
        let mut n = 0;
        loop {
            stack[n] = (v & 0x7F) as u8;
            v >>= 7;
            n += 1;
            if v == 0 {
                break;
            }
        }
        for i in (0..n).rev() {
            let mut b = stack[i];
            if i > 0 {
                b |= 0x80;
            }
            out.push(b);
        }
    };

    // Tempo at tick 0.
    push_varint(&mut track, 0);
    track.extend_from_slice(&[0xFF, 0x51, 0x03]);
    track.extend_from_slice(&tempo_us_per_qn.to_be_bytes()[1..]);

    let mut last_tick = 0u64;
    for (tick, is_off, pitch, velocity) in moments {
        push_varint(&mut track, tick - last_tick);
        last_tick = tick;
        if is_off {
            track.extend_from_slice(&[0x80, pitch, 0x40]);
        } else {
            track.extend_from_slice(&[0x90, pitch, velocity]);
        }
    }

    push_varint(&mut track, 0);
    track.extend_from_slice(&[0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&ppq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
