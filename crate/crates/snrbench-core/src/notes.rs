//! Symbolic note events and the TSV interchange format used to exchange
//! transcriptions with external systems.
//!
//! TSV lines are `onset_s<TAB>offset_s<TAB>pitch[<TAB>velocity]`; `#` starts
//! a comment line. Lists are kept sorted by (onset, pitch).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NotesError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("invalid note: {0}")]
    InvalidNote(String),
}

/// One note: onset/offset in seconds plus MIDI pitch, with optional velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_s: f64,
    pub offset_s: f64,
    pub pitch: u8,
    pub velocity: Option<u8>,
}

impl NoteEvent {
    pub fn new(
        onset_s: f64,
        offset_s: f64,
        pitch: u8,
        velocity: Option<u8>,
    ) -> Result<Self, NotesError> {
        if !onset_s.is_finite() || onset_s < 0.0 {
            return Err(NotesError::InvalidNote(format!(
                "onset must be finite and non-negative, got {onset_s}"
            )));
        }
        if !offset_s.is_finite() || offset_s <= onset_s {
            return Err(NotesError::InvalidNote(format!(
                "offset {offset_s} must exceed onset {onset_s}"
            )));
        }
        if pitch > 127 {
            return Err(NotesError::InvalidNote(format!(
                "pitch {pitch} out of MIDI range 0-127"
            )));
        }
        if let Some(v) = velocity {
            if v == 0 || v > 127 {
                return Err(NotesError::InvalidNote(format!(
                    "velocity {v} out of range 1-127"
                )));
            }
        }
        Ok(NoteEvent {
            onset_s,
            offset_s,
            pitch,
            velocity,
        })
    }
}

/// Notes sorted by (onset, pitch).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoteList {
    notes: Vec<NoteEvent>,
}

impl NoteList {
    pub fn empty() -> Self {
        NoteList { notes: Vec::new() }
    }

    /// Build from events in any order; sorts by (onset, pitch).
    pub fn from_events(mut notes: Vec<NoteEvent>) -> Self {
        notes.sort_by(|a, b| {
            a.onset_s
                .total_cmp(&b.onset_s)
                .then(a.pitch.cmp(&b.pitch))
                .then(a.offset_s.total_cmp(&b.offset_s))
        });
        NoteList { notes }
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NoteEvent> {
        self.notes.iter()
    }
}

/// Parse the TSV interchange format.
pub fn read_notes_tsv(path: impl AsRef<Path>) -> Result<NoteList, NotesError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NotesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_notes_tsv(&text)
}

/// Parse TSV text; line numbers in errors are 1-based.
pub fn parse_notes_tsv(text: &str) -> Result<NoteList, NotesError> {
    let mut notes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(NotesError::Parse {
                line: line_no,
                detail: format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64, NotesError> {
            s.trim().parse::<f64>().map_err(|_| NotesError::Parse {
                line: line_no,
                detail: format!("non-numeric {what}: {s:?}"),
            })
        };
        let onset = num(fields[0], "onset")?;
        let offset = num(fields[1], "offset")?;
        let pitch_raw = fields[2]
            .trim()
            .parse::<i64>()
            .map_err(|_| NotesError::Parse {
                line: line_no,
                detail: format!("non-numeric pitch: {:?}", fields[2]),
            })?;
        if !(0..=127).contains(&pitch_raw) {
            return Err(NotesError::Parse {
                line: line_no,
                detail: format!("pitch {pitch_raw} out of MIDI range 0-127"),
            });
        }
        let velocity = match fields.get(3) {
            None => None,
            Some(s) => {
                let v = s.trim().parse::<i64>().map_err(|_| NotesError::Parse {
                    line: line_no,
                    detail: format!("non-numeric velocity: {s:?}"),
                })?;
                if !(1..=127).contains(&v) {
                    return Err(NotesError::Parse {
                        line: line_no,
                        detail: format!("velocity {v} out of range 1-127"),
                    });
                }
                Some(v as u8)
            }
        };
        let note = NoteEvent::new(onset, offset, pitch_raw as u8, velocity).map_err(|e| {
            NotesError::Parse {
                line: line_no,
                detail: e.to_string(),
            }
        })?;
        notes.push(note);
    }
    Ok(NoteList::from_events(notes))
}

/// Write the TSV interchange format.
pub fn write_notes_tsv(list: &NoteList, path: impl AsRef<Path>) -> Result<(), NotesError> {
    let path = path.as_ref();
    let mut out = String::new();
    for n in list.iter() {
        match n.velocity {
            Some(v) => out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                n.onset_s, n.offset_s, n.pitch, v
            )),
            None => out.push_str(&format!("{}\t{}\t{}\n", n.onset_s, n.offset_s, n.pitch)),
        }
    }
    std::fs::write(path, out).map_err(|source| NotesError::Io {
        path: path.display().to_string(),
        source,
    })
}
