//! Corpus manifests: CSV (MAESTRO-style metadata works as-is) or an
//! equivalent JSON array. Paths resolve relative to the manifest file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(HarnessError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestRecord {
    pub id: String,
    pub audio_path: PathBuf,
    pub midi_path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    filename: Option<String>,
    audio_filename: String,
    midi_filename: String,
    split: String,
}

impl RawRecord {
    /// No id or filename column: fall back to the audio file stem.
    fn resolve_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        if let Some(name) = &self.filename {
            return name.clone();
        }
        Path::new(&self.audio_filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.audio_filename.clone())
    }
}

/// Load a CSV or JSON manifest, optionally filtered to one split.
pub fn load_manifest(
    path: impl AsRef<Path>,
    split_filter: Option<Split>,
) -> Result<Manifest, HarnessError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));

    let is_json = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => true,
        Some(ext) if ext.eq_ignore_ascii_case("csv") => false,
        _ => bytes
            .iter()
            .find(|b| !b.is_ascii_whitespace())
            .is_some_and(|&b| b == b'['),
    };

    let raw = if is_json {
        parse_json(&bytes)?
    } else {
        parse_csv(&bytes)?
    };

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for rec in &raw {
        let id = rec.resolve_id();
        if id.trim().is_empty() {
            return Err(HarnessError::Schema("empty recording id".into()));
        }
        if rec.audio_filename.trim().is_empty() || rec.midi_filename.trim().is_empty() {
            return Err(HarnessError::Schema(format!(
                "record {id:?} has an empty audio or midi path"
            )));
        }
        if !seen.insert(id.clone()) {
            return Err(HarnessError::DuplicateId(id));
        }
        let split: Split = rec.split.parse()?;
        records.push(ManifestRecord {
            id,
            audio_path: base_dir.join(&rec.audio_filename),
            midi_path: base_dir.join(&rec.midi_filename),
            split,
        });
    }
    if let Some(filter) = split_filter {
        records.retain(|r| r.split == filter);
    }
    Ok(Manifest { records })
}

fn parse_json(bytes: &[u8]) -> Result<Vec<RawRecord>, HarnessError> {
    serde_json::from_slice::<Vec<RawRecord>>(bytes).map_err(|e| HarnessError::Schema(e.to_string()))
}

fn parse_csv(bytes: &[u8]) -> Result<Vec<RawRecord>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Schema(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("id");
    let filename_col = col("filename");
    let audio_col = col("audio_filename")
        .ok_or_else(|| HarnessError::Schema("missing column audio_filename".into()))?;
    let midi_col = col("midi_filename")
        .ok_or_else(|| HarnessError::Schema("missing column midi_filename".into()))?;
    let split_col =
        col("split").ok_or_else(|| HarnessError::Schema("missing column split".into()))?;

    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| HarnessError::Schema(format!("row {}: {e}", i + 2)))?;
        let field = |idx: usize| row.get(idx).unwrap_or("").to_string();
        out.push(RawRecord {
            id: id_col.map(&field),
            filename: filename_col.map(&field),
            audio_filename: field(audio_col),
            midi_filename: field(midi_col),
            split: field(split_col),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn csv_filters_by_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.csv",
            "id,audio_filename,midi_filename,split\n\
             a,a.wav,a.mid,train\n\
             b,b.wav,b.mid,test\n\
             c,c.wav,c.mid,validation\n",
        );
        let m = load_manifest(&p, Some(Split::Test)).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.records[0].id, "b");
        assert_eq!(m.records[0].audio_path, dir.path().join("b.wav"));
        let all = load_manifest(&p, None).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn maestro_shaped_csv_derives_ids_from_audio_stems() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "maestro.csv",
            "canonical_composer,canonical_title,split,year,midi_filename,audio_filename,duration\n\
             \"Bach, J.S.\",\"Prelude, No. 1\",test,2018,2018/x1.midi,2018/x1.wav,120.5\n\
             Mozart,Sonata,train,2017,2017/y2.midi,2017/y2.wav,300.0\n",
        );
        let m = load_manifest(&p, Some(Split::Test)).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.records[0].id, "x1");
        assert_eq!(m.records[0].midi_path, dir.path().join("2018/x1.midi"));
    }

    #[test]
    fn json_and_csv_encodings_agree() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "m.csv",
            "id,audio_filename,midi_filename,split\n\
             a,sub/a.wav,sub/a.mid,test\n\
             b,b.wav,b.mid,train\n",
        );
        let j = write(
            dir.path(),
            "m.json",
            r#"[
              {"id":"a","audio_filename":"sub/a.wav","midi_filename":"sub/a.mid","split":"test"},
              {"id":"b","audio_filename":"b.wav","midi_filename":"b.mid","split":"train"}
            ]"#,
        );
        let mc = load_manifest(&c, None).unwrap();
        let mj = load_manifest(&j, None).unwrap();
        assert_eq!(mc.len(), mj.len());
        for (a, b) in mc.records.iter().zip(&mj.records) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.audio_path, b.audio_path);
            assert_eq!(a.midi_path, b.midi_path);
            assert_eq!(a.split, b.split);
        }
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.csv",
            "id,audio_filename,split\na,a.wav,test\n",
        );
        let err = load_manifest(&p, None).unwrap_err();
        assert!(err.to_string().contains("midi_filename"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "dup.csv",
            "id,audio_filename,midi_filename,split\na,a.wav,a.mid,test\na,b.wav,b.mid,test\n",
        );
        assert!(matches!(
            load_manifest(&p, None),
            Err(HarnessError::DuplicateId(_))
        ));
    }

    #[test]
    fn unknown_split_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.csv",
            "id,audio_filename,midi_filename,split\na,a.wav,a.mid,dev\n",
        );
        assert!(matches!(
            load_manifest(&p, None),
            Err(HarnessError::UnknownSplit(_))
        ));
    }
}
