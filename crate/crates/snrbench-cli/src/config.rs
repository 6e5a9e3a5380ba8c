//! Minimal key=value config files.
//!
//! One `key = value` pair per line, `#` comments, repeated keys accumulate
//! (used by `system`). Keys are the long flag names without dashes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

#[derive(Default)]
pub struct FileConfig {
    values: HashMap<String, Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values: HashMap<String, Vec<String>> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value, got {line:?}", idx + 1);
            };
            values
                .entry(key.trim().trim_start_matches("--").to_string())
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.values.get(key).and_then(|v| v.last()).cloned()
    }

    pub fn strings(&self, key: &str) -> Vec<String> {
        self.values.get(key).cloned().unwrap_or_default()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.string(key).and_then(|s| s.parse().ok())
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.string(key).and_then(|s| s.parse().ok())
    }

    pub fn usize(&self, key: &str) -> Option<usize> {
        self.string(key).and_then(|s| s.parse().ok())
    }

    pub fn flag(&self, key: &str) -> bool {
        self.string(key)
            .map(|s| matches!(s.as_str(), "true" | "1" | "yes" | "on"))
            .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_comments_and_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(
            &path,
            "# comment\nseed = 7\nmanifest = data/m.csv\nsystem = a=cmd {input} {output}\nsystem = b=cmd2 {input} {output}\nkeep-audio = true\n",
        )
        .unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(cfg.u64("seed"), Some(7));
        assert_eq!(cfg.path("manifest"), Some(PathBuf::from("data/m.csv")));
        assert_eq!(cfg.strings("system").len(), 2);
        assert!(cfg.flag("keep-audio"));
        assert_eq!(cfg.string("missing"), None);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "just a line without equals\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
    }
}
