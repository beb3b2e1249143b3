//! Corpus manifests: one JSON record per line binding an utterance to its
//! speaker, audio file, transcript and provenance tags.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    /// The voice belongs to a real speaker (recorded, or synthesized from a
    /// real speaker's embedding).
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "synth")]
    Synth,
    #[serde(rename = "mtr")]
    Mtr,
    #[serde(rename = "pool-32d")]
    Pool32d,
    #[serde(rename = "pool-64d")]
    Pool64d,
    #[serde(rename = "pool-128d")]
    Pool128d,
}

impl Tag {
    pub fn pool(dim: usize) -> Option<Tag> {
        match dim {
            32 => Some(Tag::Pool32d),
            64 => Some(Tag::Pool64d),
            128 => Some(Tag::Pool128d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub audio_path: PathBuf,
    pub transcript: String,
    pub tags: BTreeSet<Tag>,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<PathBuf>,
}

impl ManifestRecord {
    pub fn has(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn words(&self) -> Vec<String> {
        self.transcript.split_whitespace().map(str::to_owned).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            records,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.utterance_id.as_str()) {
                return Err(Error::Config(format!("duplicate utterance id {}", r.utterance_id)));
            }
            if !(r.duration_s > 0.0) {
                return Err(Error::Config(format!(
                    "utterance {} has non-positive duration",
                    r.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn audio_path(&self, r: &ManifestRecord) -> PathBuf {
        self.resolve(&r.audio_path)
    }

    /// Reads and validates a manifest without touching the audio files.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let records: Vec<ManifestRecord> = read_jsonl(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(records, base_dir)
    }

    /// Reads and validates a manifest; every audio file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m = Self::read(path)?;
        for r in &m.records {
            let p = m.audio_path(r);
            if !p.exists() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "audio file missing"),
                ));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.records)
    }

    /// Sorted distinct speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.speaker_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn filter(&self, pred: impl Fn(&ManifestRecord) -> bool) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| pred(r)).cloned().collect(),
            base_dir: self.base_dir.clone(),
        }
    }
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::json(path, e))
}
