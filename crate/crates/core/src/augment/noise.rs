use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCategory {
    Cafe,
    Car,
    Ambient,
    Music,
    Other,
}

impl NoiseCategory {
    pub const ALL: [NoiseCategory; 5] = [
        NoiseCategory::Cafe,
        NoiseCategory::Car,
        NoiseCategory::Ambient,
        NoiseCategory::Music,
        NoiseCategory::Other,
    ];
}

/// One line of a noise-corpus manifest (JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub clip_id: String,
    pub path: PathBuf,
    pub category: NoiseCategory,
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
pub struct NoiseClip {
    pub clip_id: String,
    pub category: NoiseCategory,
    pub waveform: Waveform,
}

impl NoiseRecord {
    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<NoiseRecord>> {
        crate::manifest::read_jsonl(path)
    }

    pub fn write_jsonl(path: impl AsRef<Path>, records: &[NoiseRecord]) -> Result<()> {
        crate::manifest::write_jsonl(path, records)
    }

    /// Loads the clip; relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<NoiseClip> {
        let path = if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        };
        let waveform = load_wav(&path)?;
        if waveform.is_empty() {
            return Err(Error::Degenerate(format!("empty noise clip {}", path.display())));
        }
        Ok(NoiseClip {
            clip_id: self.clip_id.clone(),
            category: self.category,
            waveform,
        })
    }
}
