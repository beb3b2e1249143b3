//! Voice embedding space: GMM fit and sampling, the synthesizer interface
//! with its parametric backend, and distinct-voice selection.

mod build;
mod gmm;
mod select;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{read_jsonl, write_jsonl};

pub use build::{build_voices, VoiceBuild, VoiceBuildConfig};
pub use gmm::{
    cholesky, fit_gmm, FitTrace, VoiceGmm, DEFAULT_COMPONENTS, EM_TOLERANCE, FLOOR_RELATIVE, MAX_EM_ITERATIONS,
};
pub use select::{
    calibrated_threshold, candidate_profile, greedy_select, pool_similarity_report, CandidateVoice, PoolSimilarity, SelectedSet,
    SelectionReport, DEFAULT_PROBE_UTTERANCES, DEFAULT_THRESHOLD, SAMPLING_RATIO,
};
pub use synth::{
    render, word_phones, ParamVoice, Phone, RenderStyle, Synthesizer, VoiceParams, LATENT_DIM, NOISE_FLOOR_DB,
};

/// Embedding dimensions of the TTS voice tables.
pub const TTS_DIMS: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    #[serde(default)]
    pub speaker_id: String,
    pub values: Vec<f64>,
    pub origin: Origin,
    pub source_model_dim: usize,
}

impl SpeakerEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.source_model_dim {
            return Err(Error::Format(format!(
                "embedding {} has {} values for a {}-d model",
                self.speaker_id,
                self.values.len(),
                self.source_model_dim
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("embedding {} is not finite", self.speaker_id)));
        }
        Ok(())
    }
}

/// One embedding per line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<SpeakerEmbedding>> {
    let v: Vec<SpeakerEmbedding> = read_jsonl(path)?;
    v.iter().try_for_each(SpeakerEmbedding::validate)?;
    Ok(v)
}

pub fn save_embeddings(path: impl AsRef<Path>, v: &[SpeakerEmbedding]) -> Result<()> {
    write_jsonl(path, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let v = vec![SpeakerEmbedding {
            speaker_id: "s1".into(),
            values: vec![0.25; 32],
            origin: Origin::Real,
            source_model_dim: 32,
        }];
        save_embeddings(&p, &v).unwrap();
        assert_eq!(load_embeddings(&p).unwrap(), v);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"origin\":\"real\""));
        std::fs::write(&p, "{\"values\":[1.0],\"origin\":\"sampled\",\"source_model_dim\":32}\n").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::Format(_))));
    }
}
