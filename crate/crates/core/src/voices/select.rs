//! Distinct-voice selection over synthesized probe utterances.

use serde::{Deserialize, Serialize};

use crate::audio::{extract_features, stack_frames, StackedFeatures};
use crate::dvector::{cosine, embed_features, ModelParams};
use crate::error::{Error, Result};
use crate::seed;

use super::{Origin, SpeakerEmbedding, Synthesizer};

pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_PROBE_UTTERANCES: usize = 100;
/// Candidates sampled per requested voice.
pub const SAMPLING_RATIO: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateVoice {
    pub embedding: SpeakerEmbedding,
    /// Raw average of the probe d-vectors (not re-normalized).
    pub mean_dvector: Vec<f64>,
    pub n_utts_averaged: usize,
}

/// Synthesizes every probe transcript in `voice`, embeds the results with
/// the frozen model and averages the d-vectors.
pub fn candidate_profile(
    voice: &SpeakerEmbedding,
    model: &ModelParams,
    synth: &dyn Synthesizer,
    probes: &[Vec<String>],
    seed: u64,
) -> Result<CandidateVoice> {
    if probes.is_empty() {
        return Err(Error::Parameter("no probe transcripts".into()));
    }
    let feats: Vec<StackedFeatures> = probes
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let w = synth.synthesize(voice, t, seed::derive(seed, "probe", &i.to_string()))?;
            stack_frames(&extract_features(&w)?)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&StackedFeatures> = feats.iter().collect();
    let dvecs = embed_features(model, &refs)?;
    Ok(CandidateVoice {
        embedding: voice.clone(),
        mean_dvector: mean_of(dvecs.iter().map(|d| d.values())),
        n_utts_averaged: probes.len(),
    })
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSet {
    pub voices: Vec<CandidateVoice>,
    pub threshold: f64,
    pub rejected: usize,
}

impl SelectedSet {
    /// Largest pairwise cosine among the accepted voices.
    pub fn max_pairwise_cosine(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.voices.len() {
            for j in 0..i {
                let c = cosine(&self.voices[i].mean_dvector, &self.voices[j].mean_dvector);
                best = Some(best.map_or(c, |b| b.max(c)));
            }
        }
        best
    }
}

/// Scans candidates in order and keeps each one whose cosine to every
/// already accepted voice is at most `threshold`.
pub fn greedy_select(candidates: Vec<CandidateVoice>, threshold: f64) -> SelectedSet {
    let mut voices: Vec<CandidateVoice> = Vec::new();
    let mut rejected = 0;
    for c in candidates {
        if voices
            .iter()
            .all(|v| cosine(&v.mean_dvector, &c.mean_dvector) <= threshold)
        {
            voices.push(c);
        } else {
            rejected += 1;
        }
    }
    SelectedSet {
        voices,
        threshold,
        rejected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSimilarity {
    pub real_vs_sampled_mean_cos: f64,
    /// `None` with fewer than two sampled profiles.
    pub sampled_vs_sampled_mean_cos: Option<f64>,
}

pub fn pool_similarity_report(real: &[Vec<f64>], sampled: &[Vec<f64>]) -> Result<PoolSimilarity> {
    if real.is_empty() || sampled.is_empty() {
        return Err(Error::Parameter("similarity report needs both pools".into()));
    }
    let mut cross = 0.0;
    for r in real {
        for s in sampled {
            cross += cosine(r, s);
        }
    }
    cross /= (real.len() * sampled.len()) as f64;
    let mut within = 0.0;
    let mut pairs = 0usize;
    for i in 0..sampled.len() {
        for j in 0..i {
            within += cosine(&sampled[i], &sampled[j]);
            pairs += 1;
        }
    }
    Ok(PoolSimilarity {
        real_vs_sampled_mean_cos: cross,
        sampled_vs_sampled_mean_cos: (pairs > 0).then(|| within / pairs as f64),
    })
}

/// Selection threshold matched to a model's own geometry: the `q`-quantile
/// (linear interpolation between order statistics) of the pairwise cosines
/// among real-voice profiles. Accepted voices are then at least as distinct
/// as that share of real speaker pairs.
pub fn calibrated_threshold(profiles: &[Vec<f64>], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("quantile {q} outside [0, 1]")));
    }
    if profiles.len() < 2 {
        return Err(Error::Parameter("calibration needs at least two profiles".into()));
    }
    let mut cos = Vec::with_capacity(profiles.len() * (profiles.len() - 1) / 2);
    for i in 0..profiles.len() {
        for j in 0..i {
            cos.push(cosine(&profiles[i], &profiles[j]));
        }
    }
    cos.sort_by(f64::total_cmp);
    let pos = q * (cos.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(cos[lo] + (pos - lo as f64) * (cos[hi] - cos[lo]))
}

/// Per-pool speaker counts of the synthesized datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    #[serde(rename = "128d-real")]
    pub real_128: usize,
    #[serde(rename = "32d-sampled")]
    pub sampled_32: usize,
    #[serde(rename = "64d-sampled")]
    pub sampled_64: usize,
    #[serde(rename = "128d-sampled")]
    pub sampled_128: usize,
    pub threshold: f64,
    pub rejected: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<PoolSimilarity>,
}

impl SelectionReport {
    pub fn new(real_voices: usize, set: &SelectedSet) -> Self {
        let count = |d: usize| {
            set.voices
                .iter()
                .filter(|v| v.embedding.origin == Origin::Sampled && v.embedding.source_model_dim == d)
                .count()
        };
        Self {
            real_128: real_voices,
            sampled_32: count(32),
            sampled_64: count(64),
            sampled_128: count(128),
            threshold: set.threshold,
            rejected: set.rejected,
            similarity: None,
        }
    }

    pub fn total_sampled(&self) -> usize {
        self.sampled_32 + self.sampled_64 + self.sampled_128
    }
}
