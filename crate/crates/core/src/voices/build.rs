//! Full voice-building pass: per-pool GMM fit and sampling, profiling with
//! the frozen selection model, greedy selection across pools in order.

use serde::{Deserialize, Serialize};

use crate::dvector::ModelParams;
use crate::error::{Error, Result};
use crate::seed;

use super::{
    candidate_profile, fit_gmm, greedy_select, pool_similarity_report, CandidateVoice, SelectedSet, SelectionReport,
    SpeakerEmbedding, Synthesizer, VoiceGmm, DEFAULT_COMPONENTS, DEFAULT_PROBE_UTTERANCES, DEFAULT_THRESHOLD,
    SAMPLING_RATIO,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoiceBuildConfig {
    /// Pools are searched in this order.
    pub pools: Vec<usize>,
    /// Requested voices per pool; `SAMPLING_RATIO` times as many are sampled.
    pub budget: usize,
    pub sampling_ratio: usize,
    pub probe_utterances: usize,
    pub threshold: f64,
    pub components: usize,
}

impl Default for VoiceBuildConfig {
    fn default() -> Self {
        Self {
            pools: vec![32, 64, 128],
            budget: 16,
            sampling_ratio: SAMPLING_RATIO,
            probe_utterances: DEFAULT_PROBE_UTTERANCES,
            threshold: DEFAULT_THRESHOLD,
            components: DEFAULT_COMPONENTS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VoiceBuild {
    pub gmms: Vec<VoiceGmm>,
    /// Every profiled candidate, in scan order.
    pub candidates: Vec<CandidateVoice>,
    pub selected: SelectedSet,
    pub report: SelectionReport,
}

/// `tables` holds the real speakers' embeddings for each pool dimension.
/// The report's real-voice count defaults to the largest table; callers that
/// synthesize only part of the inventory overwrite it.
/// `real_profiles` (mean d-vectors of the real voices) feed the similarity
/// part of the report when given.
pub fn build_voices(
    tables: &[(usize, Vec<SpeakerEmbedding>)],
    model: &ModelParams,
    synth: &dyn Synthesizer,
    probes: &[Vec<String>],
    real_profiles: Option<&[Vec<f64>]>,
    cfg: &VoiceBuildConfig,
    seed: u64,
) -> Result<VoiceBuild> {
    if probes.len() < cfg.probe_utterances || cfg.probe_utterances == 0 {
        return Err(Error::Config(format!(
            "{} probe transcripts for {} probe utterances",
            probes.len(),
            cfg.probe_utterances
        )));
    }
    let probes = &probes[..cfg.probe_utterances];
    let mut gmms = Vec::new();
    let mut candidates = Vec::new();
    for &dim in &cfg.pools {
        let table = tables
            .iter()
            .find(|(d, _)| *d == dim)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Config(format!("no embedding table for the {dim}-d pool")))?;
        let n = cfg.budget * cfg.sampling_ratio;
        if n == 0 {
            continue;
        }
        let (gmm, _) = fit_gmm(table, cfg.components, seed::derive(seed, "gmm", &dim.to_string()))?;
        let mut rng = seed::derive_rng(seed, "sample", &dim.to_string());
        for (i, mut v) in gmm.sample(n, &mut rng)?.into_iter().enumerate() {
            v.speaker_id = format!("s{dim}d-{i:04}");
            let c = candidate_profile(&v, model, synth, probes, seed::derive(seed, "profile", &v.speaker_id))?;
            candidates.push(c);
        }
        gmms.push(gmm);
    }
    let selected = greedy_select(candidates.clone(), cfg.threshold);
    let mut report = SelectionReport::new(tables.iter().map(|(_, t)| t.len()).max().unwrap_or(0), &selected);
    if let Some(real) = real_profiles {
        if !real.is_empty() && !candidates.is_empty() {
            let sampled: Vec<Vec<f64>> = candidates.iter().map(|c| c.mean_dvector.clone()).collect();
            report.similarity = Some(pool_similarity_report(real, &sampled)?);
        }
    }
    Ok(VoiceBuild {
        gmms,
        candidates,
        selected,
        report,
    })
}
