//! In-memory desk-scale experiments: generate the world, build every data
//! group, train recipes and score the evaluation trials without touching
//! the filesystem.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{extract_features, stack_frames, Waveform};
use crate::augment::{mtr_augment_utterance, MtrConfig, MtrResources};
use crate::dvector::{embed_features, FeatureCorpus, ModelParams, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::eval::{build_trials, enroll, score_trials, EerReport, EnrollmentModel};
use crate::manifest::Tag;
use crate::recipes::{DataGroup, Recipe, SourceSpec};
use crate::seed::{self, Rng};
use crate::transcripts::{gen_digits, gen_random_words, shuffle_words, Condition, TranscriptSet};
use crate::voices::{build_voices, calibrated_threshold, SelectionReport, SpeakerEmbedding, Synthesizer, VoiceBuild, VoiceBuildConfig};
use crate::world::{Domain, NoiseSet, Speaker, World, WorldConfig};

/// One featurized utterance.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub tags: BTreeSet<Tag>,
    pub transcript: Vec<String>,
    /// Stacked `S x 80` frames.
    pub features: Array2<f64>,
}

/// Log-Mel, VAD and stacking; `None` when too little speech survives.
pub fn featurize(w: &Waveform) -> Result<Option<Array2<f64>>> {
    match extract_features(w).and_then(|f| stack_frames(&f)) {
        Ok(s) => Ok(Some(s.frames)),
        Err(Error::TooShort(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    /// Training of the frozen selection model.
    pub selector_train: TrainConfig,
    pub voices: VoiceBuildConfig,
    /// Replace `voices.threshold` by this quantile of the pairwise cosines
    /// among the real speakers' profiles under the selection model.
    pub threshold_quantile: Option<f64>,
    /// Synthesized utterances per voice.
    pub tts_utterances: usize,
    /// Size of the popular-query corpus used as close-match text.
    pub close_match_queries: usize,
    pub mtr: MtrConfig,
}

impl Default for DeskConfig {
    fn default() -> Self {
        let mut train = TrainConfig::default();
        train.speakers_per_batch = 8;
        train.utterances_per_speaker = 4;
        train.segment_frames = 40;
        train.steps = 300;
        Self {
            world: WorldConfig::default(),
            selector_train: train.clone(),
            train,
            voices: VoiceBuildConfig {
                probe_utterances: 10,
                ..VoiceBuildConfig::default()
            },
            threshold_quantile: None,
            tts_utterances: 40,
            close_match_queries: 2000,
            mtr: MtrConfig {
                copies_per_utterance: 2,
                ..MtrConfig::default()
            },
        }
    }
}

/// What to render for one utterance.
struct Spec<'a> {
    id: String,
    speaker: String,
    transcript: Vec<String>,
    tags: BTreeSet<Tag>,
    voice: Voice<'a>,
}

enum Voice<'a> {
    Recorded(&'a Speaker, Domain),
    Synth(&'a SpeakerEmbedding),
}

/// Renders and featurizes every spec, followed by its MTR copies when an
/// MTR setup is given. Too-short utterances are dropped.
fn realize(
    world: &World,
    specs: &[Spec],
    mtr: Option<(&MtrConfig, &MtrResources)>,
    seed: u64,
) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for s in specs {
        let audio_seed = seed::derive(seed, "audio", &s.id);
        let w = match s.voice {
            Voice::Recorded(sp, domain) => world.record(sp, &s.transcript, domain, audio_seed)?,
            Voice::Synth(e) => world.backend.synthesize(e, &s.transcript, audio_seed)?,
        };
        let mut push = |id: String, tags: BTreeSet<Tag>, w: &Waveform| -> Result<()> {
            if let Some(features) = featurize(w)? {
                out.push(Utterance {
                    id,
                    speaker: s.speaker.clone(),
                    tags,
                    transcript: s.transcript.clone(),
                    features,
                });
            }
            Ok(())
        };
        push(s.id.clone(), s.tags.clone(), &w)?;
        if let Some((cfg, res)) = mtr {
            let mut tags = s.tags.clone();
            tags.insert(Tag::Mtr);
            for (k, copy) in mtr_augment_utterance(&s.id, &w, cfg, res)?.iter().enumerate() {
                push(format!("{}-mtr{k:02}", s.id), tags.clone(), &copy.waveform)?;
            }
        }
    }
    Ok(out)
}

fn pick(set: &TranscriptSet, rng: &mut Rng) -> Vec<String> {
    set.utterances[rng.random_range(0..set.utterances.len())].clone()
}

/// Everything a desk-scale run needs before training.
pub struct DeskData {
    pub config: DeskConfig,
    pub world: World,
    /// Real recordings and their MTR copies, plus TTS-Real.
    pub base: Vec<Utterance>,
    /// Sampled-voice synthesis (clean and MTR) with close-match text.
    pub sampled: Vec<Utterance>,
    pub enroll: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub voices: Vec<SpeakerEmbedding>,
    /// GMMs, profiled candidates and the greedy selection.
    pub voice_build: VoiceBuild,
    pub selection: SelectionReport,
    pub selector: ModelParams,
    /// Mean selector d-vector per real speaker.
    pub real_profiles: Vec<Vec<f64>>,
    mtr_resources: MtrResources,
}

impl DeskData {
    pub fn build(config: DeskConfig) -> Result<Self> {
        let world = World::new(config.world.clone())?;
        let s = world.config.seed;
        let wc = &world.config;
        let mut mtr_cfg = config.mtr.clone();
        mtr_cfg.seed = seed::derive(s, "mtr", "");
        let mtr_resources = MtrResources {
            noises: world.noise_clips(NoiseSet::Train)?,
            rirs: world.rirs()?,
        };

        // real recordings of read speech
        let mut text_rng = seed::derive_rng(s, "text", "real");
        let specs: Vec<Spec> = world
            .real()
            .iter()
            .flat_map(|sp| (0..wc.real_utterances).map(move |j| (sp, j)))
            .map(|(sp, j)| Spec {
                id: format!("{}-r{j:03}", sp.id),
                speaker: sp.id.clone(),
                transcript: world.sentence(&mut text_rng),
                tags: DataGroup::Real.tags(),
                voice: Voice::Recorded(sp, Domain::Studio),
            })
            .collect();
        let mut base = realize(&world, &specs, Some((&mtr_cfg, &mtr_resources)), s)?;

        let close = world.queries(config.close_match_queries, "popular");

        // TTS-Real: the real speakers' 128-d embeddings
        let table128 = world.tts_embeddings(128)?;
        let mut rng = seed::derive_rng(s, "text", "tts-real");
        let specs: Vec<Spec> = table128[..wc.real_speakers]
            .iter()
            .flat_map(|e| (0..config.tts_utterances).map(move |j| (e, j)))
            .map(|(e, j)| Spec {
                id: format!("{}-t{j:03}", e.speaker_id),
                speaker: e.speaker_id.clone(),
                transcript: pick(&close, &mut rng),
                tags: DataGroup::TtsReal.tags(),
                voice: Voice::Synth(e),
            })
            .collect();
        base.extend(realize(&world, &specs, None, s)?);

        // selection model on disjoint speakers
        let mut rng = seed::derive_rng(s, "text", "selector");
        let specs: Vec<Spec> = world
            .selector
            .iter()
            .flat_map(|sp| (0..wc.selector_utterances).map(move |j| (sp, j)))
            .map(|(sp, j)| Spec {
                id: format!("{}-r{j:03}", sp.id),
                speaker: sp.id.clone(),
                transcript: world.sentence(&mut rng),
                tags: DataGroup::Real.tags(),
                voice: Voice::Recorded(sp, Domain::Studio),
            })
            .collect();
        let sel_utts = realize(&world, &specs, None, s)?;
        let selector = train_sources(
            &config.selector_train,
            vec![corpus("selector", sel_utts.iter())],
            seed::derive(s, "selector", ""),
        )?;

        // real-voice profiles for the similarity report
        let real_profiles: Vec<Vec<f64>> = {
            let real_utts: Vec<&Utterance> = base.iter().filter(|u| DataGroup::Real.matches(&u.tags)).collect();
            let mut by_spk: BTreeMap<&str, Vec<&Array2<f64>>> = BTreeMap::new();
            for u in &real_utts {
                by_spk.entry(&u.speaker).or_default().push(&u.features);
            }
            by_spk
                .values()
                .map(|fs| mean_dvector(&selector, fs))
                .collect::<Result<_>>()?
        };

        let tables: Vec<(usize, Vec<SpeakerEmbedding>)> = config
            .voices
            .pools
            .iter()
            .map(|&d| Ok((d, world.tts_embeddings(d)?)))
            .collect::<Result<_>>()?;
        let mut voice_cfg = config.voices.clone();
        if let Some(q) = config.threshold_quantile {
            voice_cfg.threshold = calibrated_threshold(&real_profiles, q)?;
        }
        let build = build_voices(
            &tables,
            &selector,
            &world.backend,
            &close.utterances,
            Some(&real_profiles),
            &voice_cfg,
            seed::derive(s, "voices", ""),
        )?;
        let mut selection = build.report.clone();
        selection.real_128 = wc.real_speakers;
        let voices: Vec<SpeakerEmbedding> = build.selected.voices.iter().map(|c| c.embedding.clone()).collect();

        let mut data = Self {
            world,
            base,
            sampled: Vec::new(),
            enroll: Vec::new(),
            test: Vec::new(),
            voices,
            voice_build: build,
            selection,
            selector,
            real_profiles,
            mtr_resources,
            config,
        };
        data.sampled = data.synthesize_sampled(&close)?;
        let (enroll, test) = data.eval_sets()?;
        data.enroll = enroll;
        data.test = test;
        Ok(data)
    }

    fn mtr_config(&self) -> MtrConfig {
        MtrConfig {
            seed: seed::derive(self.world.config.seed, "mtr", ""),
            ..self.config.mtr.clone()
        }
    }

    /// Clean and MTR synthesis of every selected voice, texts drawn from
    /// `transcripts`.
    pub fn synthesize_sampled(&self, transcripts: &TranscriptSet) -> Result<Vec<Utterance>> {
        if transcripts.is_empty() {
            return Err(Error::Config("empty transcript set".into()));
        }
        let s = self.world.config.seed;
        let mut rng = seed::derive_rng(s, "text", transcripts.condition.name());
        let specs: Vec<Spec> = self
            .voices
            .iter()
            .flat_map(|e| (0..self.config.tts_utterances).map(move |j| (e, j)))
            .map(|(e, j)| {
                let mut tags = DataGroup::TtsSampled.tags();
                tags.extend(Tag::pool(e.source_model_dim));
                Spec {
                    id: format!("{}-t{j:03}", e.speaker_id),
                    speaker: e.speaker_id.clone(),
                    transcript: pick(transcripts, &mut rng),
                    tags,
                    voice: Voice::Synth(e),
                }
            })
            .collect();
        let cfg = self.mtr_config();
        realize(&self.world, &specs, Some((&cfg, &self.mtr_resources)), s)
    }

    fn eval_sets(&self) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
        let wc = &self.world.config;
        let mut rng = seed::derive_rng(wc.seed, "text", "eval");
        let mut make = |prefix: &str, n: usize| -> Vec<Spec> {
            self.world
                .eval
                .iter()
                .flat_map(|sp| (0..n).map(move |j| (sp, j)))
                .map(|(sp, j)| Spec {
                    id: format!("{}-{prefix}{j:03}", sp.id),
                    speaker: sp.id.clone(),
                    transcript: self.world.query(&mut rng),
                    tags: DataGroup::Real.tags(),
                    voice: Voice::Recorded(sp, Domain::Field),
                })
                .collect()
        };
        let enroll = make("e", wc.enroll_utterances);
        let test = make("x", wc.test_utterances);
        Ok((
            realize(&self.world, &enroll, None, wc.seed)?,
            realize(&self.world, &test, None, wc.seed)?,
        ))
    }

    /// Transcript set of `condition` sized for the sampled-voice synthesis.
    pub fn transcripts(&self, condition: Condition) -> Result<TranscriptSet> {
        let n = (self.voices.len() * self.config.tts_utterances).max(1);
        let mut rng = seed::derive_rng(self.world.config.seed, "transcripts", condition.name());
        let test_text = || TranscriptSet {
            condition: Condition::ExactMatch,
            utterances: self.test.iter().map(|u| u.transcript.clone()).collect(),
        };
        Ok(match condition {
            Condition::RandomDigits => gen_digits(n, &mut rng),
            Condition::RandomWords100 => gen_random_words(&self.world.lexicon, Some(100), n, &mut rng)?,
            Condition::RandomWordsFull => gen_random_words(&self.world.lexicon, None, n, &mut rng)?,
            Condition::CloseMatch => self.world.queries(self.config.close_match_queries, "popular"),
            Condition::ExactMatch => test_text(),
            Condition::ExactMatchShuffled => shuffle_words(&test_text(), &mut rng),
        })
    }

    /// Training sources of `recipe`, drawn from `base` and `sampled`.
    pub fn sources(&self, recipe: Recipe, sampled: &[Utterance]) -> Result<Vec<FeatureCorpus>> {
        recipe_sources(&recipe.sources(), self.base.iter().chain(sampled))
    }

    pub fn train(&self, recipe: Recipe, sampled: &[Utterance], seed: u64) -> Result<ModelParams> {
        train_sources(&self.config.train, self.sources(recipe, sampled)?, seed)
    }

    /// EER over all enrollment-speaker x test-utterance trials.
    pub fn evaluate(&self, params: &ModelParams) -> Result<EerReport> {
        evaluate(params, &self.enroll, &self.test)
    }
}

fn corpus<'a>(name: &str, utts: impl Iterator<Item = &'a Utterance>) -> FeatureCorpus {
    let mut speakers = Vec::new();
    let mut features = Vec::new();
    for u in utts {
        speakers.push(u.speaker.clone());
        features.push(u.features.clone());
    }
    FeatureCorpus {
        name: name.to_string(),
        speakers,
        features,
    }
}

/// One feature corpus per source spec; an empty source is a configuration
/// error.
pub fn recipe_sources<'a>(
    specs: &[SourceSpec],
    utts: impl Iterator<Item = &'a Utterance> + Clone,
) -> Result<Vec<FeatureCorpus>> {
    specs
        .iter()
        .map(|spec| {
            let c = corpus(&spec.name(), utts.clone().filter(|u| spec.matches(&u.tags)));
            if c.is_empty() {
                Err(Error::Config(format!("training source '{}' is empty", spec.name())))
            } else {
                Ok(c)
            }
        })
        .collect()
}

pub fn train_sources(cfg: &TrainConfig, sources: Vec<FeatureCorpus>, seed: u64) -> Result<ModelParams> {
    let mut t = Trainer::new(cfg.clone(), sources, seed)?;
    t.run(|_| {})?;
    Ok(t.into_params())
}

fn mean_dvector(params: &ModelParams, feats: &[&Array2<f64>]) -> Result<Vec<f64>> {
    let stacked: Vec<crate::audio::StackedFeatures> = feats
        .iter()
        .map(|f| crate::audio::StackedFeatures {
            frames: (*f).clone(),
            source_frame_count: 2 * f.nrows(),
        })
        .collect();
    let refs: Vec<&crate::audio::StackedFeatures> = stacked.iter().collect();
    let d = embed_features(params, &refs)?;
    let dim = d.first().map_or(0, |v| v.dim());
    let mut mean = vec![0.0; dim];
    for v in &d {
        mean.iter_mut().zip(v.values()).for_each(|(m, x)| *m += x / d.len() as f64);
    }
    Ok(mean)
}

/// Enrolls every speaker of `enroll`, scores all trials against `test`.
pub fn evaluate(params: &ModelParams, enroll_utts: &[Utterance], test: &[Utterance]) -> Result<EerReport> {
    let embed = |utts: &[Utterance]| -> Result<Vec<crate::dvector::DVector>> {
        let stacked: Vec<crate::audio::StackedFeatures> = utts
            .iter()
            .map(|u| crate::audio::StackedFeatures {
                frames: u.features.clone(),
                source_frame_count: 2 * u.features.nrows(),
            })
            .collect();
        embed_features(params, &stacked.iter().collect::<Vec<_>>())
    };
    let e = embed(enroll_utts)?;
    let mut by_spk: BTreeMap<String, Vec<crate::dvector::DVector>> = BTreeMap::new();
    for (u, d) in enroll_utts.iter().zip(e) {
        by_spk.entry(u.speaker.clone()).or_default().push(d);
    }
    let models: BTreeMap<String, EnrollmentModel> = by_spk
        .iter()
        .map(|(s, v)| Ok((s.clone(), enroll(s, v)?)))
        .collect::<Result<_>>()?;
    let tests: BTreeMap<String, crate::dvector::DVector> =
        test.iter().map(|u| u.id.clone()).zip(embed(test)?).collect();
    let en: Vec<(&str, &str)> = enroll_utts.iter().map(|u| (u.id.as_str(), u.speaker.as_str())).collect();
    let te: Vec<(&str, &str)> = test.iter().map(|u| (u.id.as_str(), u.speaker.as_str())).collect();
    let mut trials = build_trials(&en, &te, None, None, &mut seed::rng(0))?;
    score_trials(&mut trials, &models, &tests)
}
