//! File-based pipeline stages. Each stage reads manifests, feature dumps,
//! checkpoints and text files and writes its artifacts back to disk, so
//! stages can run as separate processes. The `synthvox` binary is a flag
//! parser over these functions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, read_feature_dump, save_wav, write_feature_dump, StackedFeatures, Waveform};
use crate::augment::{mtr_augment_utterance, MtrConfig, MtrResources, NoiseClip, NoiseRecord, RoomImpulseResponse};
use crate::dvector::{embed_features, read_checkpoint, write_checkpoint, DVector, ModelParams, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::eval::{build_trials, enroll, score_trials, EerReport, EnrollmentModel, TrialSet};
use crate::experiment::{featurize, recipe_sources, Utterance};
use crate::manifest::{read_json, write_json, Manifest, ManifestRecord, Tag};
use crate::recipes::{DataGroup, Recipe, SourceSpec};
use crate::seed;
use crate::transcripts::{
    default_lexicon, gen_digits, gen_random_words, load_lexicon, load_text_corpus, shuffle_words, vocab_report,
    Condition, TranscriptSet, VocabReport,
};
use crate::voices::{
    build_voices, calibrated_threshold, load_embeddings, save_embeddings, ParamVoice, SelectionReport, SpeakerEmbedding, Synthesizer,
    VoiceBuildConfig, TTS_DIMS,
};
use crate::world::{Domain, NoiseSet, Speaker, World, WorldConfig};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn record(id: &str, speaker: &str, audio: PathBuf, words: &[String], tags: BTreeSet<Tag>, w: &Waveform) -> ManifestRecord {
    ManifestRecord {
        utterance_id: id.to_string(),
        speaker_id: speaker.to_string(),
        audio_path: audio,
        transcript: words.join(" "),
        tags,
        duration_s: w.duration_s(),
        features_path: None,
    }
}

/// Absolute form of `p` for records that move to a new manifest directory.
fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

// ---------------------------------------------------------------- gen-corpus

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub real: usize,
    pub selector: usize,
    pub enroll: usize,
    pub test: usize,
    pub noise_clips: usize,
    pub rirs: usize,
}

/// Writes a generated world to `out`:
///
/// ```text
/// world.json  backend.json  lexicon.txt  queries.txt  rirs.json
/// embeddings-{32,64,128}.jsonl
/// real/  selector/  enroll/  test/  noise/
/// ```
///
/// Each corpus directory holds `manifest.jsonl` and an `audio/` folder;
/// `noise/` holds `noise.jsonl`.
pub fn gen_corpus(config: &WorldConfig, close_match_queries: usize, out: &Path) -> Result<CorpusSummary> {
    let world = World::new(config.clone())?;
    let s = config.seed;
    mkdir(out)?;
    write_json(out.join("world.json"), config)?;
    write_json(out.join("backend.json"), &world.backend)?;
    write_text(&out.join("lexicon.txt"), &(world.lexicon.join("\n") + "\n"))?;
    world.queries(close_match_queries, "popular").save(out.join("queries.txt"))?;
    for d in TTS_DIMS {
        save_embeddings(out.join(format!("embeddings-{d}.jsonl")), &world.tts_embeddings(d)?)?;
    }
    let rirs = world.rirs()?;
    write_json(out.join("rirs.json"), &rirs)?;

    let noise_dir = out.join("noise");
    mkdir(&noise_dir)?;
    let clips = world.noise_clips(NoiseSet::Train)?;
    let mut noise_records = Vec::new();
    for c in &clips {
        let rel = PathBuf::from(format!("{}.wav", c.clip_id));
        save_wav(noise_dir.join(&rel), &c.waveform)?;
        noise_records.push(NoiseRecord {
            clip_id: c.clip_id.clone(),
            path: rel,
            category: c.category,
            duration_s: c.waveform.duration_s(),
        });
    }
    NoiseRecord::write_jsonl(noise_dir.join("noise.jsonl"), &noise_records)?;

    let write_group = |name: &str, speakers: &[Speaker], n: usize, domain: Domain, query: bool| -> Result<usize> {
        let dir = out.join(name);
        mkdir(&dir.join("audio"))?;
        let mut rng = seed::derive_rng(s, "corpus-text", name);
        let mut records = Vec::new();
        for sp in speakers {
            for j in 0..n {
                let id = format!("{}-{name}{j:03}", sp.id);
                let words = if query { world.query(&mut rng) } else { world.sentence(&mut rng) };
                let w = world.record(sp, &words, domain, seed::derive(s, "corpus-audio", &id))?;
                let rel = PathBuf::from(format!("audio/{id}.wav"));
                save_wav(dir.join(&rel), &w)?;
                records.push(record(&id, &sp.id, rel, &words, DataGroup::Real.tags(), &w));
            }
        }
        Manifest::new(records, &dir)?.save(dir.join(MANIFEST_FILE))?;
        Ok(speakers.len() * n)
    };
    let wc = &world.config;
    Ok(CorpusSummary {
        real: write_group("real", world.real(), wc.real_utterances, Domain::Studio, false)?,
        selector: write_group("selector", &world.selector, wc.selector_utterances, Domain::Studio, false)?,
        enroll: write_group("enroll", &world.eval, wc.enroll_utterances, Domain::Field, true)?,
        test: write_group("test", &world.eval, wc.test_utterances, Domain::Field, true)?,
        noise_clips: clips.len(),
        rirs: rirs.len(),
    })
}

// ----------------------------------------------------------------- featurize

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    pub written: usize,
    /// Utterances with too little speech.
    pub skipped: Vec<String>,
    /// `(utterance id, error)` for records that could not be read.
    pub failed: Vec<(String, String)>,
}

/// Writes `feats/<id>.feat` per utterance and `manifest.jsonl` listing the
/// featurized records with their `features_path`. Too-short utterances are
/// skipped and unreadable ones reported; neither stops the run.
pub fn featurize_manifest(manifest: &Path, out: &Path) -> Result<FeaturizeSummary> {
    let m = Manifest::read(manifest)?;
    mkdir(&out.join("feats"))?;
    let mut summary = FeaturizeSummary::default();
    let mut records = Vec::new();
    for r in &m.records {
        let audio = m.audio_path(r);
        let w = match load_wav(&audio) {
            Ok(w) => w,
            Err(e) if e.is_data_error() => {
                summary.failed.push((r.utterance_id.clone(), e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let Some(f) = featurize(&w)? else {
            summary.skipped.push(r.utterance_id.clone());
            continue;
        };
        let rel = PathBuf::from(format!("feats/{}.feat", r.utterance_id));
        write_feature_dump(out.join(&rel), &f)?;
        let mut r = r.clone();
        r.audio_path = absolute(&audio)?;
        r.features_path = Some(rel);
        records.push(r);
        summary.written += 1;
    }
    Manifest::new(records, out)?.save(out.join(MANIFEST_FILE))?;
    Ok(summary)
}

// ------------------------------------------------------------------- augment

pub fn load_noise(noise_manifest: &Path) -> Result<Vec<NoiseClip>> {
    let base = noise_manifest.parent().unwrap_or(Path::new(""));
    NoiseRecord::read_jsonl(noise_manifest)?
        .iter()
        .map(|r| r.load(base))
        .collect()
}

pub fn load_rirs(path: &Path) -> Result<Vec<RoomImpulseResponse>> {
    let v: Vec<RoomImpulseResponse> = read_json(path)?;
    v.into_iter()
        .map(|r| RoomImpulseResponse::from_taps(r.taps, r.sample_rate, r.rt60_ms))
        .collect()
}

/// MTR copies of every utterance: `audio/<id>-mtrNN.wav` plus a manifest of
/// the copies alone (input size x copies records), each tagged `mtr`.
pub fn augment_manifest(
    manifest: &Path,
    noise_manifest: &Path,
    rirs: Option<&Path>,
    cfg: &MtrConfig,
    out: &Path,
) -> Result<usize> {
    cfg.validate()?;
    let m = Manifest::load(manifest)?;
    let res = MtrResources {
        noises: load_noise(noise_manifest)?,
        rirs: rirs.map(load_rirs).transpose()?.unwrap_or_default(),
    };
    mkdir(&out.join("audio"))?;
    let mut records = Vec::new();
    for r in &m.records {
        let w = load_wav(m.audio_path(r))?;
        for (k, copy) in mtr_augment_utterance(&r.utterance_id, &w, cfg, &res)?.into_iter().enumerate() {
            let id = format!("{}-mtr{k:02}", r.utterance_id);
            let rel = PathBuf::from(format!("audio/{id}.wav"));
            save_wav(out.join(&rel), &copy.waveform)?;
            let mut tags = r.tags.clone();
            tags.insert(Tag::Mtr);
            records.push(record(&id, &r.speaker_id, rel, &r.words(), tags, &copy.waveform));
        }
    }
    let n = records.len();
    Manifest::new(records, out)?.save(out.join(MANIFEST_FILE))?;
    Ok(n)
}

// --------------------------------------------------------------- utterances

/// Featurized utterances of a manifest: stored dumps where present,
/// otherwise computed from the audio. Too-short utterances are dropped.
pub fn load_utterances(manifest: &Path) -> Result<Vec<Utterance>> {
    let m = Manifest::read(manifest)?;
    let mut out = Vec::with_capacity(m.len());
    for r in &m.records {
        let features = match &r.features_path {
            Some(p) => read_feature_dump(m.resolve(p))?,
            None => match featurize(&load_wav(m.audio_path(r))?)? {
                Some(f) => f,
                None => continue,
            },
        };
        out.push(Utterance {
            id: r.utterance_id.clone(),
            speaker: r.speaker_id.clone(),
            tags: r.tags.clone(),
            transcript: r.words(),
            features,
        });
    }
    Ok(out)
}

fn embed_utts(params: &ModelParams, utts: &[Utterance]) -> Result<Vec<DVector>> {
    let stacked: Vec<StackedFeatures> = utts
        .iter()
        .map(|u| StackedFeatures {
            frames: u.features.clone(),
            source_frame_count: 2 * u.features.nrows(),
        })
        .collect();
    embed_features(params, &stacked.iter().collect::<Vec<_>>())
}

/// Raw mean d-vector per speaker, in speaker order.
fn speaker_profiles(params: &ModelParams, utts: &[Utterance]) -> Result<Vec<Vec<f64>>> {
    let mut by_spk: BTreeMap<&str, Vec<DVector>> = BTreeMap::new();
    for (u, d) in utts.iter().zip(embed_utts(params, utts)?) {
        by_spk.entry(&u.speaker).or_default().push(d);
    }
    Ok(by_spk
        .values()
        .map(|ds| {
            let mut mean = vec![0.0; ds[0].dim()];
            for d in ds {
                mean.iter_mut().zip(d.values()).for_each(|(m, x)| *m += x / ds.len() as f64);
            }
            mean
        })
        .collect())
}

// -------------------------------------------------------------- build-voices

#[derive(Debug, Clone)]
pub struct BuildVoicesArgs {
    /// `(pool dimension, embedding table)`.
    pub embeddings: Vec<(usize, PathBuf)>,
    /// Frozen selection model.
    pub model: PathBuf,
    /// JSON of the synthesizer backend.
    pub backend: PathBuf,
    /// Probe transcripts, one per line.
    pub probes: PathBuf,
    /// Text for the output corpus; the probes when absent.
    pub transcripts: Option<PathBuf>,
    /// Real recordings, for the similarity part of the report.
    pub real_manifest: Option<PathBuf>,
    pub voices: VoiceBuildConfig,
    /// Replace `voices.threshold` by this quantile of the pairwise cosines
    /// among the real speakers' profiles; needs `real_manifest`.
    pub threshold_quantile: Option<f64>,
    pub utterances_per_voice: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Writes `selection.json`, `voices.jsonl` (accepted voices), and the
/// synthesized corpus (`audio/`, `manifest.jsonl`, tagged `synth` and the
/// voice's pool).
pub fn build_voices_cmd(a: &BuildVoicesArgs) -> Result<SelectionReport> {
    let tables: Vec<(usize, Vec<SpeakerEmbedding>)> = a
        .embeddings
        .iter()
        .map(|(d, p)| {
            let t = load_embeddings(p)?;
            if let Some(e) = t.iter().find(|e| e.dim() != *d) {
                return Err(Error::Format(format!(
                    "{}: {}-d embedding in the {d}-d table",
                    p.display(),
                    e.dim()
                )));
            }
            Ok((*d, t))
        })
        .collect::<Result<_>>()?;
    let model = read_checkpoint(&a.model)?;
    let backend: ParamVoice = read_json(&a.backend)?;
    let probes = load_text_corpus(&a.probes, Condition::CloseMatch)?;
    let real = match &a.real_manifest {
        Some(p) => Some(load_utterances(p)?),
        None => None,
    };
    let profiles = real.as_ref().map(|u| speaker_profiles(&model, u)).transpose()?;
    let mut voice_cfg = a.voices.clone();
    if let Some(q) = a.threshold_quantile {
        let p = profiles
            .as_ref()
            .ok_or_else(|| Error::Config("a threshold quantile needs the real manifest".into()))?;
        voice_cfg.threshold = calibrated_threshold(p, q)?;
    }
    let build = build_voices(
        &tables,
        &model,
        &backend,
        &probes.utterances,
        profiles.as_deref(),
        &voice_cfg,
        a.seed,
    )?;
    let mut report = build.report.clone();
    if let Some(p) = &profiles {
        report.real_128 = p.len();
    }
    mkdir(&a.out.join("audio"))?;
    write_json(a.out.join("selection.json"), &report)?;
    let voices: Vec<SpeakerEmbedding> = build.selected.voices.iter().map(|c| c.embedding.clone()).collect();
    save_embeddings(a.out.join("voices.jsonl"), &voices)?;

    let text = match &a.transcripts {
        Some(p) => load_text_corpus(p, Condition::CloseMatch)?,
        None => probes,
    };
    let records = synthesize_corpus(&backend, &voices, &text, a.utterances_per_voice, a.seed, &a.out)?;
    Manifest::new(records, &a.out)?.save(a.out.join(MANIFEST_FILE))?;
    Ok(report)
}

/// `per_voice` utterances per voice with text drawn from `text`.
pub fn synthesize_corpus(
    synth: &dyn Synthesizer,
    voices: &[SpeakerEmbedding],
    text: &TranscriptSet,
    per_voice: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<ManifestRecord>> {
    if text.is_empty() && per_voice > 0 && !voices.is_empty() {
        return Err(Error::Config("no transcripts to synthesize".into()));
    }
    let mut rng = seed::derive_rng(seed, "synth-text", text.condition.name());
    let mut records = Vec::new();
    for v in voices {
        let mut tags = DataGroup::TtsSampled.tags();
        tags.extend(Tag::pool(v.source_model_dim));
        for j in 0..per_voice {
            let words = &text.utterances[rng.random_range(0..text.len())];
            let id = format!("{}-t{j:03}", v.speaker_id);
            let w = synth.synthesize(v, words, seed::derive(seed, "synth-audio", &id))?;
            let rel = PathBuf::from(format!("audio/{id}.wav"));
            save_wav(out.join(&rel), &w)?;
            records.push(record(&id, &v.speaker_id, rel, words, tags.clone(), &w));
        }
    }
    Ok(records)
}

// ----------------------------------------------------------- gen-transcripts

#[derive(Debug, Clone)]
pub struct TranscriptArgs {
    pub condition: Condition,
    /// Utterances to generate; a corpus-backed condition takes the whole
    /// corpus when absent.
    pub n: Option<usize>,
    pub lexicon: Option<PathBuf>,
    /// Query corpus (close-match) or evaluation transcripts (exact-match).
    pub corpus: Option<PathBuf>,
    pub seed: u64,
}

pub fn gen_transcripts_cmd(a: &TranscriptArgs) -> Result<(TranscriptSet, VocabReport)> {
    let mut rng = seed::derive_rng(a.seed, "transcripts", a.condition.name());
    let need_n = || {
        a.n.ok_or_else(|| Error::Config(format!("condition {} needs an utterance count", a.condition)))
    };
    let corpus = || {
        a.corpus
            .as_ref()
            .ok_or_else(|| Error::Config(format!("condition {} needs a text corpus", a.condition)))
            .and_then(|p| load_text_corpus(p, a.condition))
    };
    let lexicon = || match &a.lexicon {
        Some(p) => load_lexicon(p),
        None => Ok(default_lexicon()),
    };
    let set = match a.condition {
        Condition::RandomDigits => gen_digits(need_n()?, &mut rng),
        Condition::RandomWords100 => gen_random_words(&lexicon()?, Some(100), need_n()?, &mut rng)?,
        Condition::RandomWordsFull => gen_random_words(&lexicon()?, None, need_n()?, &mut rng)?,
        Condition::CloseMatch => {
            let mut c = corpus()?;
            if let Some(n) = a.n {
                if c.is_empty() {
                    return Err(Error::Config("empty query corpus".into()));
                }
                c.utterances = (0..n)
                    .map(|_| c.utterances[rng.random_range(0..c.len())].clone())
                    .collect();
            }
            c
        }
        Condition::ExactMatch => corpus()?,
        Condition::ExactMatchShuffled => shuffle_words(&corpus()?, &mut rng),
    };
    let report = vocab_report(&set);
    Ok((set, report))
}

// --------------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainArgs {
    /// Every record of every manifest is a candidate; the recipe's tag
    /// patterns pick the sources.
    pub manifests: Vec<PathBuf>,
    pub sources: Vec<SourceSpec>,
    pub train: TrainConfig,
    pub seed: u64,
    pub out: PathBuf,
    /// `step loss wall_ms` lines.
    pub log: Option<PathBuf>,
}

pub fn recipe_of(name: Option<&str>, custom: Option<Vec<SourceSpec>>) -> Result<Vec<SourceSpec>> {
    match (name, custom) {
        (_, Some(s)) if !s.is_empty() => Ok(s),
        (Some(n), _) => Ok(Recipe::parse(n)?.sources()),
        _ => Err(Error::Config("a recipe name or a list of sources is required".into())),
    }
}

pub fn train_cmd(a: &TrainArgs) -> Result<ModelParams> {
    let mut utts = Vec::new();
    let mut seen = BTreeSet::new();
    for m in &a.manifests {
        for u in load_utterances(m)? {
            if !seen.insert(u.id.clone()) {
                return Err(Error::Config(format!("utterance {} appears in two manifests", u.id)));
            }
            utts.push(u);
        }
    }
    let sources = recipe_sources(&a.sources, utts.iter())?;
    let mut trainer = Trainer::new(a.train.clone(), sources, a.seed)?;
    let mut log = match &a.log {
        Some(p) => Some((p, std::fs::File::create(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };
    let mut io_err = None;
    trainer.run(|e| {
        if let Some((p, f)) = log.as_mut() {
            if let Err(err) = writeln!(f, "{}", e.to_line()) {
                io_err.get_or_insert(Error::io(p, err));
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let params = trainer.into_params();
    write_checkpoint(&a.out, &params)?;
    Ok(params)
}

// ------------------------------------------------------------------ evaluate

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub model: PathBuf,
    pub enroll: PathBuf,
    pub test: PathBuf,
    /// A stored trial list; otherwise one is built.
    pub trials: Option<PathBuf>,
    /// Sampled trial counts; every pair when absent.
    pub n_target: Option<usize>,
    pub n_nontarget: Option<usize>,
    pub seed: u64,
    pub recipe: Option<String>,
    pub with_mtr: Option<bool>,
    /// Scored trial list.
    pub scores_out: Option<PathBuf>,
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<EerReport> {
    let params = read_checkpoint(&a.model)?;
    let enroll_utts = load_utterances(&a.enroll)?;
    let test = load_utterances(&a.test)?;
    let mut trials = match &a.trials {
        Some(p) => TrialSet::load(p)?,
        None => {
            let en: Vec<(&str, &str)> = enroll_utts.iter().map(|u| (u.id.as_str(), u.speaker.as_str())).collect();
            let te: Vec<(&str, &str)> = test.iter().map(|u| (u.id.as_str(), u.speaker.as_str())).collect();
            build_trials(&en, &te, a.n_target, a.n_nontarget, &mut seed::derive_rng(a.seed, "trials", ""))?
        }
    };
    let mut by_spk: BTreeMap<String, Vec<DVector>> = BTreeMap::new();
    for (u, d) in enroll_utts.iter().zip(embed_utts(&params, &enroll_utts)?) {
        by_spk.entry(u.speaker.clone()).or_default().push(d);
    }
    let models: BTreeMap<String, EnrollmentModel> = by_spk
        .iter()
        .map(|(s, v)| Ok((s.clone(), enroll(s, v)?)))
        .collect::<Result<_>>()?;
    let tests: BTreeMap<String, DVector> = test.iter().map(|u| u.id.clone()).zip(embed_utts(&params, &test)?).collect();
    let mut report = score_trials(&mut trials, &models, &tests)?;
    report.recipe = a.recipe.clone();
    report.with_mtr = a.with_mtr.or_else(|| a.recipe.as_deref().and_then(|r| Recipe::parse(r).ok()).map(|r| r.with_mtr()));
    if let Some(p) = &a.scores_out {
        trials.save(p)?;
    }
    Ok(report)
}

// -------------------------------------------------------------------- report

/// Markdown table over EER reports, one row per report in the given order.
pub fn report_table(reports: &[EerReport]) -> String {
    let mut s = String::from("| Recipe | MTR | EER (%) | Target | Nontarget |\n|---|---|---|---|---|\n");
    for r in reports {
        let mtr = match r.with_mtr {
            Some(true) => "yes",
            Some(false) => "no",
            None => "-",
        };
        s.push_str(&format!(
            "| {} | {mtr} | {:.2} | {} | {} |\n",
            r.recipe.as_deref().unwrap_or("-"),
            r.eer_percent,
            r.n_target,
            r.n_nontarget
        ));
    }
    s
}

pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<EerReport>> {
    paths.iter().map(read_json).collect()
}
