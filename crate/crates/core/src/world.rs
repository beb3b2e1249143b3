//! Generated desk-scale universe standing in for recorded corpora.
//!
//! Every speaker is a point in the twelve-dimensional voice latent of
//! [`ParamVoice`]. "Real" recordings render that latent with natural
//! per-utterance variation through a studio channel; evaluation audio goes
//! through a degraded channel (band limiting, reverb, noise) with query-like
//! text. The TTS side sees each inventory speaker as an embedding whose
//! projection onto the backend's basis is the speaker's latent.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::augment::{apply_reverb, loop_noise, mix_noise, synth_rir, NoiseCategory, NoiseClip, RoomImpulseResponse};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::transcripts::{generate_lexicon, Condition, TranscriptSet, MAX_WORDS, MIN_WORDS};
use crate::voices::{render, ParamVoice, RenderStyle, SpeakerEmbedding, VoiceParams, LATENT_DIM};

/// SNR range of evaluation recordings.
pub const FIELD_SNR_DB: (f64, f64) = (10.0, 28.0);
/// Word count range of read-speech sentences.
pub const SENTENCE_WORDS: (usize, usize) = (8, 16);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    /// Speakers whose recordings form the real training corpus. They are
    /// also the first entries of the TTS inventory.
    pub real_speakers: usize,
    /// Further TTS inventory speakers with no recordings in the corpus.
    pub extra_tts_speakers: usize,
    /// Disjoint speakers used only for the selection model.
    pub selector_speakers: usize,
    pub eval_speakers: usize,
    pub real_utterances: usize,
    pub selector_utterances: usize,
    pub enroll_utterances: usize,
    pub test_utterances: usize,
    pub lexicon_size: usize,
    pub query_vocabulary: usize,
    pub noise_clips_per_category: usize,
    pub noise_clip_s: f64,
    pub rirs: usize,
    /// Spread of the TTS embedding outside the voice subspace.
    pub embedding_nuisance: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            real_speakers: 24,
            extra_tts_speakers: 40,
            selector_speakers: 32,
            eval_speakers: 16,
            real_utterances: 16,
            selector_utterances: 16,
            enroll_utterances: 3,
            test_utterances: 20,
            lexicon_size: 6000,
            query_vocabulary: 800,
            noise_clips_per_category: 2,
            noise_clip_s: 4.0,
            rirs: 8,
            embedding_nuisance: 0.3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.real_speakers < 2 || self.eval_speakers < 2 || self.selector_speakers < 2 {
            return Err(Error::Config("every speaker group needs at least 2 speakers".into()));
        }
        if self.real_utterances == 0 || self.enroll_utterances == 0 || self.test_utterances == 0 {
            return Err(Error::Config("utterance counts must be positive".into()));
        }
        if self.query_vocabulary == 0 || self.query_vocabulary > self.lexicon_size {
            return Err(Error::Config("query vocabulary must lie in [1, lexicon_size]".into()));
        }
        if self.noise_clips_per_category == 0 || self.noise_clip_s <= 0.0 {
            return Err(Error::Config("noise corpus must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub latent: Vec<f64>,
}

impl Speaker {
    pub fn params(&self) -> VoiceParams {
        VoiceParams::from_latent(&self.latent)
    }
}

/// Population prior over voice latents: a two-mode first coordinate with
/// the formant scales shifted along with it.
pub fn sample_latent(rng: &mut Rng) -> Vec<f64> {
    let mode = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut z: Vec<f64> = (0..LATENT_DIM)
        .map(|_| StandardNormal.sample(rng))
        .collect::<Vec<f64>>();
    z[0] = 1.2 * mode + 0.5 * z[0];
    for v in z.iter_mut().take(4).skip(1) {
        *v += 0.5 * mode;
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Training recordings: clean studio channel.
    Studio,
    /// Evaluation recordings: degraded channel.
    Field,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub lexicon: Vec<String>,
    /// Query words ordered by popularity.
    pub query_words: Vec<String>,
    /// TTS training speakers; the first `real_speakers` have recordings.
    pub inventory: Vec<Speaker>,
    pub selector: Vec<Speaker>,
    pub eval: Vec<Speaker>,
    pub backend: ParamVoice,
    query_dist: WeightedIndex<f64>,
    field_noise: OnceLock<Vec<NoiseClip>>,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let s = config.seed;
        let lexicon = generate_lexicon(config.lexicon_size, seed::derive(s, "lexicon", ""));
        let mut query_words = lexicon.clone();
        query_words.shuffle(&mut seed::derive_rng(s, "query-words", ""));
        query_words.truncate(config.query_vocabulary);
        let weights: Vec<f64> = (0..query_words.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let query_dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
        let group = |name: &str, n: usize| -> Vec<Speaker> {
            let mut rng = seed::derive_rng(s, "speakers", name);
            (0..n)
                .map(|i| Speaker {
                    id: format!("{name}{i:03}"),
                    latent: sample_latent(&mut rng),
                })
                .collect()
        };
        let mut inventory = group("real", config.real_speakers);
        inventory.extend(group("tts", config.extra_tts_speakers));
        Ok(Self {
            lexicon,
            query_words,
            selector: group("sel", config.selector_speakers),
            eval: group("eval", config.eval_speakers),
            inventory,
            backend: ParamVoice::new(seed::derive(s, "backend", "")),
            query_dist,
            field_noise: OnceLock::new(),
            config,
        })
    }

    pub fn real(&self) -> &[Speaker] {
        &self.inventory[..self.config.real_speakers]
    }

    /// TTS-side embeddings of the whole inventory at dimension `dim`.
    pub fn tts_embeddings(&self, dim: usize) -> Result<Vec<SpeakerEmbedding>> {
        let mut rng = seed::derive_rng(self.config.seed, "tts-embeddings", &dim.to_string());
        self.inventory
            .iter()
            .map(|sp| {
                self.backend
                    .embed_latent(&sp.id, &sp.latent, dim, self.config.embedding_nuisance, &mut rng)
            })
            .collect()
    }

    /// Query-like text: 3-7 words, Zipf-distributed over the query vocabulary.
    pub fn query(&self, rng: &mut Rng) -> Vec<String> {
        let len = rng.random_range(MIN_WORDS..=MAX_WORDS);
        (0..len)
            .map(|_| self.query_words[self.query_dist.sample(rng)].clone())
            .collect()
    }

    pub fn queries(&self, n: usize, stage: &str) -> TranscriptSet {
        let mut rng = seed::derive_rng(self.config.seed, "queries", stage);
        TranscriptSet {
            condition: Condition::CloseMatch,
            utterances: (0..n).map(|_| self.query(&mut rng)).collect(),
        }
    }

    /// Read-speech text over the whole lexicon, as in the real corpus:
    /// longer than queries.
    pub fn sentence(&self, rng: &mut Rng) -> Vec<String> {
        let len = rng.random_range(SENTENCE_WORDS.0..=SENTENCE_WORDS.1);
        (0..len)
            .map(|_| self.lexicon[rng.random_range(0..self.lexicon.len())].clone())
            .collect()
    }

    /// A recording of `speaker` saying `words`.
    pub fn record(&self, speaker: &Speaker, words: &[String], domain: Domain, seed: u64) -> Result<Waveform> {
        let mut rng = seed::rng(seed);
        let voice = render(&speaker.params(), words, &RenderStyle::human(), &mut rng)?;
        match domain {
            Domain::Studio => studio_channel(voice, &mut rng),
            Domain::Field => self.field_channel(voice, &mut rng),
        }
    }

    fn field_channel(&self, w: Waveform, rng: &mut Rng) -> Result<Waveform> {
        let mut x = w.samples;
        // 70% phones, 30% laptops
        if rng.random::<f64>() < 0.7 {
            Biquad::highpass(300.0, 0.7).run(&mut x);
            Biquad::lowpass(3400.0, 0.7).run(&mut x);
        } else {
            Biquad::highpass(150.0, 0.7).run(&mut x);
            Biquad::peaking(rng.random_range(1500.0..4000.0), 1.0, rng.random_range(-6.0..6.0)).run(&mut x);
        }
        let mut w = Waveform::new(x, SAMPLE_RATE)?;
        if rng.random::<f64>() < 0.3 {
            let rir = synth_rir(rng.random_range(200.0..600.0), SAMPLE_RATE, rng.random())?;
            w = apply_reverb(&w, &rir)?;
        }
        let clips = match self.field_noise.get() {
            Some(c) => c,
            None => {
                let c = self.noise_clips(NoiseSet::Field)?;
                self.field_noise.get_or_init(|| c)
            }
        };
        let clip = &clips[rng.random_range(0..clips.len())].waveform;
        let noise = loop_noise(clip, rng.random_range(0..clip.len()), w.len());
        let mixed = mix_noise(&w, &noise, rng.random_range(FIELD_SNR_DB.0..FIELD_SNR_DB.1))?;
        Ok(mixed.mixture.clip())
    }

    /// Noise clips for MTR (`Train`) or the evaluation channel (`Field`).
    /// The two sets share categories but no audio.
    pub fn noise_clips(&self, set: NoiseSet) -> Result<Vec<NoiseClip>> {
        let mut out = Vec::new();
        for cat in NoiseCategory::ALL {
            for i in 0..self.config.noise_clips_per_category {
                let id = format!("{}-{}-{i}", set.name(), category_name(cat));
                let mut rng = seed::derive_rng(self.config.seed, "noise", &id);
                let waveform = noise_clip(cat, self.config.noise_clip_s, &self.lexicon, &mut rng)?;
                out.push(NoiseClip {
                    clip_id: id,
                    category: cat,
                    waveform,
                });
            }
        }
        Ok(out)
    }

    /// Room responses for MTR, RT60 spread over 200-900 ms.
    pub fn rirs(&self) -> Result<Vec<RoomImpulseResponse>> {
        let n = self.config.rirs;
        (0..n)
            .map(|i| {
                let rt60 = 200.0 + 700.0 * i as f64 / (n.max(2) - 1) as f64;
                synth_rir(rt60, SAMPLE_RATE, seed::derive(self.config.seed, "rir", &i.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSet {
    Train,
    Field,
}

impl NoiseSet {
    fn name(&self) -> &'static str {
        match self {
            NoiseSet::Train => "train",
            NoiseSet::Field => "field",
        }
    }
}

fn category_name(c: NoiseCategory) -> &'static str {
    match c {
        NoiseCategory::Cafe => "cafe",
        NoiseCategory::Car => "car",
        NoiseCategory::Ambient => "ambient",
        NoiseCategory::Music => "music",
        NoiseCategory::Other => "other",
    }
}

/// Mild random tilt and a faint room tone.
fn studio_channel(w: Waveform, rng: &mut Rng) -> Result<Waveform> {
    let mut x = w.samples;
    let gain = rng.random_range(-3.0..3.0);
    Biquad::peaking(rng.random_range(500.0..4000.0), 0.8, gain).run(&mut x);
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let sd = (power * 10f64.powf(-35.0 / 10.0)).sqrt();
    let n = Normal::new(0.0, sd.max(1e-12)).expect("valid normal");
    for v in x.iter_mut() {
        *v += n.sample(rng);
    }
    Ok(Waveform::new(x, SAMPLE_RATE)?.clip())
}

/// RBJ cookbook biquad, direct form I.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    fn omega(f: f64) -> (f64, f64) {
        let w = 2.0 * PI * f / SAMPLE_RATE as f64;
        (w.cos(), w.sin())
    }

    fn lowpass(f: f64, q: f64) -> Self {
        let (c, s) = Self::omega(f);
        let alpha = s / (2.0 * q);
        Self::from_raw([(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0], 1.0 + alpha, -2.0 * c, 1.0 - alpha)
    }

    fn highpass(f: f64, q: f64) -> Self {
        let (c, s) = Self::omega(f);
        let alpha = s / (2.0 * q);
        Self::from_raw([(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0], 1.0 + alpha, -2.0 * c, 1.0 - alpha)
    }

    fn peaking(f: f64, q: f64, gain_db: f64) -> Self {
        let (c, s) = Self::omega(f);
        let alpha = s / (2.0 * q);
        let a = 10f64.powf(gain_db / 40.0);
        Self::from_raw(
            [1.0 + alpha * a, -2.0 * c, 1.0 - alpha * a],
            1.0 + alpha / a,
            -2.0 * c,
            1.0 - alpha / a,
        )
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

/// A synthetic clip of one noise category; the cafe babble draws its words
/// from `lexicon`.
pub fn noise_clip(cat: NoiseCategory, seconds: f64, lexicon: &[String], rng: &mut Rng) -> Result<Waveform> {
    let sr = SAMPLE_RATE as f64;
    let len = (seconds * sr) as usize;
    let white = |rng: &mut Rng| -> f64 { StandardNormal.sample(rng) };
    let mut x = vec![0.0; len];
    match cat {
        NoiseCategory::Cafe => {
            // babble of several talkers plus the odd clink
            for _ in 0..5 {
                let z = sample_latent(rng);
                let words: Vec<String> = (0..(seconds * 6.0) as usize)
                    .map(|_| lexicon[rng.random_range(0..lexicon.len())].clone())
                    .collect();
                let v = render(&VoiceParams::from_latent(&z), &words, &RenderStyle::human(), rng)?;
                let off = rng.random_range(0..len);
                for (i, s) in v.samples.iter().enumerate() {
                    x[(off + i) % len] += s;
                }
            }
            for _ in 0..(seconds * 2.0) as usize {
                let at = rng.random_range(0..len);
                let f = rng.random_range(2500.0..5000.0);
                for i in 0..(0.05 * sr) as usize {
                    let t = i as f64 / sr;
                    x[(at + i) % len] += 0.3 * (2.0 * PI * f * t).sin() * (-t / 0.01).exp();
                }
            }
        }
        NoiseCategory::Car => {
            let hum = rng.random_range(25.0..60.0);
            let mut b = 0.0;
            for (i, v) in x.iter_mut().enumerate() {
                b = 0.995 * b + 0.05 * white(rng);
                let t = i as f64 / sr;
                *v = b + 0.2 * ((2.0 * PI * hum * t).sin() + 0.5 * (4.0 * PI * hum * t).sin());
            }
        }
        NoiseCategory::Ambient => {
            // pink-ish: sum of one-pole lowpassed white noises
            let poles = [0.99, 0.95, 0.8];
            let mut s = [0.0; 3];
            for v in x.iter_mut() {
                let w = white(rng);
                for (st, p) in s.iter_mut().zip(poles) {
                    *st = p * *st + (1.0 - p) * w;
                }
                *v = s.iter().sum::<f64>() + 0.05 * w;
            }
        }
        NoiseCategory::Music => {
            let note_len = (rng.random_range(0.15..0.4) * sr) as usize;
            for start in (0..len).step_by(note_len) {
                for _voice in 0..2 {
                    let f = 110.0 * 2f64.powf(rng.random_range(0..36) as f64 / 12.0);
                    for i in 0..note_len.min(len - start) {
                        let t = i as f64 / sr;
                        let env = (-t / 0.3).exp();
                        let tone: f64 = (1..=4)
                            .map(|h| (2.0 * PI * f * h as f64 * t).sin() / h as f64)
                            .sum();
                        x[start + i] += env * tone;
                    }
                }
            }
        }
        NoiseCategory::Other => {
            // bursts of hiss and beeps over a low floor
            for v in x.iter_mut() {
                *v = 0.05 * white(rng);
            }
            let mut at = 0;
            while at < len {
                let dur = (rng.random_range(0.05..0.3) * sr) as usize;
                let beep = rng.random::<bool>();
                let f = rng.random_range(600.0..2000.0);
                for i in 0..dur.min(len - at) {
                    x[at + i] += if beep {
                        (2.0 * PI * f * i as f64 / sr).sin()
                    } else {
                        0.7 * white(rng)
                    };
                }
                at += dur + (rng.random_range(0.1..0.8) * sr) as usize;
            }
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(x, SAMPLE_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> World {
        World::new(WorldConfig {
            lexicon_size: 500,
            query_vocabulary: 100,
            noise_clip_s: 1.0,
            noise_clips_per_category: 1,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn groups_and_determinism() {
        let w = small();
        assert_eq!(w.inventory.len(), 64);
        assert_eq!(w.real().len(), 24);
        assert_eq!(w.eval.len(), 16);
        let again = small();
        assert_eq!(w.inventory, again.inventory);
        let a = w.record(&w.eval[0], &w.query(&mut seed::rng(1)), Domain::Field, 5).unwrap();
        let b = again.record(&again.eval[0], &again.query(&mut seed::rng(1)), Domain::Field, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.peak() <= 1.0);
    }

    #[test]
    fn embeddings_carry_the_latent() {
        let w = small();
        let e = w.tts_embeddings(128).unwrap();
        assert_eq!(e.len(), 64);
        let z = w.backend.latent(&e[3]).unwrap();
        for (a, b) in z.iter().zip(&w.inventory[3].latent) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_sets_differ() {
        let w = small();
        let a = w.noise_clips(NoiseSet::Train).unwrap();
        let b = w.noise_clips(NoiseSet::Field).unwrap();
        assert_eq!(a.len(), 5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.category, y.category);
            assert_ne!(x.waveform, y.waveform);
            assert!(x.waveform.power() > 0.0);
        }
        assert_eq!(w.rirs().unwrap().len(), 8);
    }

    #[test]
    fn queries_use_the_query_vocabulary() {
        let w = small();
        let q = w.queries(500, "t");
        assert!(q.vocabulary().len() <= 100);
        assert!(q.utterances.iter().all(|u| (3..=7).contains(&u.len())));
    }

    #[test]
    fn lowpass_attenuates() {
        let sr = SAMPLE_RATE as f64;
        let mut x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * 6000.0 * i as f64 / sr).sin()).collect();
        Biquad::lowpass(1000.0, 0.7).run(&mut x);
        let p = x[4000..].iter().map(|v| v * v).sum::<f64>() / 4000.0;
        assert!(p < 0.5 * 0.01);
    }
}
