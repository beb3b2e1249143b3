//! Browser demo bindings: synthesize a sampled voice, mix it with noise at
//! a chosen SNR and estimate the SNR back blindly, and compute an EER from
//! score lists.
//!
//! Each export wraps a plain function so the logic also runs (and is
//! tested) on the host.

use synthvox::audio::{Waveform, SAMPLE_RATE};
use synthvox::augment::{loop_noise, mix_noise, wada_snr, NoiseCategory};
use synthvox::eval::{compute_eer, Label};
use synthvox::seed;
use synthvox::transcripts::DIGIT_WORDS;
use synthvox::voices::{render, RenderStyle, VoiceParams};
use synthvox::world::{noise_clip, sample_latent};
use wasm_bindgen::prelude::*;

/// Voice parameters and samples of one synthesized utterance.
pub struct Synthesis {
    pub params: VoiceParams,
    pub samples: Vec<f32>,
}

/// Voice `voice_seed` drawn from the population prior, saying `text`.
/// Empty text says a few digits.
pub fn synthesize_voice(voice_seed: u64, text: &str) -> Result<Synthesis, String> {
    let latent = sample_latent(&mut seed::derive_rng(voice_seed, "demo-voice", ""));
    let params = VoiceParams::from_latent(&latent);
    let mut words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        words = DIGIT_WORDS[1..5].iter().map(|w| w.to_string()).collect();
    }
    let w = render(
        &params,
        &words,
        &RenderStyle::synthetic(),
        &mut seed::derive_rng(voice_seed, "demo-render", text),
    )
    .map_err(|e| e.to_string())?;
    Ok(Synthesis {
        params,
        samples: w.samples.iter().map(|&s| s as f32).collect(),
    })
}

pub struct Mixture {
    pub samples: Vec<f32>,
    /// SNR of the unclipped mixture, by construction.
    pub requested_db: f64,
    pub wada_clean_db: f64,
    pub wada_mixed_db: f64,
}

pub fn parse_category(name: &str) -> Result<NoiseCategory, String> {
    NoiseCategory::ALL
        .into_iter()
        .find(|c| format!("{c:?}").eq_ignore_ascii_case(name))
        .ok_or_else(|| format!("unknown noise category '{name}'"))
}

/// Mixes `speech` with generated noise of `category` at `snr_db`.
pub fn mix_with_noise(speech: &[f32], category: &str, snr_db: f64, noise_seed: u64) -> Result<Mixture, String> {
    let cat = parse_category(category)?;
    let clean = Waveform::new(speech.iter().map(|&s| s as f64).collect(), SAMPLE_RATE).map_err(|e| e.to_string())?;
    let lexicon: Vec<String> = DIGIT_WORDS.iter().map(|w| w.to_string()).collect();
    let clip = noise_clip(cat, 2.0, &lexicon, &mut seed::derive_rng(noise_seed, "demo-noise", category))
        .map_err(|e| e.to_string())?;
    let noise = loop_noise(&clip, 0, clean.len());
    let mixed = mix_noise(&clean, &noise, snr_db).map_err(|e| e.to_string())?;
    Ok(Mixture {
        requested_db: snr_db,
        wada_clean_db: wada_snr(&clean).map_err(|e| e.to_string())?,
        wada_mixed_db: wada_snr(&mixed.mixture).map_err(|e| e.to_string())?,
        samples: mixed.mixture.samples.iter().map(|&s| s as f32).collect(),
    })
}

/// EER and its threshold for target and nontarget score lists.
pub fn eer_of(target: &[f64], nontarget: &[f64]) -> Result<(f64, f64), String> {
    let scores: Vec<f64> = target.iter().chain(nontarget).copied().collect();
    let labels: Vec<Label> = std::iter::repeat_n(Label::Target, target.len())
        .chain(std::iter::repeat_n(Label::Nontarget, nontarget.len()))
        .collect();
    let e = compute_eer(&scores, &labels).map_err(|e| e.to_string())?;
    Ok((e.eer, e.threshold))
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub struct VoiceDemo {
    samples: Vec<f32>,
    f0_hz: f64,
    rate_wps: f64,
    formant_scale: f64,
}

#[wasm_bindgen]
impl VoiceDemo {
    pub fn samples(&self) -> Vec<f32> {
        self.samples.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn f0_hz(&self) -> f64 {
        self.f0_hz
    }
    #[wasm_bindgen(getter)]
    pub fn rate_wps(&self) -> f64 {
        self.rate_wps
    }
    /// Mean of the three formant scales.
    #[wasm_bindgen(getter)]
    pub fn formant_scale(&self) -> f64 {
        self.formant_scale
    }
}

#[wasm_bindgen]
pub fn synthesize(voice_seed: u32, text: &str) -> Result<VoiceDemo, JsValue> {
    let s = synthesize_voice(voice_seed as u64, text).map_err(js)?;
    Ok(VoiceDemo {
        f0_hz: s.params.f0_hz,
        rate_wps: s.params.rate_wps,
        formant_scale: s.params.formant_scale.iter().sum::<f64>() / 3.0,
        samples: s.samples,
    })
}

#[wasm_bindgen]
pub struct MixDemo {
    samples: Vec<f32>,
    requested_db: f64,
    wada_clean_db: f64,
    wada_mixed_db: f64,
}

#[wasm_bindgen]
impl MixDemo {
    pub fn samples(&self) -> Vec<f32> {
        self.samples.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn requested_db(&self) -> f64 {
        self.requested_db
    }
    #[wasm_bindgen(getter)]
    pub fn wada_clean_db(&self) -> f64 {
        self.wada_clean_db
    }
    #[wasm_bindgen(getter)]
    pub fn wada_mixed_db(&self) -> f64 {
        self.wada_mixed_db
    }
}

#[wasm_bindgen]
pub fn mix(speech: &[f32], category: &str, snr_db: f64, noise_seed: u32) -> Result<MixDemo, JsValue> {
    let m = mix_with_noise(speech, category, snr_db, noise_seed as u64).map_err(js)?;
    Ok(MixDemo {
        samples: m.samples,
        requested_db: m.requested_db,
        wada_clean_db: m.wada_clean_db,
        wada_mixed_db: m.wada_mixed_db,
    })
}

/// `[eer, threshold]`.
#[wasm_bindgen]
pub fn eer(target: &[f64], nontarget: &[f64]) -> Result<Vec<f64>, JsValue> {
    let (e, t) = eer_of(target, nontarget).map_err(js)?;
    Ok(vec![e, t])
}
