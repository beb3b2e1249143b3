//! Synthesizer interface and the bundled parametric backend.
//!
//! `ParamVoice` maps a speaker embedding onto six voice parameters through
//! a fixed orthonormal basis per embedding dimension, then renders each
//! word as a short sequence of phone-like segments: an impulse-train (or
//! noise) source, a spectral-tilt lowpass and three cascaded formant
//! resonators whose targets are derived from a hash of the word.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

use super::{Origin, SpeakerEmbedding};

/// Number of voice parameters driven by an embedding.
pub const LATENT_DIM: usize = 12;
/// Noise floor relative to the rendered signal power.
pub const NOISE_FLOOR_DB: f64 = -25.0;
const OUTPUT_PEAK: f64 = 0.5;
/// Formant coefficients are refreshed every this many samples.
const BLOCK: usize = 16;

pub trait Synthesizer {
    /// Renders `transcript` in the voice of `voice`. Deterministic in
    /// `(voice, transcript, seed)`.
    fn synthesize(&self, voice: &SpeakerEmbedding, transcript: &[String], seed: u64) -> Result<Waveform>;
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub f0_hz: f64,
    pub formant_scale: [f64; 3],
    pub rate_wps: f64,
    /// 0 bright, 1 dark.
    pub tilt: f64,
    /// Aspiration noise level in voiced sounds.
    pub breathiness: f64,
    /// Multiplier on every formant bandwidth.
    pub bandwidth_scale: f64,
    /// Fixed speaker resonance above the formants.
    pub high_resonance_hz: f64,
    /// Expansion (> 0) or compression (< 0) of the F1 and F2 ranges.
    pub vowel_warp: [f64; 2],
    /// Share of each word spent in the closure after it.
    pub gap_fraction: f64,
}

impl VoiceParams {
    /// Smooth squashing of a latent vector into the parameter ranges:
    /// f0 80-300 Hz, formant scales 0.85-1.15, rate 3-6 words/s, tilt 0-1,
    /// breathiness 0-0.5, bandwidth scale 0.6-1.6, high resonance
    /// 2800-4500 Hz, vowel warps +-0.3, closure share 0.05-0.3.
    pub fn from_latent(z: &[f64]) -> Self {
        let z = |i: usize| z.get(i).copied().unwrap_or(0.0);
        Self {
            f0_hz: 80.0 + 220.0 * sigmoid(z(0)),
            formant_scale: [
                0.85 + 0.3 * sigmoid(z(1)),
                0.85 + 0.3 * sigmoid(z(2)),
                0.85 + 0.3 * sigmoid(z(3)),
            ],
            rate_wps: 3.0 + 3.0 * sigmoid(z(4)),
            tilt: sigmoid(z(5)),
            breathiness: 0.5 * sigmoid(z(6)),
            bandwidth_scale: 0.6 + sigmoid(z(7)),
            high_resonance_hz: 2800.0 + 1700.0 * sigmoid(z(8)),
            vowel_warp: [-0.3 + 0.6 * sigmoid(z(9)), -0.3 + 0.6 * sigmoid(z(10))],
            gap_fraction: 0.05 + 0.25 * sigmoid(z(11)),
        }
    }
}

/// Per-utterance variation on top of a voice. The zero style renders the
/// voice exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    /// Log-normal spread of f0 per utterance.
    pub f0_jitter: f64,
    /// Log-normal spread of speaking rate per utterance.
    pub rate_jitter: f64,
    /// Log-normal spread of the formant scales per utterance.
    pub formant_jitter: f64,
    /// Additive spread of the spectral tilt per utterance.
    pub tilt_jitter: f64,
    /// Depth of the slow f0 modulation.
    pub intonation: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl RenderStyle {
    pub fn synthetic() -> Self {
        Self {
            f0_jitter: 0.0,
            rate_jitter: 0.0,
            formant_jitter: 0.0,
            tilt_jitter: 0.0,
            intonation: 0.06,
        }
    }

    /// Natural recordings vary more from one utterance to the next.
    pub fn human() -> Self {
        Self {
            f0_jitter: 0.06,
            rate_jitter: 0.10,
            formant_jitter: 0.02,
            tilt_jitter: 0.08,
            intonation: 0.10,
        }
    }

    fn apply(&self, p: &VoiceParams, rng: &mut Rng) -> VoiceParams {
        let mut ln = |s: f64| -> f64 {
            if s > 0.0 {
                {
                let n: f64 = StandardNormal.sample(rng);
                (s * n).exp()
            }
            } else {
                1.0
            }
        };
        let f0 = p.f0_hz * ln(self.f0_jitter);
        let rate = p.rate_wps * ln(self.rate_jitter);
        let fs = [
            p.formant_scale[0] * ln(self.formant_jitter),
            p.formant_scale[1] * ln(self.formant_jitter),
            p.formant_scale[2] * ln(self.formant_jitter),
        ];
        let tilt = if self.tilt_jitter > 0.0 {
            let n: f64 = StandardNormal.sample(rng);
            (p.tilt + self.tilt_jitter * n).clamp(0.0, 1.0)
        } else {
            p.tilt
        };
        VoiceParams {
            f0_hz: f0,
            formant_scale: fs,
            rate_wps: rate,
            tilt,
            ..*p
        }
    }
}

/// One phone-like segment of a word.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phone {
    pub formants: [f64; 3],
    pub voiced: bool,
}

fn unit(h: u64, k: u32) -> f64 {
    // 16 bits per field
    ((h >> (16 * k)) & 0xffff) as f64 / 65535.0
}

/// 1-3 phones per word, from a stable hash of the word.
pub fn word_phones(word: &str) -> Vec<Phone> {
    let h = seed::hash_str(word);
    let n = 1 + (h % 3) as usize;
    (0..n)
        .map(|p| {
            let hp = seed::hash_str(&format!("{word}\u{1}{p}"));
            Phone {
                formants: [
                    250.0 + 600.0 * unit(hp, 0),
                    800.0 + 1600.0 * unit(hp, 1),
                    2200.0 + 1000.0 * unit(hp, 2),
                ],
                voiced: unit(hp, 3) < 0.8,
            }
        })
        .collect()
}

/// Two-pole resonator with unity gain at DC.
#[derive(Default, Clone, Copy)]
struct Resonator {
    a1: f64,
    a2: f64,
    g: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, freq: f64, bw: f64) {
        let sr = SAMPLE_RATE as f64;
        let r = (-PI * bw / sr).exp();
        let c = 2.0 * r * (2.0 * PI * freq / sr).cos();
        self.a1 = c;
        self.a2 = -r * r;
        self.g = 1.0 - c + r * r;
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.g * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Renders a transcript with fixed voice parameters. Utterance length is
/// `words / rate` seconds.
pub fn render(params: &VoiceParams, words: &[String], style: &RenderStyle, rng: &mut Rng) -> Result<Waveform> {
    if words.is_empty() {
        return Err(Error::Parameter("empty transcript".into()));
    }
    let p = style.apply(params, rng);
    if !(p.f0_hz > 0.0 && p.rate_wps > 0.0) {
        return Err(Error::Parameter(format!("invalid voice parameters {p:?}")));
    }
    let sr = SAMPLE_RATE as f64;
    let word_len = (sr / p.rate_wps).round() as usize;
    let total = word_len * words.len();

    // per-sample targets
    let mut formants = vec![[0.0; 3]; total];
    let mut voiced = vec![false; total];
    let mut amp = vec![0.0; total];
    for (w, word) in words.iter().enumerate() {
        let phones = word_phones(word);
        let start = w * word_len;
        let speech = ((1.0 - p.gap_fraction) * word_len as f64) as usize;
        let seg = (speech / phones.len()).max(1);
        let ramp = (0.01 * sr) as usize;
        for (k, ph) in phones.iter().enumerate() {
            let a = start + k * seg;
            let b = if k + 1 == phones.len() { start + speech } else { a + seg };
            for i in a..b.min(total) {
                formants[i] = [
                    (ph.formants[0] + (ph.formants[0] - 550.0) * p.vowel_warp[0]) * p.formant_scale[0],
                    (ph.formants[1] + (ph.formants[1] - 1600.0) * p.vowel_warp[1]) * p.formant_scale[1],
                    ph.formants[2] * p.formant_scale[2],
                ];
                voiced[i] = ph.voiced;
                let edge = (i - a).min(b - 1 - i) as f64;
                let env = if edge < ramp as f64 {
                    0.5 - 0.5 * (PI * edge / ramp as f64).cos()
                } else {
                    1.0
                };
                amp[i] = env * if ph.voiced { 1.0 } else { 0.35 };
            }
        }
        // closure keeps the last phone's formants
        let last = formants[(start + speech).saturating_sub(1).min(total - 1)];
        for f in formants.iter_mut().take((start + word_len).min(total)).skip(start + speech) {
            *f = last;
        }
    }

    // smooth formant trajectories (about 15 ms)
    let alpha = (-1.0 / (0.015 * sr)).exp();
    let mut state = formants[0];
    for f in formants.iter_mut() {
        for j in 0..3 {
            state[j] = alpha * state[j] + (1.0 - alpha) * f[j];
            f[j] = state[j];
        }
    }

    let phase0 = rng.random::<f64>() * 2.0 * PI;
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let tilt_a = 0.3 + 0.65 * p.tilt;
    let mut lp = 0.0;
    let mut phase = rng.random::<f64>();
    let mut carry = 0.0;
    let mut res = [Resonator::default(); 4];
    res[3].tune(p.high_resonance_hz, 250.0 * p.bandwidth_scale);
    let mut out = vec![0.0; total];
    for i in 0..total {
        if i % BLOCK == 0 {
            for (j, r) in res.iter_mut().take(3).enumerate() {
                let f = formants[i][j].min(0.45 * sr);
                r.tune(f, (50.0 + 0.06 * f) * p.bandwidth_scale);
            }
        }
        let t = i as f64 / sr;
        let progress = i as f64 / total as f64;
        let f0 = p.f0_hz
            * (1.0 + style.intonation * (2.0 * PI * 0.7 * t + phase0).sin())
            * (1.05 - 0.1 * progress);

        // impulse train with the pulse split between neighbouring samples
        let mut pulse = carry;
        carry = 0.0;
        phase += f0 / sr;
        if phase >= 1.0 {
            phase -= 1.0;
            let frac = phase / (f0 / sr);
            pulse += 1.0 - frac;
            carry = frac;
        }
        let src = if voiced[i] {
            pulse * (sr / f0).sqrt() + p.breathiness * noise.sample(rng)
        } else {
            0.5 * noise.sample(rng)
        };
        lp = tilt_a * lp + (1.0 - tilt_a) * src;
        let mut y = lp * amp[i];
        for r in res.iter_mut() {
            y = r.process(y);
        }
        out[i] = y;
    }

    let power = out.iter().map(|v| v * v).sum::<f64>() / total as f64;
    let floor = (power * 10f64.powf(NOISE_FLOOR_DB / 10.0)).sqrt();
    for v in out.iter_mut() {
        *v += floor * noise.sample(rng);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= OUTPUT_PEAK / peak);
    }
    Waveform::new(out, SAMPLE_RATE)
}

/// Parametric backend. Each embedding dimension `d` has its own fixed
/// `d x 6` orthonormal basis; the voice latent is the projection of the
/// embedding onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVoice {
    pub seed: u64,
    pub style: RenderStyle,
}

impl ParamVoice {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            style: RenderStyle::synthetic(),
        }
    }

    pub fn with_style(mut self, style: RenderStyle) -> Self {
        self.style = style;
        self
    }

    /// Orthonormal columns (Gram-Schmidt of a seeded Gaussian matrix).
    pub fn basis(&self, dim: usize) -> Result<Array2<f64>> {
        if dim < LATENT_DIM {
            return Err(Error::Parameter(format!(
                "embedding dimension {dim} below the {LATENT_DIM} voice parameters"
            )));
        }
        let mut rng = seed::derive_rng(self.seed, "paramvoice-basis", &dim.to_string());
        let mut q = Array2::<f64>::zeros((dim, LATENT_DIM));
        for j in 0..LATENT_DIM {
            let mut v = Array1::from_shape_simple_fn(dim, || StandardNormal.sample(&mut rng));
            for k in 0..j {
                let col = q.column(k).to_owned();
                let proj = v.dot(&col);
                v.scaled_add(-proj, &col);
            }
            let n = v.dot(&v).sqrt();
            q.column_mut(j).assign(&(v / n));
        }
        Ok(q)
    }

    pub fn latent(&self, voice: &SpeakerEmbedding) -> Result<Vec<f64>> {
        let q = self.basis(voice.dim())?;
        Ok(q.t().dot(&ArrayView1::from(&voice.values[..])).to_vec())
    }

    pub fn params(&self, voice: &SpeakerEmbedding) -> Result<VoiceParams> {
        Ok(VoiceParams::from_latent(&self.latent(voice)?))
    }

    /// A `dim`-d embedding whose latent is `z`, plus isotropic nuisance of
    /// standard deviation `nuisance_sd` in the orthogonal complement.
    pub fn embed_latent(
        &self,
        speaker_id: &str,
        z: &[f64],
        dim: usize,
        nuisance_sd: f64,
        rng: &mut Rng,
    ) -> Result<SpeakerEmbedding> {
        if z.len() != LATENT_DIM {
            return Err(Error::Parameter(format!("latent of length {}", z.len())));
        }
        let q = self.basis(dim)?;
        let mut v = Array1::from_shape_simple_fn(dim, || {
            let n: f64 = StandardNormal.sample(rng);
            nuisance_sd * n
        });
        // remove the nuisance's latent part, then set the latent exactly
        let coords = q.t().dot(&v);
        v -= &q.dot(&coords);
        v += &q.dot(&ArrayView1::from(z));
        Ok(SpeakerEmbedding {
            speaker_id: speaker_id.to_string(),
            values: v.to_vec(),
            origin: Origin::Real,
            source_model_dim: dim,
        })
    }
}

impl Synthesizer for ParamVoice {
    fn synthesize(&self, voice: &SpeakerEmbedding, transcript: &[String], seed: u64) -> Result<Waveform> {
        let params = self.params(voice)?;
        render(&params, transcript, &self.style, &mut seed::rng(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn voice(v: &ParamVoice, head: &[f64]) -> SpeakerEmbedding {
        let mut z = [0.0; LATENT_DIM];
        z[..head.len()].copy_from_slice(head);
        v.embed_latent("v", &z, 32, 0.3, &mut seed::rng(1)).unwrap()
    }

    #[test]
    fn basis_is_orthonormal_and_latent_round_trips() {
        let pv = ParamVoice::new(3);
        let q = pv.basis(64).unwrap();
        let g = q.t().dot(&q);
        for i in 0..LATENT_DIM {
            for j in 0..LATENT_DIM {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
        let z = [0.5, -1.0, 0.2, 0.0, 1.5, -0.3, 0.1, 0.2, -0.7, 1.1, 0.0, -2.0];
        let e = pv.embed_latent("a", &z, 64, 1.0, &mut seed::rng(2)).unwrap();
        for (a, b) in pv.latent(&e).unwrap().iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(pv.basis(LATENT_DIM - 1).is_err());
    }

    #[test]
    fn parameter_ranges() {
        for z in [[-50.0; LATENT_DIM], [50.0; LATENT_DIM], [0.0; LATENT_DIM]] {
            let p = VoiceParams::from_latent(&z);
            assert!((80.0..=300.0).contains(&p.f0_hz));
            assert!((3.0..=6.0).contains(&p.rate_wps));
            assert!(p.formant_scale.iter().all(|s| (0.85..=1.15).contains(s)));
            assert!((0.0..=1.0).contains(&p.tilt));
            assert!((0.0..=0.5).contains(&p.breathiness));
            assert!((0.6..=1.6).contains(&p.bandwidth_scale));
            assert!((2800.0..=4500.0).contains(&p.high_resonance_hz));
            assert!(p.vowel_warp.iter().all(|w| (-0.3..=0.3).contains(w)));
            assert!((0.05..=0.3).contains(&p.gap_fraction));
        }
    }

    #[test]
    fn duration_tracks_rate() {
        let pv = ParamVoice::new(1);
        for z in [&[0.0][..], &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0], &[0.0, 0.0, 0.0, 0.0, -2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]] {
            let e = voice(&pv, z);
            let rate = pv.params(&e).unwrap().rate_wps;
            let t = words("alpha beta gamma delta epsilon");
            let w = pv.synthesize(&e, &t, 4).unwrap();
            let expected = t.len() as f64 / rate;
            assert!((w.duration_s() - expected).abs() / expected < 0.1);
            assert!(w.peak() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let pv = ParamVoice::new(1);
        let e = voice(&pv, &[0.3, 0.1, -0.2, 0.5, 0.0, 0.4]);
        let t = words("one two three");
        assert_eq!(pv.synthesize(&e, &t, 9).unwrap(), pv.synthesize(&e, &t, 9).unwrap());
        let twin = e.clone();
        assert_eq!(pv.synthesize(&e, &t, 9).unwrap(), pv.synthesize(&twin, &t, 9).unwrap());
        assert!(matches!(pv.synthesize(&e, &[], 9), Err(Error::Parameter(_))));
    }

    #[test]
    fn pitch_follows_f0() {
        // autocorrelation peak of a long voiced stretch sits near sr / f0
        let pv = ParamVoice::new(1);
        let p = VoiceParams {
            f0_hz: 150.0,
            rate_wps: 3.0,
            breathiness: 0.0,
            ..VoiceParams::from_latent(&[0.0; LATENT_DIM])
        };
        let style = RenderStyle {
            intonation: 0.0,
            ..RenderStyle::synthetic()
        };
        let t: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let w = render(&p, &t, &style, &mut seed::rng(5)).unwrap();
        let _ = pv;
        let x = &w.samples;
        let lag_of_max = (60..200)
            .max_by(|&a, &b| {
                let ca: f64 = (0..x.len() - a).map(|i| x[i] * x[i + a]).sum();
                let cb: f64 = (0..x.len() - b).map(|i| x[i] * x[i + b]).sum();
                ca.total_cmp(&cb)
            })
            .unwrap();
        // f0 declines by up to 5% over the utterance
        let expected = 16000.0 / 150.0;
        assert!((lag_of_max as f64 - expected).abs() / expected < 0.08, "{lag_of_max}");
    }

    #[test]
    fn phones_are_stable() {
        let a = word_phones("hello");
        assert_eq!(a, word_phones("hello"));
        assert!((1..=3).contains(&a.len()));
        for p in &a {
            assert!((250.0..=850.0).contains(&p.formants[0]));
            assert!((800.0..=2400.0).contains(&p.formants[1]));
            assert!((2200.0..=3200.0).contains(&p.formants[2]));
        }
    }
}
