use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply_reverb, mix_noise, NoiseClip, RoomImpulseResponse};
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrConfig {
    pub snr_low_db: f64,
    pub snr_high_db: f64,
    pub copies_per_utterance: usize,
    pub reverb_probability: f64,
    pub seed: u64,
}

impl Default for MtrConfig {
    fn default() -> Self {
        Self {
            snr_low_db: 3.0,
            snr_high_db: 15.0,
            copies_per_utterance: 15,
            reverb_probability: 0.5,
            seed: 0,
        }
    }
}

impl MtrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_low_db < self.snr_high_db) {
            return Err(Error::Config(format!(
                "SNR range [{}, {}] is empty",
                self.snr_low_db, self.snr_high_db
            )));
        }
        if self.copies_per_utterance == 0 {
            return Err(Error::Config("copies_per_utterance must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.reverb_probability) {
            return Err(Error::Config("reverb_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Noise clips and impulse responses the MTR draws from.
#[derive(Debug, Clone, Default)]
pub struct MtrResources {
    pub noises: Vec<NoiseClip>,
    pub rirs: Vec<RoomImpulseResponse>,
}

/// The random choices behind one MTR copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtrPlan {
    pub noise_index: usize,
    pub noise_offset: usize,
    pub rir_index: Option<usize>,
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct MtrCopy {
    pub waveform: Waveform,
    pub plan: MtrPlan,
}

/// Draws one copy's noise clip, optional RIR (with `reverb_probability`) and
/// SNR from `U[snr_low_db, snr_high_db)`.
pub fn draw_plan<R: Rng>(
    cfg: &MtrConfig,
    noise_lengths: &[usize],
    n_rirs: usize,
    rng: &mut R,
) -> MtrPlan {
    let noise_index = rng.random_range(0..noise_lengths.len());
    let noise_offset = rng.random_range(0..noise_lengths[noise_index].max(1));
    let reverb = rng.random::<f64>() < cfg.reverb_probability;
    let rir_index = (reverb && n_rirs > 0).then(|| rng.random_range(0..n_rirs));
    let snr_db = rng.random_range(cfg.snr_low_db..cfg.snr_high_db);
    MtrPlan {
        noise_index,
        noise_offset,
        rir_index,
        snr_db,
    }
}

/// Tiles `noise` starting at `offset` until it covers `len` samples.
pub fn loop_noise(noise: &Waveform, offset: usize, len: usize) -> Waveform {
    let n = noise.len();
    let samples = (0..len).map(|i| noise.samples[(offset + i) % n]).collect();
    Waveform {
        samples,
        sample_rate: noise.sample_rate,
    }
}

/// Produces `copies_per_utterance` reverberated and/or noisy variants.
pub fn mtr_augment<R: Rng>(
    utterance: &Waveform,
    cfg: &MtrConfig,
    res: &MtrResources,
    rng: &mut R,
) -> Result<Vec<MtrCopy>> {
    cfg.validate()?;
    if res.noises.is_empty() {
        return Err(Error::Config("MTR needs a non-empty noise corpus".into()));
    }
    let lengths: Vec<usize> = res.noises.iter().map(|c| c.waveform.len()).collect();
    let mut out = Vec::with_capacity(cfg.copies_per_utterance);
    for _ in 0..cfg.copies_per_utterance {
        let plan = draw_plan(cfg, &lengths, res.rirs.len(), rng);
        let clean = match plan.rir_index {
            Some(i) => apply_reverb(utterance, &res.rirs[i])?,
            None => utterance.clone(),
        };
        let noise = loop_noise(&res.noises[plan.noise_index].waveform, plan.noise_offset, clean.len());
        let mixed = mix_noise(&clean, &noise, plan.snr_db)?;
        out.push(MtrCopy {
            waveform: mixed.mixture,
            plan,
        });
    }
    Ok(out)
}

/// [`mtr_augment`] with the generator derived from `(cfg.seed, utterance_id)`,
/// so results do not depend on processing order.
pub fn mtr_augment_utterance(
    utterance_id: &str,
    utterance: &Waveform,
    cfg: &MtrConfig,
    res: &MtrResources,
) -> Result<Vec<MtrCopy>> {
    let mut rng = seed::derive_rng(cfg.seed, "mtr", utterance_id);
    mtr_augment(utterance, cfg, res, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{synth_rir, NoiseCategory};

    fn resources() -> MtrResources {
        let mut rng = seed::rng(1);
        let noise = Waveform::new((0..3000).map(|_| rng.random_range(-0.3..0.3)).collect(), 16000).unwrap();
        MtrResources {
            noises: vec![NoiseClip {
                clip_id: "n0".into(),
                category: NoiseCategory::Cafe,
                waveform: noise,
            }],
            rirs: vec![synth_rir(150.0, 16000, 2).unwrap()],
        }
    }

    fn utterance() -> Waveform {
        Waveform::new((0..8000).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn fifteen_copies_with_snr_in_range() {
        let cfg = MtrConfig::default();
        let copies = mtr_augment_utterance("u1", &utterance(), &cfg, &resources()).unwrap();
        assert_eq!(copies.len(), 15);
        for c in &copies {
            assert!((3.0..=15.0).contains(&c.plan.snr_db));
            assert_eq!(c.waveform.len(), 8000);
        }
        assert!(copies.iter().any(|c| c.plan.rir_index.is_some()));
        assert!(copies.iter().any(|c| c.plan.rir_index.is_none()));
    }

    #[test]
    fn reproducible_per_utterance_id() {
        let cfg = MtrConfig {
            copies_per_utterance: 3,
            ..Default::default()
        };
        let a = mtr_augment_utterance("u1", &utterance(), &cfg, &resources()).unwrap();
        let b = mtr_augment_utterance("u1", &utterance(), &cfg, &resources()).unwrap();
        let c = mtr_augment_utterance("u2", &utterance(), &cfg, &resources()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.waveform, y.waveform);
        }
        assert_ne!(a[0].waveform, c[0].waveform);
    }

    #[test]
    fn config_errors() {
        let cfg = MtrConfig::default();
        let empty = MtrResources::default();
        assert!(matches!(
            mtr_augment_utterance("u", &utterance(), &cfg, &empty),
            Err(Error::Config(_))
        ));
        let bad = MtrConfig {
            snr_low_db: 15.0,
            snr_high_db: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MtrConfig {
            copies_per_utterance: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn loop_noise_wraps() {
        let n = Waveform::new(vec![0.1, 0.2, 0.3], 16000).unwrap();
        assert_eq!(loop_noise(&n, 2, 5).samples, vec![0.3, 0.1, 0.2, 0.3, 0.1]);
    }
}
