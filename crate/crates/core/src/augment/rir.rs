use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy-normalized room impulse response whose first tap is the direct
/// path and carries the largest absolute amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub rt60_ms: f64,
}

impl RoomImpulseResponse {
    /// Wraps arbitrary taps, normalizing their energy to 1.
    pub fn from_taps(taps: Vec<f64>, sample_rate: u32, rt60_ms: f64) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("impulse response taps must be finite and non-empty".into()));
        }
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        if energy <= 0.0 {
            return Err(Error::Parameter("impulse response has zero energy".into()));
        }
        let direct = taps[0].abs();
        if taps.iter().skip(1).any(|t| t.abs() > direct) {
            return Err(Error::Parameter("first tap must carry the peak amplitude".into()));
        }
        let norm = energy.sqrt();
        Ok(Self {
            taps: taps.into_iter().map(|t| t / norm).collect(),
            sample_rate,
            rt60_ms,
        })
    }

    pub fn unit_impulse(sample_rate: u32) -> Self {
        Self {
            taps: vec![1.0],
            sample_rate,
            rt60_ms: 0.0,
        }
    }
}

const TAIL_GAIN: f64 = 0.25;
const TAIL_LIMIT: f64 = 0.95;

/// Exponentially decaying Gaussian tail behind a unit direct path:
/// `h[n] = g * e_n * exp(-6.908 n / N60)` with `N60` the RT60 in samples,
/// 1.5 x RT60 long, energy-normalized.
pub fn synth_rir(rt60_ms: f64, sample_rate: u32, seed: u64) -> Result<RoomImpulseResponse> {
    if !(50.0..=1000.0).contains(&rt60_ms) {
        return Err(Error::Parameter(format!(
            "rt60 {rt60_ms} ms outside [50, 1000]"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Parameter("sample rate must be positive".into()));
    }
    let n60 = rt60_ms * sample_rate as f64 / 1000.0;
    let len = (1.5 * n60).round() as usize;
    let mut rng = crate::seed::rng(seed);
    let mut taps = Vec::with_capacity(len);
    taps.push(1.0);
    for n in 1..len {
        let e: f64 = StandardNormal.sample(&mut rng);
        let v = TAIL_GAIN * e * (-6.908 * n as f64 / n60).exp();
        taps.push(v.clamp(-TAIL_LIMIT, TAIL_LIMIT));
    }
    RoomImpulseResponse::from_taps(taps, sample_rate, rt60_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_checks() {
        assert!(synth_rir(0.0, 16000, 1).is_err());
        assert!(synth_rir(49.9, 16000, 1).is_err());
        assert!(synth_rir(1000.1, 16000, 1).is_err());
        assert!(synth_rir(1000.0, 16000, 1).is_ok());
    }

    #[test]
    fn length_energy_and_direct_path() {
        let r = synth_rir(200.0, 16000, 9).unwrap();
        assert_eq!(r.taps.len(), 4800);
        let e: f64 = r.taps.iter().map(|t| t * t).sum();
        assert!((e - 1.0).abs() < 1e-9);
        let peak = r.taps.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        assert_eq!(peak, r.taps[0].abs());
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_rir(300.0, 16000, 4).unwrap(), synth_rir(300.0, 16000, 4).unwrap());
        assert_ne!(synth_rir(300.0, 16000, 4).unwrap(), synth_rir(300.0, 16000, 5).unwrap());
    }

    #[test]
    fn tail_decays() {
        let r = synth_rir(400.0, 16000, 2).unwrap();
        let seg = |a: usize, b: usize| r.taps[a..b].iter().map(|t| t * t).sum::<f64>();
        let n60 = 6400;
        // 60 dB of amplitude decay per RT60, i.e. 1e-6 in energy
        let ratio = seg(n60, n60 + 1000) / seg(1, 1001);
        assert!(ratio < 1e-4, "ratio {ratio}");
    }
}
