use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::RoomImpulseResponse;
use crate::audio::{mean_power, Waveform};
use crate::error::{Error, Result};

const DIRECT_CONV_MAX_TAPS: usize = 64;

/// Naive `O(n*m)` linear convolution truncated to `x.len()`.
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate().take(n + 1) {
            acc += hk * x[n - k];
        }
        *out = acc;
    }
    y
}

fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut b = vec![Complex::new(0.0, 0.0); size];
        for (d, &s) in b.iter_mut().zip(v) {
            d.re = s;
        }
        b
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..x.len()].iter().map(|c| c.re * scale).collect()
}

/// Convolves with the impulse response (truncated to the input length) and
/// rescales the result so its peak matches the input peak.
pub fn apply_reverb(w: &Waveform, rir: &RoomImpulseResponse) -> Result<Waveform> {
    if w.sample_rate != rir.sample_rate {
        return Err(Error::Parameter(format!(
            "sample rate mismatch: signal {} Hz, RIR {} Hz",
            w.sample_rate, rir.sample_rate
        )));
    }
    if w.is_empty() {
        return Ok(w.clone());
    }
    let mut y = if rir.taps.len() <= DIRECT_CONV_MAX_TAPS {
        convolve_direct(&w.samples, &rir.taps)
    } else {
        convolve_fft(&w.samples, &rir.taps)
    };
    let peak_in = w.peak();
    let peak_out = y.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak_out > 0.0 && peak_in != peak_out {
        let g = peak_in / peak_out;
        for s in &mut y {
            *s *= g;
        }
    }
    Ok(Waveform {
        samples: y,
        sample_rate: w.sample_rate,
    })
}

/// `sqrt(P_s / (P_n * 10^(snr/10)))`
pub fn noise_gain(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Result of [`mix_noise`]: the clipped mixture and the gain applied to the
/// noise before summation.
#[derive(Debug, Clone)]
pub struct MixedSignal {
    pub mixture: Waveform,
    pub noise_gain: f64,
}

/// Adds `noise` scaled so that the unclipped mixture has exactly `snr_db`
/// (mean power over the whole clip), then hard-clips to `[-1, 1]`.
///
/// `noise` must be at least as long as the signal; only its first
/// `signal.len()` samples are used.
pub fn mix_noise(signal: &Waveform, noise: &Waveform, snr_db: f64) -> Result<MixedSignal> {
    if signal.sample_rate != noise.sample_rate {
        return Err(Error::Parameter(format!(
            "sample rate mismatch: signal {} Hz, noise {} Hz",
            signal.sample_rate, noise.sample_rate
        )));
    }
    if noise.len() < signal.len() {
        return Err(Error::Parameter(format!(
            "noise has {} samples, signal {}",
            noise.len(),
            signal.len()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Parameter("SNR must be finite".into()));
    }
    let noise = &noise.samples[..signal.len()];
    let ps = signal.power();
    let pn = mean_power(noise);
    if ps <= 0.0 || pn <= 0.0 {
        return Err(Error::Degenerate(format!(
            "zero-power {} in noise mixing",
            if ps <= 0.0 { "signal" } else { "noise" }
        )));
    }
    let g = noise_gain(ps, pn, snr_db);
    let samples = signal
        .samples
        .iter()
        .zip(noise)
        .map(|(s, n)| (s + g * n).clamp(-1.0, 1.0))
        .collect();
    Ok(MixedSignal {
        mixture: Waveform {
            samples,
            sample_rate: signal.sample_rate,
        },
        noise_gain: g,
    })
}
