use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// 25 ms at 16 kHz.
pub const FRAME_WIDTH: usize = 400;
/// 10 ms at 16 kHz.
pub const FRAME_SHIFT: usize = 160;
pub const N_MELS: usize = 40;
pub const ENERGY_FLOOR: f64 = 1e-10;

const FFT_SIZE: usize = 512;
const PRE_EMPHASIS: f64 = 0.97;
const MEL_LOW_HZ: f64 = 125.0;
const MEL_HIGH_HZ: f64 = 7500.0;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Per-frame log-Mel energies plus the VAD decision for each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// `T x 40`
    pub frames: Array2<f64>,
    pub vad_mask: Vec<bool>,
}

impl FeatureSequence {
    pub const FRAME_SHIFT_MS: u32 = 10;
    pub const FRAME_WIDTH_MS: u32 = 25;

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Per-frame log energy: the mean of the 40 log-Mel values.
    pub fn frame_energies(&self) -> Vec<f64> {
        self.frames
            .rows()
            .into_iter()
            .map(|r| r.sum() / r.len() as f64)
            .collect()
    }
}

/// `1 + floor((len - 400) / 160)` for `len >= 400`, zero otherwise.
pub fn frame_count(len: usize) -> usize {
    if len < FRAME_WIDTH {
        0
    } else {
        1 + (len - FRAME_WIDTH) / FRAME_SHIFT
    }
}

/// Splits a 16 kHz waveform into 25 ms frames with 10 ms shift. Frames
/// that would run past the end of the signal are dropped.
pub fn frame_signal(w: &Waveform) -> Result<Vec<&[f64]>> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Parameter(format!(
            "sample rate {} Hz, front end requires {SAMPLE_RATE} Hz",
            w.sample_rate
        )));
    }
    if w.len() < FRAME_WIDTH {
        return Err(Error::TooShort(format!(
            "{} samples, need at least {FRAME_WIDTH}",
            w.len()
        )));
    }
    Ok((0..frame_count(w.len()))
        .map(|k| &w.samples[k * FRAME_SHIFT..k * FRAME_SHIFT + FRAME_WIDTH])
        .collect())
}

/// Precomputed log-Mel front end (window, FFT plan, filterbank).
pub struct LogMel {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    /// Sparse triangular filters: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl Default for LogMel {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMel {
    pub fn new() -> Self {
        // symmetric Hann over the 400-sample frame
        let window = (0..FRAME_WIDTH)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (FRAME_WIDTH - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);

        let lo = hz_to_mel(MEL_LOW_HZ);
        let hi = hz_to_mel(MEL_HIGH_HZ);
        let step = (hi - lo) / (N_MELS + 1) as f64;
        let edges: Vec<f64> = (0..N_MELS + 2).map(|j| lo + step * j as f64).collect();
        let bin_mel: Vec<f64> = (0..=FFT_SIZE / 2)
            .map(|k| hz_to_mel(k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64))
            .collect();

        let mut filters = Vec::with_capacity(N_MELS);
        let mut centers_hz = Vec::with_capacity(N_MELS);
        for m in 0..N_MELS {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            centers_hz.push(mel_to_hz(center));
            let mut first = None;
            let mut weights = Vec::new();
            for (k, &mel) in bin_mel.iter().enumerate() {
                let w = if mel > left && mel <= center {
                    (mel - left) / (center - left)
                } else if mel > center && mel < right {
                    (right - mel) / (right - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    first.get_or_insert(k);
                    weights.push(w);
                } else if first.is_some() {
                    break;
                }
            }
            filters.push((first.unwrap_or(0), weights));
        }
        Self {
            window,
            fft,
            filters,
            centers_hz,
        }
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers_hz
    }

    /// One 400-sample frame to 40 log-Mel energies.
    ///
    /// DC removal, pre-emphasis (0.97), Hann window, 512-point power
    /// spectrum, 40 HTK-mel triangles over 125-7500 Hz, `ln(max(e, 1e-10))`.
    pub fn compute(&self, frame: &[f64]) -> Result<[f64; N_MELS]> {
        if frame.len() != FRAME_WIDTH {
            return Err(Error::Parameter(format!(
                "frame has {} samples, expected {FRAME_WIDTH}",
                frame.len()
            )));
        }
        let mean = frame.iter().sum::<f64>() / FRAME_WIDTH as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut prev = frame[0] - mean;
        for (n, (&x, &win)) in frame.iter().zip(&self.window).enumerate() {
            let x = x - mean;
            let y = if n == 0 {
                x - PRE_EMPHASIS * x
            } else {
                x - PRE_EMPHASIS * prev
            };
            prev = x;
            buf[n] = Complex::new(y * win, 0.0);
        }
        self.fft.process(&mut buf);

        let mut out = [0.0; N_MELS];
        for (o, (first, weights)) in out.iter_mut().zip(&self.filters) {
            let e: f64 = weights
                .iter()
                .enumerate()
                .map(|(j, w)| w * buf[first + j].norm_sqr())
                .sum();
            *o = e.max(ENERGY_FLOOR).ln();
        }
        Ok(out)
    }
}

fn shared() -> &'static LogMel {
    static FRONT_END: OnceLock<LogMel> = OnceLock::new();
    FRONT_END.get_or_init(LogMel::new)
}

/// [`LogMel::compute`] on a process-wide front end.
pub fn log_mel(frame: &[f64]) -> Result<[f64; N_MELS]> {
    shared().compute(frame)
}

pub fn mel_center_frequencies() -> &'static [f64] {
    shared().center_frequencies()
}

/// Frames, log-Mel energies and VAD for a whole utterance.
pub fn extract_features(w: &Waveform) -> Result<FeatureSequence> {
    let frames = frame_signal(w)?;
    let front = shared();
    let mut m = Array2::zeros((frames.len(), N_MELS));
    for (mut row, frame) in m.rows_mut().into_iter().zip(frames) {
        let v = front.compute(frame)?;
        row.assign(&ndarray::ArrayView1::from(&v[..]));
    }
    let mut seq = FeatureSequence {
        frames: m,
        vad_mask: Vec::new(),
    };
    seq.vad_mask = if seq.len() >= 2 {
        super::vad_mask(&seq)
    } else {
        vec![true; seq.len()]
    };
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn wave(n: usize) -> Waveform {
        Waveform::new(vec![0.0; n], SAMPLE_RATE).unwrap()
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_signal(&wave(16000)).unwrap().len(), 98);
        assert_eq!(frame_signal(&wave(400)).unwrap().len(), 1);
        assert!(matches!(frame_signal(&wave(399)), Err(Error::TooShort(_))));
        let w = Waveform::new(vec![0.0; 1000], 8000).unwrap();
        assert!(matches!(frame_signal(&w), Err(Error::Parameter(_))));
    }

    #[test]
    fn frame_k_covers_expected_samples() {
        let w = Waveform::new((0..2000).map(|i| i as f64 / 2000.0).collect(), SAMPLE_RATE).unwrap();
        let frames = frame_signal(&w).unwrap();
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(f[0], w.samples[160 * k]);
            assert_eq!(f.len(), 400);
        }
    }

    #[test]
    fn zero_frame_hits_floor() {
        let out = log_mel(&[0.0; FRAME_WIDTH]).unwrap();
        for v in out {
            assert!((v - (-23.025850929940457)).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_peaks_at_nearest_filter() {
        let frame: Vec<f64> = (0..FRAME_WIDTH)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin())
            .collect();
        let out = log_mel(&frame).unwrap();
        let argmax = (0..N_MELS)
            .max_by(|&a, &b| out[a].total_cmp(&out[b]))
            .unwrap();
        // analytic filter centres, independent of the filterbank construction
        let lo = 2595.0 * (1.0f64 + 125.0 / 700.0).log10();
        let hi = 2595.0 * (1.0f64 + 7500.0 / 700.0).log10();
        let centres: Vec<f64> = (1..=N_MELS)
            .map(|j| {
                let mel = lo + (hi - lo) * j as f64 / 41.0;
                700.0 * (10f64.powf(mel / 2595.0) - 1.0)
            })
            .collect();
        let nearest = (0..N_MELS)
            .min_by(|&a, &b| {
                (centres[a] - 1000.0)
                    .abs()
                    .total_cmp(&(centres[b] - 1000.0).abs())
            })
            .unwrap();
        assert_eq!(argmax, nearest);
        assert_eq!(nearest, 12);
        for (a, b) in centres.iter().zip(mel_center_frequencies()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn doubling_adds_ln4() {
        let mut rng = crate::seed::rng(3);
        let frame: Vec<f64> = (0..FRAME_WIDTH).map(|_| rng.random_range(-0.4..0.4)).collect();
        let doubled: Vec<f64> = frame.iter().map(|x| 2.0 * x).collect();
        let a = log_mel(&frame).unwrap();
        let b = log_mel(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(*x > ENERGY_FLOOR.ln());
            assert!((y - x - 4f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_frame_length() {
        assert!(log_mel(&[0.0; 10]).is_err());
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 400usize..40_000) {
            let n = frame_signal(&wave(len)).unwrap().len();
            prop_assert_eq!(n, 1 + (len - 400) / 160);
            prop_assert!(frame_count(len + 1) >= n);
        }

        #[test]
        fn dc_offset_invariance(seed in any::<u64>(), dc in -0.5f64..0.5) {
            let mut rng = crate::seed::rng(seed);
            let frame: Vec<f64> = (0..FRAME_WIDTH).map(|_| rng.random_range(-0.4..0.4)).collect();
            let shifted: Vec<f64> = frame.iter().map(|x| x + dc).collect();
            let a = log_mel(&frame).unwrap();
            let b = log_mel(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
