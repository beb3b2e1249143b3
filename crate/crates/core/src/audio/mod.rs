//! Audio I/O and the log-Mel front end.
//!
//! The front end turns a 16 kHz mono [`Waveform`] into 25 ms / 10 ms frames,
//! 40-d log-Mel energies, an energy-GMM voice-activity mask and finally 80-d
//! stacked frames, which is the input format of the d-vector model.

mod dump;
mod features;
mod stack;
mod vad;

pub use dump::{read_feature_dump, write_feature_dump, DUMP_MAGIC};
pub use features::{
    extract_features, frame_count, frame_signal, log_mel, mel_center_frequencies, FeatureSequence,
    LogMel, ENERGY_FLOOR, FRAME_SHIFT, FRAME_WIDTH, N_MELS,
};
pub use stack::{stack_frames, StackedFeatures, STACKED_DIM};
pub use vad::{vad_mask, vad_mask_from_energies, MIN_MEAN_SEPARATION};

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono PCM audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power over the whole clip.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Hard-clips every sample to `[-1, 1]`.
    pub fn clip(mut self) -> Self {
        for s in &mut self.samples {
            *s = s.clamp(-1.0, 1.0);
        }
        self
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}", path.display())),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a 16-bit PCM mono RIFF/WAVE file. Samples are scaled by 1/32768.
///
/// Stereo or non-16-bit input is rejected; there is no downmixing or
/// resampling anywhere in the toolkit.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} bit {:?}, expected 16-bit PCM",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono. Samples are rounded from `x * 32768` and saturated.
pub fn save_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Rounds samples onto the 16-bit grid, i.e. what a save/load round trip
/// would produce.
pub fn quantize_16bit(w: &Waveform) -> Waveform {
    Waveform {
        samples: w
            .samples
            .iter()
            .map(|&s| (s * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0)
            .collect(),
        sample_rate: w.sample_rate,
    }
}
