use ndarray::ArrayView2;

use crate::audio::{extract_features, stack_frames, StackedFeatures, Waveform};
use crate::error::Result;

use super::model::{forward, normalize_rows, ModelParams, SequenceBatch};
use super::DVector;

/// Sequences per inference batch.
const INFERENCE_BATCH: usize = 32;

/// Waveform to d-vector: log-Mel, VAD, stacking, network, normalization.
pub fn embed_utterance(params: &ModelParams, w: &Waveform) -> Result<DVector> {
    let feats = stack_frames(&extract_features(w)?)?;
    params.embed(&feats)
}

/// Embeds many stacked sequences, batching them through the network.
/// Results are in input order.
pub fn embed_features(params: &ModelParams, features: &[&StackedFeatures]) -> Result<Vec<DVector>> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(INFERENCE_BATCH) {
        let views: Vec<ArrayView2<f64>> = chunk.iter().map(|f| f.frames.view()).collect();
        let batch = SequenceBatch::from_sequences(&views, params.config.input_dim)?;
        let (raw, _) = forward(params, &batch, false)?;
        out.extend(
            normalize_rows(&raw)
                .rows()
                .into_iter()
                .map(|r| DVector::from_raw(r.to_vec())),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use crate::dvector::ModelConfig;
    use crate::error::Error;
    use crate::seed;
    use rand::Rng;

    fn params() -> ModelParams {
        let cfg = ModelConfig {
            hidden: 16,
            projection: 8,
            embedding_dim: 12,
            ..ModelConfig::desk()
        };
        ModelParams::init(cfg, &mut seed::rng(3)).unwrap()
    }

    #[test]
    fn identical_audio_identical_vector() {
        let mut rng = seed::rng(1);
        let w = Waveform::new((0..8000).map(|_| rng.random_range(-0.3..0.3)).collect(), SAMPLE_RATE).unwrap();
        let p = params();
        let a = embed_utterance(&p, &w).unwrap();
        let b = embed_utterance(&p, &w).unwrap();
        assert_eq!(a, b);
        let n: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn silence_does_not_crash() {
        let w = Waveform::new(vec![0.0; 16000], SAMPLE_RATE).unwrap();
        match embed_utterance(&params(), &w) {
            Ok(d) => assert_eq!(d.dim(), 12),
            Err(e) => assert!(matches!(e, Error::TooShort(_))),
        }
        let w = Waveform::new(vec![0.0; 300], SAMPLE_RATE).unwrap();
        assert!(matches!(embed_utterance(&params(), &w), Err(Error::TooShort(_))));
    }

    #[test]
    fn batched_matches_single() {
        let mut rng = seed::rng(2);
        let feats: Vec<StackedFeatures> = (0..40)
            .map(|i| StackedFeatures {
                frames: ndarray::Array2::from_shape_simple_fn((3 + i % 7, 80), || rng.random_range(-2.0..2.0)),
                source_frame_count: 0,
            })
            .collect();
        let p = params();
        let refs: Vec<&StackedFeatures> = feats.iter().collect();
        let batched = embed_features(&p, &refs).unwrap();
        for (f, d) in feats.iter().zip(&batched) {
            let single = p.embed(f).unwrap();
            for (a, b) in single.values().iter().zip(d.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
