use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

use super::batch::{Batch, BatchSampler};
use super::ge2e::ge2e_loss;
use super::model::{backward, forward, normalize_rows, ModelConfig, ModelParams, SequenceBatch, GE2E_W_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            clip_norm: 3.0,
        }
    }
}

/// SGD with momentum: `v = mu v + g; theta -= lr v`.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    velocity: ModelParams,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Self {
        Self {
            config,
            velocity: params.zeros_like(),
        }
    }

    /// Clips `grads` in place, then updates `params`. The GE2E scale is
    /// clamped to stay positive.
    pub fn step(&mut self, params: &mut ModelParams, grads: &mut ModelParams) {
        let norm = grads.norm_sq().sqrt();
        if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            grads.scale(self.config.clip_norm / norm);
        }
        self.velocity.scale(self.config.momentum);
        self.velocity.add_scaled(1.0, grads);
        params.add_scaled(-self.config.learning_rate, &self.velocity);
        params.ge2e_w = params.ge2e_w.max(GE2E_W_MIN);
    }
}

/// Per-source loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiReaderConfig {
    pub weights: Vec<f64>,
}

impl MultiReaderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("MultiReader needs at least one source".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("source weight {w} is not positive")));
        }
        Ok(())
    }
}

/// Weights proportional to dataset sizes, normalized to sum to one.
pub fn weights_from_sizes(sizes: &[usize]) -> Result<Vec<f64>> {
    let total: usize = sizes.iter().sum();
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config(format!("dataset sizes must be positive: {sizes:?}")));
    }
    Ok(sizes.iter().map(|&s| s as f64 / total as f64).collect())
}

/// One source's batch, already laid out for the network.
#[derive(Debug, Clone)]
pub struct SourceBatch {
    pub weight: f64,
    pub n: usize,
    pub m: usize,
    pub sequences: SequenceBatch,
}

/// Combined loss `sum_d weight_d * GE2E(batch_d)` and its gradient.
pub fn multireader_gradient(params: &ModelParams, batches: &[SourceBatch]) -> Result<(f64, ModelParams)> {
    if batches.is_empty() {
        return Err(Error::Config("MultiReader needs at least one source".into()));
    }
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for sb in batches {
        if !(sb.weight > 0.0) {
            return Err(Error::Config(format!("source weight {} is not positive", sb.weight)));
        }
        let (raw, cache) = forward(params, &sb.sequences, true)?;
        let emb = normalize_rows(&raw);
        let out = ge2e_loss(&emb, sb.n, sb.m, params.ge2e_w, params.ge2e_b)?;
        loss += sb.weight * out.loss;
        backward(params, &cache.expect("cache requested"), &out.d_emb, sb.weight, &mut grads);
        grads.ge2e_w += sb.weight * out.d_w;
        grads.ge2e_b += sb.weight * out.d_b;
    }
    Ok((loss, grads))
}

/// Gradient plus one optimizer update. Returns the combined loss before
/// the update.
pub fn multireader_step(
    params: &mut ModelParams,
    optimizer: &mut Optimizer,
    batches: &[SourceBatch],
) -> Result<f64> {
    let (loss, mut grads) = multireader_gradient(params, batches)?;
    optimizer.step(params, &mut grads);
    Ok(loss)
}

/// Stacked features of one training source, grouped by speaker.
#[derive(Debug, Clone)]
pub struct FeatureCorpus {
    pub name: String,
    pub speakers: Vec<String>,
    /// `S x 80` per utterance
    pub features: Vec<Array2<f64>>,
}

impl FeatureCorpus {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut map: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
        for (i, s) in self.speakers.iter().enumerate() {
            map.entry(s).or_default().push(i);
        }
        map.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Crops every utterance of the batch to a common length
/// `min(segment, shortest)` at a random offset.
pub fn crop_batch(
    corpus: &FeatureCorpus,
    batch: &Batch,
    segment: usize,
    rng: &mut Rng,
) -> Result<SequenceBatch> {
    let shortest = batch
        .items
        .iter()
        .map(|&i| corpus.features[i].nrows())
        .min()
        .unwrap_or(0);
    let len = shortest.min(segment.max(1));
    if len == 0 {
        return Err(Error::TooShort(format!("empty utterance in source '{}'", corpus.name)));
    }
    let views: Vec<_> = batch
        .items
        .iter()
        .map(|&i| {
            let f = &corpus.features[i];
            let off = rng.random_range(0..=f.nrows() - len);
            f.slice(ndarray::s![off..off + len, ..])
        })
        .collect();
    let dim = corpus.features[batch.items[0]].ncols();
    SequenceBatch::from_sequences(&views, dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub speakers_per_batch: usize,
    pub utterances_per_speaker: usize,
    pub steps: usize,
    /// Training crop length in stacked frames.
    pub segment_frames: usize,
    pub optimizer: OptimizerConfig,
    /// Per-source weights; `None` means proportional to utterance counts.
    pub weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            speakers_per_batch: 16,
            utterances_per_speaker: 8,
            steps: 1000,
            segment_frames: 80,
            optimizer: OptimizerConfig::default(),
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: u128,
}

impl TrainLogEntry {
    /// `"step loss wall_ms"`
    pub fn to_line(&self) -> String {
        format!("{} {:.6} {}", self.step, self.loss, self.wall_ms)
    }
}

/// MultiReader GE2E training over one or more feature corpora.
pub struct Trainer {
    pub params: ModelParams,
    optimizer: Optimizer,
    sources: Vec<FeatureCorpus>,
    samplers: Vec<BatchSampler>,
    weights: Vec<f64>,
    crop_rng: Rng,
    config: TrainConfig,
    step: usize,
    start: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig, sources: Vec<FeatureCorpus>, seed: u64) -> Result<Self> {
        let params = ModelParams::init(config.model, &mut seed::derive_rng(seed, "init", ""))?;
        Self::with_params(config, sources, params, seed)
    }

    pub fn with_params(
        config: TrainConfig,
        sources: Vec<FeatureCorpus>,
        params: ModelParams,
        seed: u64,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Config("training needs at least one source".into()));
        }
        let weights = match &config.weights {
            Some(w) => {
                if w.len() != sources.len() {
                    return Err(Error::Config(format!(
                        "{} weights for {} sources",
                        w.len(),
                        sources.len()
                    )));
                }
                w.clone()
            }
            None => weights_from_sizes(&sources.iter().map(|s| s.len()).collect::<Vec<_>>())?,
        };
        MultiReaderConfig {
            weights: weights.clone(),
        }
        .validate()?;
        let samplers = sources
            .iter()
            .map(|s| {
                BatchSampler::new(
                    s.name.clone(),
                    s.groups(),
                    config.speakers_per_batch,
                    config.utterances_per_speaker,
                    seed::derive(seed, "batches", &s.name),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            optimizer: Optimizer::new(config.optimizer, &params),
            params,
            sources,
            samplers,
            weights,
            crop_rng: seed::derive_rng(seed, "crop", ""),
            config,
            step: 0,
            start: Instant::now(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Next set of per-source batches, cropped and laid out.
    pub fn next_batches(&mut self) -> Result<Vec<SourceBatch>> {
        let mut out = Vec::with_capacity(self.sources.len());
        for ((src, sampler), &w) in self.sources.iter().zip(&mut self.samplers).zip(&self.weights) {
            let batch = sampler.next_batch();
            let sequences = crop_batch(src, &batch, self.config.segment_frames, &mut self.crop_rng)?;
            out.push(SourceBatch {
                weight: w,
                n: batch.n_speakers,
                m: batch.m_utts,
                sequences,
            });
        }
        Ok(out)
    }

    pub fn step(&mut self) -> Result<TrainLogEntry> {
        let batches = self.next_batches()?;
        let loss = multireader_step(&mut self.params, &mut self.optimizer, &batches)?;
        if !self.params.is_finite() {
            return Err(Error::Degenerate(format!(
                "non-finite parameters after step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        Ok(TrainLogEntry {
            step: self.step,
            loss,
            wall_ms: self.start.elapsed().as_millis(),
        })
    }

    /// Runs the configured number of steps, calling `log` after each.
    pub fn run(&mut self, mut log: impl FnMut(&TrainLogEntry)) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(self.config.steps);
        for _ in 0..self.config.steps {
            let e = self.step()?;
            log(&e);
            losses.push(e.loss);
        }
        Ok(losses)
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            hidden: 8,
            projection: 4,
            layers: 3,
            embedding_dim: 4,
        }
    }

    fn random_batch(rng: &mut Rng, n: usize, m: usize, t: usize, d: usize) -> SequenceBatch {
        let seqs: Vec<Array2<f64>> = (0..n * m)
            .map(|_| Array2::from_shape_simple_fn((t, d), || rng.random_range(-1.0..1.0)))
            .collect();
        let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
        SequenceBatch::from_sequences(&views, d).unwrap()
    }

    #[test]
    fn finite_difference_gradients_every_tensor() {
        let mut rng = seed::rng(21);
        // a generic point in parameter space, biases included
        let mut params = ModelParams::init(tiny_config(), &mut rng).unwrap();
        for t in params.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        }
        params.ge2e_w = 3.0;
        params.ge2e_b = -1.0;
        let sb = SourceBatch {
            weight: 1.0,
            n: 2,
            m: 2,
            sequences: random_batch(&mut rng, 2, 2, 3, 6),
        };
        let batches = [sb];
        let (_, grads) = multireader_gradient(&params, &batches).unwrap();
        let loss = |p: &ModelParams| multireader_gradient(p, &batches).unwrap().0;
        let eps = 1e-4;

        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            let len = params.tensors()[ti].len();
            let mut diff = 0.0;
            for k in 0..len {
                let mut p = params.clone();
                p.tensors_mut()[ti][k] += eps;
                let mut q = params.clone();
                q.tensors_mut()[ti][k] -= eps;
                let num = (loss(&p) - loss(&q)) / (2.0 * eps);
                let ana = grads.tensors()[ti][k];
                diff += (num - ana).powi(2);
            }
            let norm_a: f64 = grads.tensors()[ti].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm_a > 0.0, "tensor {ti} has zero gradient");
            let rel = diff.sqrt() / norm_a;
            assert!(rel < 1e-4, "tensor {ti}: relative error {rel}");
        }
        let mut p = params.clone();
        p.ge2e_w += eps;
        let mut q = params.clone();
        q.ge2e_w -= eps;
        let num = (loss(&p) - loss(&q)) / (2.0 * eps);
        assert!((num - grads.ge2e_w).abs() / num.abs() < 1e-4);
    }

    #[test]
    fn two_identical_sources_double_gradient() {
        let mut rng = seed::rng(22);
        let params = ModelParams::init(tiny_config(), &mut rng).unwrap();
        let sb = SourceBatch {
            weight: 1.0,
            n: 2,
            m: 3,
            sequences: random_batch(&mut rng, 2, 3, 4, 6),
        };
        let (l1, g1) = multireader_gradient(&params, &[sb.clone()]).unwrap();
        let (l2, g2) = multireader_gradient(&params, &[sb.clone(), sb]).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*y, 2.0 * x);
            }
        }
        assert_eq!(g2.ge2e_w, 2.0 * g1.ge2e_w);
    }

    #[test]
    fn single_source_step_matches_manual_update() {
        let mut rng = seed::rng(23);
        let params = ModelParams::init(tiny_config(), &mut rng).unwrap();
        let sb = SourceBatch {
            weight: 1.0,
            n: 2,
            m: 2,
            sequences: random_batch(&mut rng, 2, 2, 3, 6),
        };
        let cfg = OptimizerConfig {
            clip_norm: 0.0,
            ..Default::default()
        };
        let mut a = params.clone();
        let mut opt = Optimizer::new(cfg, &a);
        multireader_step(&mut a, &mut opt, std::slice::from_ref(&sb)).unwrap();
        let (_, g) = multireader_gradient(&params, &[sb]).unwrap();
        let mut b = params.clone();
        b.add_scaled(-cfg.learning_rate, &g);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sources_and_weights() {
        let params = ModelParams::init(tiny_config(), &mut seed::rng(1)).unwrap();
        assert!(matches!(multireader_gradient(&params, &[]), Err(Error::Config(_))));
        assert_eq!(weights_from_sizes(&[3, 1]).unwrap(), vec![0.75, 0.25]);
        assert!(weights_from_sizes(&[]).is_err());
        assert!(MultiReaderConfig { weights: vec![1.0, 0.0] }.validate().is_err());
    }

    #[test]
    fn clipping_and_positive_scale() {
        let mut params = ModelParams::init(tiny_config(), &mut seed::rng(2)).unwrap();
        params.ge2e_w = 1e-7;
        let mut grads = params.zeros_like();
        grads.ge2e_w = 100.0;
        let mut opt = Optimizer::new(OptimizerConfig::default(), &params);
        opt.step(&mut params, &mut grads);
        assert!((grads.norm_sq().sqrt() - 3.0).abs() < 1e-12);
        assert_eq!(params.ge2e_w, GE2E_W_MIN);
    }

    #[test]
    fn toy_task_loss_halves() {
        // 4 speakers, each a fixed template sequence plus small noise
        let cfg = ModelConfig {
            input_dim: 10,
            hidden: 16,
            projection: 8,
            layers: 3,
            embedding_dim: 16,
        };
        let mut rng = seed::rng(31);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let (speakers, utts, t) = (4, 6, 12);
        let mut corpus = FeatureCorpus {
            name: "toy".into(),
            speakers: Vec::new(),
            features: Vec::new(),
        };
        for s in 0..speakers {
            let template = Array2::from_shape_simple_fn((t, 10), || rng.random_range(-1.0..1.0));
            for _ in 0..utts {
                corpus.speakers.push(format!("s{s}"));
                corpus
                    .features
                    .push(template.mapv(|v| v + noise.sample(&mut rng)));
            }
        }
        let config = TrainConfig {
            model: cfg,
            speakers_per_batch: 4,
            utterances_per_speaker: 4,
            steps: 200,
            segment_frames: t,
            ..Default::default()
        };
        let mut trainer = Trainer::new(config, vec![corpus], 5).unwrap();
        let losses = trainer.run(|_| {}).unwrap();
        let first = losses[0];
        let last = losses[199];
        assert!(last <= 0.5 * first, "loss {first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = seed::rng(41);
        let corpus = FeatureCorpus {
            name: "a".into(),
            speakers: (0..12).map(|i| format!("s{}", i % 3)).collect(),
            features: (0..12)
                .map(|i| Array2::from_shape_simple_fn((5 + i % 4, 6), || rng.random_range(-1.0..1.0)))
                .collect(),
        };
        let config = TrainConfig {
            model: tiny_config(),
            speakers_per_batch: 3,
            utterances_per_speaker: 2,
            steps: 5,
            segment_frames: 4,
            ..Default::default()
        };
        let run = || {
            let mut t = Trainer::new(config.clone(), vec![corpus.clone()], 7).unwrap();
            t.run(|_| {}).unwrap();
            t.into_params()
        };
        assert_eq!(run(), run());
    }
}
