//! Text-independent d-vector model: stacked LSTM layers with projection,
//! a final linear layer and L2 normalization, trained with the generalized
//! end-to-end (GE2E) softmax loss and MultiReader source weighting.

mod batch;
mod checkpoint;
mod embed;
mod ge2e;
mod model;
mod train;

pub use batch::{Batch, BatchSampler};
pub use checkpoint::{
    checkpoint_bytes, parse_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use embed::{embed_features, embed_utterance};
pub use ge2e::{ge2e_loss, Ge2eOutput};
pub use model::{
    backward, forward, normalize_rows, ForwardCache, LstmLayer, ModelConfig, ModelParams,
    SequenceBatch, GE2E_B_INIT, GE2E_W_INIT, GE2E_W_MIN,
};
pub use train::{
    crop_batch, multireader_gradient, multireader_step, weights_from_sizes, FeatureCorpus,
    MultiReaderConfig, Optimizer, OptimizerConfig, SourceBatch, TrainConfig, TrainLogEntry,
    Trainer,
};

use crate::error::{Error, Result};

/// L2-normalized utterance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DVector(Vec<f64>);

impl DVector {
    /// Normalizes `v`. A zero vector maps to the first basis vector `e_1`.
    pub fn from_raw(mut v: Vec<f64>) -> Self {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for x in &mut v {
                *x /= norm;
            }
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
            if let Some(first) = v.first_mut() {
                *first = 1.0;
            }
        }
        DVector(v)
    }

    /// Wraps a vector that is already unit norm (within 1e-6).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Parameter(format!("d-vector norm {norm}, expected 1")));
        }
        Ok(DVector(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &DVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; zero if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
