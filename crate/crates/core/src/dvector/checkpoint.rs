//! Checkpoint layout: `"DVEC"`, format version (u32), then `input_dim,
//! hidden, projection, layers, embedding_dim` (u32 each), then every tensor
//! as little-endian f32 in row-major order. Tensor order: for each layer
//! `W (4H x in), R (4H x P), b (4H), Wp (P x H)` with gate blocks
//! `[input, forget, cell, output]`; then the final `W (E x P)`, `b (E)`;
//! then the GE2E scale and bias.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::model::{LstmLayer, ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DVEC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let c = &params.config;
    let mut buf = Vec::with_capacity(28 + 4 * params.parameter_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        c.input_dim as u32,
        c.hidden as u32,
        c.projection as u32,
        c.layers as u32,
        c.embedding_dim as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for v in t {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    buf.extend_from_slice(&(params.ge2e_w as f32).to_le_bytes());
    buf.extend_from_slice(&(params.ge2e_b as f32).to_le_bytes());
    buf
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 28 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a d-vector checkpoint".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedFormat(format!("checkpoint version {version}")));
    }
    let config = ModelConfig {
        input_dim: word(8) as usize,
        hidden: word(12) as usize,
        projection: word(16) as usize,
        layers: word(20) as usize,
        embedding_dim: word(24) as usize,
    };
    config
        .validate()
        .map_err(|_| Error::Format(format!("bad checkpoint dimensions {config:?}")))?;
    let (h, p) = (config.hidden, config.projection);
    let mut shapes = Vec::new();
    for l in 0..config.layers {
        shapes.extend([
            (4 * h, config.layer_input_dim(l)),
            (4 * h, p),
            (4 * h, 1),
            (p, h),
        ]);
    }
    shapes.extend([(config.embedding_dim, p), (config.embedding_dim, 1)]);
    let floats: usize = shapes.iter().map(|(r, c)| r * c).sum::<usize>() + 2;
    if bytes.len() != 28 + 4 * floats {
        return Err(Error::Format(format!(
            "checkpoint has {} bytes, dimensions imply {}",
            bytes.len(),
            28 + 4 * floats
        )));
    }
    let mut values = bytes[28..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let mut mats = Vec::new();
    for &(r, c) in &shapes {
        mats.push(Array2::from_shape_vec((r, c), take(r * c)).expect("sized above"));
    }
    let tail = take(2);
    let mut it = mats.into_iter();
    let mut layers = Vec::with_capacity(config.layers);
    for _ in 0..config.layers {
        let w = it.next().unwrap();
        let r = it.next().unwrap();
        let b = Array1::from(it.next().unwrap().into_raw_vec_and_offset().0);
        let wp = it.next().unwrap();
        layers.push(LstmLayer { w, r, b, wp });
    }
    let out_w = it.next().unwrap();
    let out_b = Array1::from(it.next().unwrap().into_raw_vec_and_offset().0);
    let params = ModelParams {
        config,
        layers,
        out_w,
        out_b,
        ge2e_w: tail[0],
        ge2e_b: tail[1],
    };
    if !params.is_finite() {
        return Err(Error::Format("checkpoint contains non-finite values".into()));
    }
    Ok(params)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
