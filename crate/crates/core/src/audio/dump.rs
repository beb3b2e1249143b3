//! Binary feature dumps: 16-byte header `{"SAFE", rows: u32, cols: u32,
//! reserved: u32}` followed by little-endian f32 values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"SAFE";

pub fn write_feature_dump(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + 4 * m.len());
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in m.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != DUMP_MAGIC {
        return Err(Error::Format(format!("{}: not a feature dump", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    if bytes.len() != 16 + 4 * rows * cols {
        return Err(Error::Format(format!(
            "{}: header says {rows}x{cols}, payload is {} bytes",
            path.display(),
            bytes.len() - 16
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}
