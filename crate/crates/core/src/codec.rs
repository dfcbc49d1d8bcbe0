//! Bit-exact float payloads for model files: base64 of little-endian f64.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid base64 payload: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("payload length {len} is not a multiple of 8 bytes")]
    Misaligned { len: usize },
    #[error("payload holds {found} values, expected {expected}")]
    Shape { expected: usize, found: usize },
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>, CodecError> {
    let bytes = STANDARD.decode(text)?;
    if bytes.len() % 8 != 0 {
        return Err(CodecError::Misaligned { len: bytes.len() });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Matrix stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl MatrixPayload {
    pub fn encode(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: encode_f64s(m.as_slice()),
        }
    }

    pub fn decode(&self) -> Result<DMatrix<f64>, CodecError> {
        let v = decode_f64s(&self.data)?;
        if v.len() != self.rows * self.cols {
            return Err(CodecError::Shape { expected: self.rows * self.cols, found: v.len() });
        }
        Ok(DMatrix::from_vec(self.rows, self.cols, v))
    }
}
