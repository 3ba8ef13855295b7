//! Tensor container: a flat little-endian row-major binary file
//! (`<stem>.bin`) plus a JSON sidecar (`<stem>.json`) holding shape, dtype
//! and the SHA-256 of the binary payload.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub trait Element: Copy + Sized {
    const DTYPE: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
    const SIZE: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for u32 {
    const DTYPE: &'static str = "u32";
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        u32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub checksum: String,
}

pub fn bin_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

pub fn header_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

pub fn encode<T: Element>(data: &[T]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * T::SIZE);
    for &x in data {
        x.write_le(&mut bytes);
    }
    bytes
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `data` with the given shape and returns the payload checksum.
pub fn write_tensor<T: Element>(stem: &Path, shape: &[usize], data: &[T]) -> Result<String> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::Shape(format!(
            "shape {shape:?} holds {expected} elements but {} were given",
            data.len()
        )));
    }
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let bytes = encode(data);
    let checksum = sha256_hex(&bytes);
    let header = TensorHeader {
        shape: shape.to_vec(),
        dtype: T::DTYPE.to_string(),
        checksum: checksum.clone(),
    };
    let bin = bin_path(stem);
    std::fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    let head = header_path(stem);
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    std::fs::write(&head, text).map_err(|e| Error::io(&head, e))?;
    Ok(checksum)
}

pub fn read_header(stem: &Path) -> Result<TensorHeader> {
    let head = header_path(stem);
    let text = std::fs::read_to_string(&head).map_err(|e| Error::io(&head, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(head.display().to_string(), e))
}

/// Reads a tensor, verifying dtype, length and checksum.
pub fn read_tensor<T: Element>(stem: &Path) -> Result<(Vec<usize>, Vec<T>)> {
    let header = read_header(stem)?;
    if header.dtype != T::DTYPE {
        return Err(Error::parse(
            stem.display().to_string(),
            format!("dtype is {} but {} was requested", header.dtype, T::DTYPE),
        ));
    }
    let bin = bin_path(stem);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected: usize = header.shape.iter().product::<usize>() * T::SIZE;
    if bytes.len() != expected {
        return Err(Error::Checksum {
            path: bin,
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let actual = sha256_hex(&bytes);
    if actual != header.checksum {
        return Err(Error::Checksum {
            path: bin,
            reason: format!("sidecar says {}, payload hashes to {actual}", header.checksum),
        });
    }
    let data = bytes.chunks_exact(T::SIZE).map(T::read_le).collect();
    Ok((header.shape, data))
}
