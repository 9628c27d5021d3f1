//! WVGF container: the on-disk format for weights, checkpoints, corpora and
//! float images.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "WVGF" | version u32 | tensor count u32
//! per tensor: name len u32 | UTF-8 name | rank u32 | dims u64 each | f32 data
//! ```
//!
//! Corpus and image files carry a leading UTF-8 JSON block of declared byte
//! length in front of the container: `json len u32 | JSON | container`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::{Scalar, Tensor};
use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"WVGF";
pub const VERSION: u32 = 1;

/// Serialize named f32 tensors into container bytes.
pub fn container_bytes(tensors: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parse container bytes into named f32 tensors.
pub fn parse_container(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, FormatError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let count = cur.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|e| FormatError::Invalid { field: "name", detail: e.to_string() })?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(FormatError::Invalid { field: "rank", detail: format!("{rank} for '{name}'") });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cur.u64("dim")? as usize;
            if d == 0 {
                return Err(FormatError::Invalid { field: "dim", detail: format!("zero dim in '{name}'") });
            }
            dims.push(d);
        }
        let numel: usize = dims.iter().product();
        let raw = cur.take(numel * 4, "tensor data")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Tensor::new(dims, data)));
    }
    Ok(tensors)
}

/// Write a bare container file (weights, checkpoints).
pub fn write_tensors(path: &Path, tensors: &[(String, Tensor<f32>)]) -> Result<(), FormatError> {
    let bytes = container_bytes(tensors);
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>, FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_container(&bytes)
}

/// Write a file with a leading JSON metadata block followed by the container.
pub fn write_with_meta(
    path: &Path,
    meta: &serde_json::Value,
    tensors: &[(String, Tensor<f32>)],
) -> Result<(), FormatError> {
    let bytes = with_meta_bytes(meta, tensors)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn with_meta_bytes(
    meta: &serde_json::Value,
    tensors: &[(String, Tensor<f32>)],
) -> Result<Vec<u8>, FormatError> {
    let json = serde_json::to_vec(meta).map_err(|e| FormatError::Meta(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 8);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&container_bytes(tensors));
    Ok(out)
}

/// Read a metadata-prefixed container file.
pub fn read_with_meta(path: &Path) -> Result<(serde_json::Value, Vec<(String, Tensor<f32>)>), FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_with_meta(&bytes)
}

pub fn parse_with_meta(bytes: &[u8]) -> Result<(serde_json::Value, Vec<(String, Tensor<f32>)>), FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated("json length"));
    }
    let jlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + jlen {
        return Err(FormatError::Truncated("json block"));
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&bytes[4..4 + jlen]).map_err(|e| FormatError::Meta(e.to_string()))?;
    let tensors = parse_container(&bytes[4 + jlen..])?;
    Ok((meta, tensors))
}

/// Hex SHA-256 of a byte slice.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file's contents.
pub fn digest_file(path: &Path) -> Result<String, FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(digest_bytes(&bytes))
}

/// Store a single 2-d float image with a `hu_offset` sidecar key.
pub fn write_image(path: &Path, image: &Tensor<f64>, hu_offset: f64) -> Result<(), FormatError> {
    let meta = serde_json::json!({ "kind": "image", "hu_offset": hu_offset });
    let img32: Tensor<f32> = image.cast();
    write_with_meta(path, &meta, &[("image".to_string(), img32)])
}

/// Load a 2-d float image and its `hu_offset` key.
pub fn read_image(path: &Path) -> Result<(Tensor<f64>, f64), FormatError> {
    let (meta, tensors) = read_with_meta(path)?;
    let hu_offset = meta.get("hu_offset").and_then(|v| v.as_f64()).unwrap_or(0.0);
    let img = tensors
        .into_iter()
        .find(|(n, _)| n == "image")
        .ok_or(FormatError::Invalid { field: "image", detail: "tensor 'image' missing".into() })?
        .1;
    Ok((img.cast(), hu_offset))
}

/// Convert generic-precision tensors to the f32 storage type.
pub fn to_storage<F: Scalar>(entries: &[(String, Tensor<F>)]) -> Vec<(String, Tensor<f32>)> {
    entries.iter().map(|(n, t)| (n.clone(), t.cast::<f32>())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip_bit_exact() {
        let tensors = vec![
            ("a/weight".to_string(), Tensor::new(vec![2, 3], vec![1.0f32, -2.5, 3.25, 0.0, 1e-20, 7.0])),
            ("a/bias".to_string(), Tensor::new(vec![3], vec![0.5f32, -0.5, 2.0])),
        ];
        let bytes = container_bytes(&tensors);
        let back = parse_container(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, t1), (n2, t2)) in tensors.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // writing the parsed tensors again reproduces the same bytes
        assert_eq!(bytes, container_bytes(&back));
    }

    #[test]
    fn corrupted_magic_rejected() {
        let tensors = vec![("x".to_string(), Tensor::new(vec![1], vec![1.0f32]))];
        let mut bytes = container_bytes(&tensors);
        bytes[0] = b'X';
        assert!(matches!(parse_container(&bytes), Err(FormatError::BadMagic)));
    }

    #[test]
    fn truncation_rejected() {
        let tensors = vec![("x".to_string(), Tensor::new(vec![4], vec![1.0f32; 4]))];
        let bytes = container_bytes(&tensors);
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(parse_container(cut), Err(FormatError::Truncated(_))));
    }

    #[test]
    fn version_mismatch_rejected() {
        let tensors = vec![("x".to_string(), Tensor::new(vec![1], vec![1.0f32]))];
        let mut bytes = container_bytes(&tensors);
        bytes[4] = 9;
        assert!(matches!(parse_container(&bytes), Err(FormatError::Version(9))));
    }

    #[test]
    fn meta_block_roundtrip() {
        let meta = serde_json::json!({"seed": 7, "window": [-1000.0, 1000.0]});
        let tensors = vec![("z_all".to_string(), Tensor::new(vec![2, 2, 2], vec![0.1f32; 8]))];
        let bytes = with_meta_bytes(&meta, &tensors).unwrap();
        let (m2, t2) = parse_with_meta(&bytes).unwrap();
        assert_eq!(m2["seed"], 7);
        assert_eq!(t2[0].0, "z_all");
    }

    #[test]
    fn empty_container_roundtrips() {
        let bytes = container_bytes(&[]);
        assert!(parse_container(&bytes).unwrap().is_empty());
    }
}
