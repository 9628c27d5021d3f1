//! Corpus container: stacked normalized patches plus the metadata needed to
//! reproduce and invert the preparation.

use std::path::Path;

use super::normalize::Window;
use super::patches::PatchOrigin;
use crate::autodiff::{Scalar, Tensor};
use crate::error::{DataError, FormatError};
use crate::wvgf;

/// Aligned (z, x) patch pairs with an image-level train/validation split.
/// Patches are stored normalized to [0, 1] in f32; the window descriptor
/// maps them back to HU exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    patch_side: usize,
    z_all: Vec<f32>,
    x_all: Vec<f32>,
    origins: Vec<PatchOrigin>,
    window: Window,
    seed: u64,
    /// Pairs [0, split) are training, [split, n) validation.
    split: usize,
    /// Requested-but-unfilled patch count (rejection budget exhausted).
    warnings: u32,
}

impl Corpus {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        patch_side: usize,
        z_all: Vec<f32>,
        x_all: Vec<f32>,
        origins: Vec<PatchOrigin>,
        window: Window,
        seed: u64,
        split: usize,
        warnings: u32,
    ) -> Self {
        let per = patch_side * patch_side;
        assert_eq!(z_all.len(), origins.len() * per, "z_all size mismatch");
        assert_eq!(x_all.len(), origins.len() * per, "x_all size mismatch");
        assert!(split <= origins.len());
        Corpus { patch_side, z_all, x_all, origins, window, seed, split, warnings }
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warnings(&self) -> u32 {
        self.warnings
    }

    pub fn origins(&self) -> &[PatchOrigin] {
        &self.origins
    }

    pub fn train_indices(&self) -> std::ops::Range<usize> {
        0..self.split
    }

    pub fn val_indices(&self) -> std::ops::Range<usize> {
        self.split..self.origins.len()
    }

    pub fn patch_z(&self, idx: usize) -> &[f32] {
        let per = self.patch_side * self.patch_side;
        &self.z_all[idx * per..(idx + 1) * per]
    }

    pub fn patch_x(&self, idx: usize) -> &[f32] {
        let per = self.patch_side * self.patch_side;
        &self.x_all[idx * per..(idx + 1) * per]
    }

    /// Assemble a [B, 1, side, side] batch of LDCT inputs.
    pub fn batch_z<F: Scalar>(&self, indices: &[usize]) -> Tensor<F> {
        self.gather(indices, &self.z_all)
    }

    /// Assemble a [B, 1, side, side] batch of NDCT targets.
    pub fn batch_x<F: Scalar>(&self, indices: &[usize]) -> Tensor<F> {
        self.gather(indices, &self.x_all)
    }

    fn gather<F: Scalar>(&self, indices: &[usize], source: &[f32]) -> Tensor<F> {
        assert!(!indices.is_empty(), "empty batch");
        let per = self.patch_side * self.patch_side;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend(source[i * per..(i + 1) * per].iter().map(|&v| F::from_f32(v)));
        }
        Tensor::new(vec![indices.len(), 1, self.patch_side, self.patch_side], data)
    }

    /// Canonical file bytes (also the digest input).
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::json!({
            "format": "ldct-forge.corpus",
            "version": 1,
            "patch_side": self.patch_side,
            "window": { "hu_min": self.window.hu_min, "hu_max": self.window.hu_max },
            "seed": self.seed,
            "split": self.split,
            "warnings": self.warnings,
            "n": self.origins.len(),
        });
        let n = self.origins.len();
        let mut tensors: Vec<(String, Tensor<f32>)> = Vec::new();
        if n > 0 {
            let s = self.patch_side;
            tensors.push(("z_all".into(), Tensor::new(vec![n, s, s], self.z_all.clone())));
            tensors.push(("x_all".into(), Tensor::new(vec![n, s, s], self.x_all.clone())));
            let origin_data: Vec<f32> = self
                .origins
                .iter()
                .flat_map(|o| [o.source_id as f32, o.row as f32, o.col as f32])
                .collect();
            tensors.push(("origins".into(), Tensor::new(vec![n, 3], origin_data)));
        }
        wvgf::with_meta_bytes(&meta, &tensors).expect("corpus serialization")
    }

    pub fn digest(&self) -> String {
        wvgf::digest_bytes(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        std::fs::write(path, self.to_bytes()).map_err(FormatError::Io)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let (meta, tensors) = wvgf::read_with_meta(path)?;
        Self::from_parts(meta, tensors)
    }

    fn from_parts(
        meta: serde_json::Value,
        tensors: Vec<(String, Tensor<f32>)>,
    ) -> Result<Self, DataError> {
        let get = |key: &str| -> Result<u64, DataError> {
            meta.get(key)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| FormatError::Meta(format!("missing key '{key}'")).into())
        };
        if meta.get("format").and_then(|v| v.as_str()) != Some("ldct-forge.corpus") {
            return Err(FormatError::Meta("not a corpus file".into()).into());
        }
        let version = get("version")?;
        if version != 1 {
            return Err(FormatError::Version(version as u32).into());
        }
        let patch_side = get("patch_side")? as usize;
        let n = get("n")? as usize;
        let split = get("split")? as usize;
        let warnings = get("warnings")? as u32;
        let seed = get("seed")?;
        let window = Window {
            hu_min: meta["window"]["hu_min"]
                .as_f64()
                .ok_or_else(|| FormatError::Meta("window.hu_min".into()))?,
            hu_max: meta["window"]["hu_max"]
                .as_f64()
                .ok_or_else(|| FormatError::Meta("window.hu_max".into()))?,
        };
        if n == 0 {
            return Ok(Corpus::new(patch_side, vec![], vec![], vec![], window, seed, split, warnings));
        }
        let find = |name: &str| -> Result<&Tensor<f32>, DataError> {
            tensors
                .iter()
                .find(|(t, _)| t == name)
                .map(|(_, t)| t)
                .ok_or_else(|| FormatError::Meta(format!("tensor '{name}' missing")).into())
        };
        let z = find("z_all")?;
        let x = find("x_all")?;
        let o = find("origins")?;
        if z.shape() != [n, patch_side, patch_side] || x.shape() != z.shape() || o.shape() != [n, 3] {
            return Err(FormatError::Invalid {
                field: "tensors",
                detail: format!("inconsistent shapes for n={n}, side={patch_side}"),
            }
            .into());
        }
        let origins = o
            .data()
            .chunks_exact(3)
            .map(|c| PatchOrigin { source_id: c[0] as u32, row: c[1] as u32, col: c[2] as u32 })
            .collect();
        Ok(Corpus::new(
            patch_side,
            z.data().to_vec(),
            x.data().to_vec(),
            origins,
            window,
            seed,
            split,
            warnings,
        ))
    }
}
