//! Network definitions: the denoising generator, the critic, and the frozen
//! perceptual feature extractor, plus parameter containers and init.

mod forward;
mod init;
mod specs;

pub use forward::{
    discriminator_eval, discriminator_forward, feature_eval, feature_forward, generator_eval,
    generator_forward,
};
pub use init::init_params;
pub use specs::{DiscriminatorSpec, FeatureExtractorSpec, GeneratorSpec};

use std::collections::HashMap;
use std::path::Path;

use crate::autodiff::{LeafKind, NodeId, Scalar, Tape, Tensor};
use crate::error::NetError;
use crate::wvgf;

/// Named, ordered collection of weight tensors for one architecture.
#[derive(Debug, Clone)]
pub struct NetworkParams<F: Scalar> {
    tag: String,
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Scalar> NetworkParams<F> {
    pub fn new(tag: impl Into<String>, entries: Vec<(String, Tensor<F>)>) -> Self {
        let tag = tag.into();
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &entries {
            assert!(seen.insert(name.clone()), "duplicate parameter name '{name}'");
        }
        NetworkParams { tag, entries }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn entries(&self) -> &[(String, Tensor<F>)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor<F>)] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Check names and shapes against an architecture's declared list.
    pub fn validate_shapes(&self, declared: &[(String, Vec<usize>)]) -> Result<(), NetError> {
        for (name, shape) in declared {
            let tensor = self.get(name).ok_or_else(|| NetError::MissingParam {
                tag: self.tag.clone(),
                name: name.clone(),
            })?;
            if tensor.shape() != shape.as_slice() {
                return Err(NetError::ParamShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    got: tensor.shape().to_vec(),
                });
            }
        }
        if declared.len() != self.entries.len() {
            return Err(NetError::MissingParam {
                tag: self.tag.clone(),
                name: format!("(expected {} entries, have {})", declared.len(), self.entries.len()),
            });
        }
        Ok(())
    }

    /// Register every tensor on a tape with the given leaf kind.
    pub fn bind(&self, tape: &mut Tape<F>, kind: LeafKind) -> BoundParams {
        let ids = self
            .entries
            .iter()
            .map(|(name, tensor)| (name.clone(), tape.leaf(tensor.clone(), kind)))
            .collect();
        BoundParams { tag: self.tag.clone(), kind, ids }
    }

    /// Canonical storage bytes (also the digest input).
    pub fn to_bytes(&self) -> Vec<u8> {
        wvgf::container_bytes(&self.storage_entries())
    }

    fn storage_entries(&self) -> Vec<(String, Tensor<f32>)> {
        self.entries
            .iter()
            .map(|(n, t)| (format!("{}/{}", self.tag, n), t.cast::<f32>()))
            .collect()
    }

    pub fn digest(&self) -> String {
        wvgf::digest_bytes(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), crate::error::FormatError> {
        wvgf::write_tensors(path, &self.storage_entries())
    }

    /// Load from a weights file; the entry names carry the architecture tag
    /// as a `tag/` prefix, which must be consistent across the file.
    pub fn load(path: &Path) -> Result<Self, NetError> {
        let tensors = wvgf::read_tensors(path).map_err(|e| NetError::TagMismatch {
            expected: "<readable weights file>".into(),
            got: e.to_string(),
        })?;
        Self::from_storage(tensors)
    }

    pub fn from_storage(tensors: Vec<(String, Tensor<f32>)>) -> Result<Self, NetError> {
        let mut tag: Option<String> = None;
        let mut entries = Vec::with_capacity(tensors.len());
        for (full, tensor) in tensors {
            let (t, name) = full.split_once('/').ok_or_else(|| NetError::TagMismatch {
                expected: "tag/name entries".into(),
                got: full.clone(),
            })?;
            match &tag {
                None => tag = Some(t.to_string()),
                Some(prev) if prev == t => {}
                Some(prev) => {
                    return Err(NetError::TagMismatch { expected: prev.clone(), got: t.to_string() })
                }
            }
            entries.push((name.to_string(), tensor.cast::<F>()));
        }
        let tag = tag.ok_or_else(|| NetError::TagMismatch {
            expected: "at least one tensor".into(),
            got: "empty file".into(),
        })?;
        Ok(NetworkParams::new(tag, entries))
    }

    /// Load and require a specific architecture tag.
    pub fn load_tagged(path: &Path, expected_tag: &str) -> Result<Self, NetError> {
        let params = Self::load(path)?;
        if params.tag() != expected_tag {
            return Err(NetError::TagMismatch {
                expected: expected_tag.to_string(),
                got: params.tag().to_string(),
            });
        }
        Ok(params)
    }
}

/// Tape-registered parameters: node ids for each named tensor.
#[derive(Debug, Clone)]
pub struct BoundParams {
    tag: String,
    kind: LeafKind,
    ids: HashMap<String, NodeId>,
}

impl BoundParams {
    /// Assemble from pre-registered node ids (trainers and tests that manage
    /// leaves themselves).
    pub fn from_ids(tag: impl Into<String>, kind: LeafKind, ids: HashMap<String, NodeId>) -> Self {
        BoundParams { tag: tag.into(), kind, ids }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn kind(&self) -> LeafKind {
        self.kind
    }

    pub fn id(&self, name: &str) -> Result<NodeId, NetError> {
        self.ids.get(name).copied().ok_or_else(|| NetError::MissingParam {
            tag: self.tag.clone(),
            name: name.to_string(),
        })
    }

    /// Node ids in a caller-specified name order (for gradient extraction).
    pub fn ids_for(&self, names: &[String]) -> Result<Vec<NodeId>, NetError> {
        names.iter().map(|n| self.id(n)).collect()
    }
}
