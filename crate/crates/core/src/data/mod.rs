//! Training data preparation: intensity normalization, patch extraction
//! with air rejection, image-level train/validation splitting, and corpus
//! persistence.

mod corpus;
mod normalize;
mod patches;

pub use corpus::Corpus;
pub use normalize::Window;
pub use patches::{extract_patches, ExtractConfig, PatchOrigin};
