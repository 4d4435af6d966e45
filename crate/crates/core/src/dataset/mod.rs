//! Stimulus pool and train/test composition.
//!
//! Objects are first filtered for within-category coherence (mean pairwise
//! SSIM of their initial-view renderings, top half kept), then a seeded
//! draw picks six training and six unseen objects per category and lays
//! out one 36-image training set and six 51-image test sets.

mod manifest;
mod similarity;
pub mod ssim;

use thiserror::Error;

use crate::embryo::Category;

pub use manifest::{
    compose_splits, perspective_views, training_views, DatasetManifest, ImageRef, ManifestLine, Role, TestImage, TestKind,
    OBJECTS_PER_ROLE, TEST_IMAGES_PER_SET, TEST_SETS, TRAINING_IMAGES,
};
pub use similarity::{filter_coherent, CategorySimilarity, InitialRendering, SimilarityReport};
pub use ssim::{ssim, SsimPlane};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("image {0}x{1} is smaller than the 11x11 SSIM window")]
    ImageTooSmall(usize, usize),
    #[error("image sizes differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("category {0} has no renderings")]
    MissingRendering(Category),
    #[error("object {0} appears more than once")]
    DuplicateObject(String),
    #[error("category {category} has {have} kept objects, {need} needed")]
    PoolTooSmall {
        category: Category,
        need: usize,
        have: usize,
    },
    #[error("manifest invariant violated: {0}")]
    Invariant(String),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
