//! Learning-dynamics statistics computed from per-trial logs.

mod binomial;
mod curves;
mod inclusion;
pub mod report;

use thiserror::Error;

use crate::trial::Phase;

pub use binomial::{chance_band, chance_upper, clopper_pearson, count_from_accuracy};
pub use curves::{
    aggregate, data_efficiency, epoch_curves, generalisation_lag, moving_average, split_test_accuracy,
    EfficiencySeries, ExactAccuracies, GeneralisationLag, LearningCurves, SplitAccuracy, CHANCE,
};
pub use inclusion::{inclusion_filter, inclusion_filter_with, InclusionReport, INCLUSION_WINDOW};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid interval request k={k}, n={n}, alpha={alpha}")]
    InvalidInterval { k: u64, n: u64, alpha: f64 },
    #[error("window {window} does not fit a series of length {len}")]
    Window { window: usize, len: usize },
    #[error("epoch {epoch} {phase:?}: {have} records, expected {want}")]
    IncompleteEpoch {
        epoch: u32,
        phase: Phase,
        have: usize,
        want: usize,
    },
    #[error("invalid curves: {0}")]
    Curves(String),
    #[error("not computable: {0}")]
    NotComputable(String),
    #[error("test image {0} has no kind in the manifest")]
    Untagged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
