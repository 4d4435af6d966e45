//! Session service for live human observers. Serves the trial sequence in
//! protocol order, computes feedback, and persists every answer before
//! acknowledging it. Clients talk JSON lines over TCP (see [`protocol`]).

pub mod client;
pub mod protocol;
pub mod server;
mod service;
pub mod store;

use thiserror::Error;

use learndyn_core::dataset::DatasetError;
use learndyn_core::render::RenderError;
use learndyn_core::trial::LogError;

pub use client::Client;
pub use protocol::ErrorCode;
pub use server::{serve, spawn};
pub use service::{ExperimentConfig, Service, ServiceAssets};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{message}")]
    Rejected { code: ErrorCode, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing asset {0}")]
    MissingAsset(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub(crate) fn rejected(code: ErrorCode, message: impl Into<String>) -> Self {
        ServiceError::Rejected {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::Rejected { code, .. } => *code,
            _ => ErrorCode::Internal,
        }
    }
}
