//! Desk-scale learner: a small convolutional classifier trained from
//! scratch with Adam under the same six-epoch train/test protocol as the
//! human observers, logging every prediction.

mod adam;
mod net;
mod session;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use net::{argmax, softmax, Network};
pub use session::{prepare_inputs, run_session, RunResult, SessionConfig};

pub const CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Silu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Side of the stimulus images.
    pub input_size: u32,
    /// Side after box downsampling; must divide `input_size`.
    pub internal_size: u32,
    /// Output channels of each 3x3 stride-2 convolution block.
    pub channels: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 224,
            internal_size: 56,
            channels: vec![16, 32, 64],
            activation: Activation::Silu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(LearnerError::Config("need at least one non-empty conv block".into()));
        }
        if self.internal_size == 0 || !self.input_size.is_multiple_of(self.internal_size) {
            return Err(LearnerError::Config(format!(
                "internal size {} must divide input size {}",
                self.internal_size, self.input_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("label {0} out of range")]
    Label(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("manifest does not fit the protocol: {0}")]
    Protocol(String),
    #[error("missing input image {0}")]
    MissingImage(String),
    #[error("parameters changed during evaluation of test set {0}")]
    EvaluationChangedParameters(usize),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// Channel-major image in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Input {
    /// Box-downsamples an RGB image by an integer factor and maps
    /// intensities to [-1, 1].
    pub fn from_image(img: &RgbImage, size: u32) -> Result<Self, LearnerError> {
        let (w, h) = img.dimensions();
        if size == 0 || w != h || w % size != 0 {
            return Err(LearnerError::Shape {
                expected: format!("square image with side a multiple of {size}"),
                got: format!("{w}x{h}"),
            });
        }
        let f = (w / size) as usize;
        let s = size as usize;
        let norm = 2.0 / (255.0 * (f * f) as f64);
        let mut data = vec![-1.0; 3 * s * s];
        for (x, y, p) in img.enumerate_pixels() {
            let (ox, oy) = (x as usize / f, y as usize / f);
            for c in 0..3 {
                data[c * s * s + oy * s + ox] += p[c] as f64 * norm;
            }
        }
        Ok(Input {
            channels: 3,
            height: s,
            width: s,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn box_downsample() {
        let img = RgbImage::from_fn(4, 4, |x, _| if x < 2 { Rgb([255, 0, 0]) } else { Rgb([0, 0, 255]) });
        let x = Input::from_image(&img, 2).unwrap();
        assert_eq!(x.data, vec![1.0, -1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0, -1.0, 1.0]);
        assert!(Input::from_image(&img, 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            internal_size: 50,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
