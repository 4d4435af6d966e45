//! Familiarisation material for live sessions: a fixation target and a
//! small practice set of plain shapes with their own three labels, kept
//! apart from the experimental categories.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embryo::{icosahedron, Mesh};
use crate::geom::Mat3;
use crate::render::{render_with_rotation, RenderConfig, RenderError};
use crate::seed::keyed_rng;

pub const PRACTICE_LABELS: [&str; 3] = ["round", "long", "flat"];
pub const PRACTICE_TRIALS: usize = 10;

const STRETCH: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.0, 0.3, 0.3], [1.0, 1.0, 0.2]];

/// Combined bull's-eye and cross-hair on the stimulus background.
pub fn fixation_target(size: u32, background: u8) -> RgbImage {
    let c = (size as f64 - 1.0) / 2.0;
    let outer = size as f64 * 0.06;
    let inner = outer * 0.3;
    let bar = (outer * 0.3).max(0.5);
    RgbImage::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let r = (dx * dx + dy * dy).sqrt();
        let v = if r <= inner || (r <= outer && dx.abs() > bar && dy.abs() > bar) {
            0
        } else if r <= outer {
            255
        } else {
            background
        };
        Rgb([v, v, v])
    })
}

fn stretched(axes: [f64; 3]) -> Mesh {
    let mut m = icosahedron();
    for v in &mut m.vertices {
        for i in 0..3 {
            v[i] *= axes[i];
        }
    }
    m.lineage.object_id = "practice".into();
    m
}

/// Uniform random rotation (unit quaternion from three uniforms).
fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PracticeImage {
    pub image_id: String,
    pub label: String,
    pub pixels: RgbImage,
}

/// `count` practice images cycling through the three shapes, each at a
/// random orientation.
pub fn practice_images(seed: u64, count: usize, cfg: &RenderConfig) -> Result<Vec<PracticeImage>, RenderError> {
    let mut rng = keyed_rng(seed, &[0x7072_6163]);
    let shapes: Vec<Mesh> = STRETCH.iter().map(|&a| stretched(a)).collect();
    (0..count)
        .map(|i| {
            let k = i % PRACTICE_LABELS.len();
            let rot = random_rotation(&mut rng);
            Ok(PracticeImage {
                image_id: format!("practice_{i:02}"),
                label: PRACTICE_LABELS[k].to_string(),
                pixels: render_with_rotation(&shapes[k], &rot, cfg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeEntry {
    pub image_id: String,
    pub label: String,
    /// Relative to the practice directory.
    pub path: String,
}

/// Contents of `practice/practice.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeSet {
    pub labels: Vec<String>,
    pub fixation: String,
    pub trials: Vec<PracticeEntry>,
}

impl PracticeSet {
    /// Writes the images, the fixation target and `practice.json` into `dir`.
    pub fn write(dir: &Path, images: &[PracticeImage], cfg: &RenderConfig) -> Result<PracticeSet, RenderError> {
        std::fs::create_dir_all(dir)?;
        let mut trials = Vec::new();
        for img in images {
            let path = format!("{}.png", img.image_id);
            img.pixels.save(dir.join(&path))?;
            trials.push(PracticeEntry {
                image_id: img.image_id.clone(),
                label: img.label.clone(),
                path,
            });
        }
        fixation_target(cfg.size, cfg.background).save(dir.join("fixation.png"))?;
        let set = PracticeSet {
            labels: PRACTICE_LABELS.iter().map(|s| s.to_string()).collect(),
            fixation: "fixation.png".into(),
            trials,
        };
        let f = BufWriter::new(File::create(dir.join("practice.json"))?);
        serde_json::to_writer_pretty(f, &set).map_err(std::io::Error::from)?;
        Ok(set)
    }

    pub fn read(dir: &Path) -> std::io::Result<PracticeSet> {
        let f = File::open(dir.join("practice.json"))?;
        Ok(serde_json::from_reader(f)?)
    }
}
