use std::path::Path;

use image::{Rgb, RgbImage};

use learndyn_core::dataset::{compose_splits, CategorySimilarity, DatasetManifest, SimilarityReport};
use learndyn_core::embryo::Category;
use learndyn_core::practice::{practice_images, PracticeSet, PRACTICE_TRIALS};
use learndyn_core::render::{RenderConfig, ViewSpec};
use learndyn_service::{ExperimentConfig, Service, ServiceAssets};

/// Twelve kept objects per category, tiny placeholder images on disk and a
/// practice set, under `data`.
pub fn fixture(data: &Path) -> DatasetManifest {
    let categories = Category::ALL
        .iter()
        .map(|&c| {
            let ids: Vec<String> = (0..12).map(|i| format!("{}_{i:03}", c.slug())).collect();
            CategorySimilarity {
                category: c,
                object_ids: ids.clone(),
                matrix: vec![vec![1.0; 12]; 12],
                mean_similarity: vec![1.0; 12],
                kept: ids,
            }
        })
        .collect();
    let report = SimilarityReport { categories };
    let manifest = compose_splits(&report, &ViewSpec::canonical_series(), 9).unwrap();
    for r in manifest.protocol_images() {
        let p = data.join(r.relative_path());
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        let shade = 60 * r.category.index() as u8;
        RgbImage::from_pixel(8, 8, Rgb([shade, 100, 200])).save(&p).unwrap();
    }
    let cfg = RenderConfig {
        size: 32,
        supersample: 1,
        ..RenderConfig::default()
    };
    let imgs = practice_images(1, PRACTICE_TRIALS, &cfg).unwrap();
    PracticeSet::write(&data.join("practice"), &imgs, &cfg).unwrap();
    manifest
}

pub fn config() -> ExperimentConfig {
    ExperimentConfig {
        stimulus_px: 32,
        ..ExperimentConfig::default()
    }
}

pub fn open(data: &Path, manifest: &DatasetManifest, cfg: ExperimentConfig) -> Service {
    let assets = ServiceAssets::load(data, manifest.clone()).unwrap();
    Service::open(cfg, assets, &data.join("sessions")).unwrap()
}
