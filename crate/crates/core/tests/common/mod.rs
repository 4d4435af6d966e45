#![allow(dead_code)]

pub mod oracle;
pub mod spectrum;

use rand::Rng;

use learndyn_core::dataset::{compose_splits, CategorySimilarity, DatasetManifest, SimilarityReport};
use learndyn_core::embryo::Category;
use learndyn_core::render::ViewSpec;
use learndyn_core::seed::keyed_rng;
use learndyn_core::trial::{Phase, ProtocolShape, SessionLog, TrialRecord};

/// Report with `n` kept objects per category and a flat similarity matrix.
pub fn flat_report(n: usize) -> SimilarityReport {
    let categories = Category::ALL
        .iter()
        .map(|&c| {
            let ids: Vec<String> = (0..n).map(|i| format!("{}_{i:03}", c.slug())).collect();
            CategorySimilarity {
                category: c,
                object_ids: ids.clone(),
                matrix: vec![vec![1.0; n]; n],
                mean_similarity: vec![1.0; n],
                kept: ids,
            }
        })
        .collect();
    SimilarityReport { categories }
}

pub fn manifest(seed: u64) -> DatasetManifest {
    compose_splits(&flat_report(50), &ViewSpec::canonical_series(), seed).unwrap()
}

/// Protocol-ordered log whose responses are drawn at random; each epoch
/// has its own probability of a correct answer so curves vary.
pub fn random_log(manifest: &DatasetManifest, shape: &ProtocolShape, seed: u64) -> SessionLog {
    let mut rng = keyed_rng(seed, &[0x6c6f67]);
    let mut records = Vec::new();
    for epoch in 1..=shape.epochs {
        let p_train: f64 = rng.random();
        let p_test: f64 = rng.random();
        let blocks = [
            (Phase::Train, manifest.training_set.clone(), p_train),
            (Phase::Test, manifest.test_sets[epoch as usize - 1].iter().map(|t| t.image.clone()).collect(), p_test),
        ];
        for (phase, images, p) in blocks {
            for (i, img) in images.iter().enumerate() {
                let response = if rng.random_bool(p) {
                    img.category
                } else {
                    let k = (img.category.index() + rng.random_range(1..3)) % 3;
                    Category::from_index(k).unwrap()
                };
                records.push(TrialRecord {
                    observer_id: "synthetic".into(),
                    run: 0,
                    phase,
                    epoch,
                    trial_index: i as u32 + 1,
                    image_id: img.image_id(),
                    true_label: img.category,
                    response_label: response,
                    scores: None,
                    correct: response == img.category,
                    timestamp_ms: None,
                    response_time_ms: None,
                    audit: None,
                });
            }
        }
    }
    SessionLog {
        observer_id: "synthetic".into(),
        run: 0,
        records,
    }
}
