use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use image::RgbImage;

use super::{adam_step, argmax, AdamState, Input, LearnerError, ModelConfig, Network};
use crate::dataset::{DatasetManifest, ImageRef};
use crate::embryo::Category;
use crate::seed::{derive_keyed, keyed_rng};
use crate::trial::{Phase, SessionLog, TrialRecord};

const INIT_KEY: u64 = 0x696e_6974;
const SHUFFLE_KEY: u64 = 0x7368_7566;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub model: ModelConfig,
    pub observer_id: String,
    pub runs: u32,
    pub epochs: u32,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            model: ModelConfig::default(),
            observer_id: "learner".into(),
            runs: 20,
            epochs: 6,
            batch: 4,
            lr: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: SessionLog,
    /// Parameter digests taken before and after each test phase.
    pub eval_digests: Vec<(String, String)>,
    pub final_digest: String,
}

/// Loads and downsamples every training and test image of the manifest.
pub fn prepare_inputs<F>(manifest: &DatasetManifest, model: &ModelConfig, load: F) -> Result<HashMap<String, Input>, LearnerError>
where
    F: Fn(&ImageRef) -> Result<RgbImage, LearnerError> + Sync,
{
    let mut refs: Vec<&ImageRef> = manifest.protocol_images().collect();
    refs.sort_by_key(|r| r.image_id());
    refs.dedup_by_key(|r| r.image_id());
    refs.par_iter()
        .map(|r| {
            let img = load(r)?;
            Ok((r.image_id(), Input::from_image(&img, model.internal_size)?))
        })
        .collect()
}

/// Trains `cfg.runs` independent networks under the protocol: each epoch
/// shuffles the training set, trains in batches (logging each prediction
/// before the update), then evaluates that epoch's test set with frozen
/// parameters. Runs execute in parallel; results are in run order.
pub fn run_session(cfg: &SessionConfig, manifest: &DatasetManifest, inputs: &HashMap<String, Input>) -> Result<Vec<RunResult>, LearnerError> {
    cfg.model.validate()?;
    if cfg.batch == 0 {
        return Err(LearnerError::Config("batch size must be positive".into()));
    }
    if cfg.epochs as usize > manifest.test_sets.len() {
        return Err(LearnerError::Protocol(format!(
            "{} epochs but only {} test sets",
            cfg.epochs,
            manifest.test_sets.len()
        )));
    }
    for r in manifest.protocol_images() {
        if !inputs.contains_key(&r.image_id()) {
            return Err(LearnerError::MissingImage(r.image_id()));
        }
    }
    (0..cfg.runs).into_par_iter().map(|run| run_one(cfg, manifest, inputs, run)).collect()
}

fn record(cfg: &SessionConfig, run: u32, phase: Phase, epoch: u32, trial_index: u32, image: &ImageRef, logits: [f64; 3]) -> TrialRecord {
    let response = Category::from_index(argmax(&logits)).expect("three classes");
    TrialRecord {
        observer_id: cfg.observer_id.clone(),
        run,
        phase,
        epoch,
        trial_index,
        image_id: image.image_id(),
        true_label: image.category,
        response_label: response,
        scores: Some(logits),
        correct: response == image.category,
        timestamp_ms: None,
        response_time_ms: None,
        audit: None,
    }
}

fn run_one(cfg: &SessionConfig, manifest: &DatasetManifest, inputs: &HashMap<String, Input>, run: u32) -> Result<RunResult, LearnerError> {
    let mut net = Network::new(cfg.model.clone(), derive_keyed(cfg.seed, &[INIT_KEY, run as u64]))?;
    let mut adam = AdamState::new(net.param_count(), cfg.lr);
    let mut records = Vec::new();
    let mut eval_digests = Vec::new();
    let fetch = |r: &ImageRef| inputs[&r.image_id()].clone();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<&ImageRef> = manifest.training_set.iter().collect();
        order.shuffle(&mut keyed_rng(cfg.seed, &[SHUFFLE_KEY, run as u64, epoch as u64]));
        let mut trial = 0;
        for chunk in order.chunks(cfg.batch) {
            let xs: Vec<Input> = chunk.iter().map(|r| fetch(r)).collect();
            let ys: Vec<usize> = chunk.iter().map(|r| r.label()).collect();
            let (_, grads, logits) = net.loss_and_grads(&xs, &ys)?;
            for (r, l) in chunk.iter().zip(logits) {
                trial += 1;
                records.push(record(cfg, run, Phase::Train, epoch, trial, r, l));
            }
            adam_step(&mut net.params, &grads, &mut adam)?;
        }

        let set = &manifest.test_sets[epoch as usize - 1];
        let before = net.digest();
        let mut trial = 0;
        for chunk in set.chunks(cfg.batch) {
            let xs: Vec<Input> = chunk.iter().map(|t| fetch(&t.image)).collect();
            for (t, l) in chunk.iter().zip(net.forward(&xs)?) {
                trial += 1;
                records.push(record(cfg, run, Phase::Test, epoch, trial, &t.image, l));
            }
        }
        let after = net.digest();
        if before != after {
            return Err(LearnerError::EvaluationChangedParameters(epoch as usize));
        }
        eval_digests.push((before, after));
    }

    Ok(RunResult {
        log: SessionLog {
            observer_id: cfg.observer_id.clone(),
            run,
            records,
        },
        eval_digests,
        final_digest: net.digest(),
    })
}
