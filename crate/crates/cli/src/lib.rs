//! Pipeline stages behind the `learndyn` binary. Each stage reads and
//! writes a fixed layout under one data directory and records a stamp
//! (config plus digest of its outputs) so an identical rerun is a no-op.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use learndyn_core::analysis::report::{read_metadata, summarize, write_report, ObserverSummary};
use learndyn_core::dataset::{compose_splits, filter_coherent, DatasetManifest, InitialRendering};
use learndyn_core::embryo::{spawn_taxonomy_with, write_taxonomy, TaxonomyEntry, CHILDREN_PER_PARENT};
use learndyn_core::learner::{prepare_inputs, run_session, LearnerError, SessionConfig};
use learndyn_core::practice::{practice_images, PracticeSet, PRACTICE_TRIALS};
use learndyn_core::render::{render, RenderConfig, ViewSpec};
use learndyn_core::seed::{derive_seed, sha256_hex};
use learndyn_core::trial::{ingest_log_file, ProtocolShape, SessionLog};

pub const DATA_DIR_ENV: &str = "LEARNDYN_DATA_DIR";

/// File layout of a data directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn taxonomy(&self) -> PathBuf {
        self.root.join("objects").join("taxonomy.jsonl")
    }
    pub fn images(&self) -> PathBuf {
        self.root.join("images")
    }
    pub fn practice(&self) -> PathBuf {
        self.root.join("practice")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dataset().join("manifest.jsonl")
    }
    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }
    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn sessions(&self) -> PathBuf {
        self.root.join("sessions")
    }
    fn stamp(&self, stage: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{stage}.json"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    config: Value,
    /// Relative to the data directory.
    files: Vec<String>,
    digest: String,
}

/// Digest over the listed files' paths and contents.
pub fn digest_files(root: &Path, files: &[String]) -> Result<String> {
    let hashes: Vec<String> = files
        .par_iter()
        .map(|f| Ok(format!("{f}\t{}\n", sha256_hex(&fs::read(root.join(f)).with_context(|| format!("reading {f}"))?))))
        .collect::<Result<_>>()?;
    Ok(sha256_hex(hashes.concat().as_bytes()))
}

fn up_to_date(layout: &Layout, stage: &str, config: &Value) -> Option<String> {
    let text = fs::read_to_string(layout.stamp(stage)).ok()?;
    let stamp: Stamp = serde_json::from_str(&text).ok()?;
    if &stamp.config != config {
        return None;
    }
    let digest = digest_files(&layout.root, &stamp.files).ok()?;
    (digest == stamp.digest).then_some(digest)
}

fn write_stamp(layout: &Layout, stage: &str, config: Value, mut files: Vec<String>) -> Result<String> {
    files.sort();
    let digest = digest_files(&layout.root, &files)?;
    let path = layout.stamp(stage);
    fs::create_dir_all(path.parent().expect("has parent"))?;
    fs::write(&path, serde_json::to_string_pretty(&Stamp { config, files, digest: digest.clone() })?)?;
    Ok(digest)
}

/// Outcome of a stage run.
#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    /// True when a matching stamp made the run a no-op.
    pub skipped: bool,
    pub digest: String,
    pub counts: BTreeMap<String, usize>,
}

fn skipped(digest: String) -> StageResult {
    StageResult {
        skipped: true,
        digest,
        counts: BTreeMap::new(),
    }
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub seed: u64,
    pub children: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            seed: 0,
            children: CHILDREN_PER_PARENT,
        }
    }
}

/// Grows the taxonomy and renders the 23 views of every child, plus the
/// practice material.
pub fn gen(layout: &Layout, opts: &GenOptions) -> Result<StageResult> {
    let config = json!({"seed": opts.seed, "children": opts.children, "render": RenderConfig::default()});
    if let Some(d) = up_to_date(layout, "gen", &config) {
        return Ok(skipped(d));
    }
    let meshes = spawn_taxonomy_with(derive_seed(opts.seed, "gen"), opts.children).context("growing the taxonomy")?;
    let entries = write_taxonomy(&meshes, &layout.root)?;
    let mut files: Vec<String> = entries.iter().map(|e| e.path.clone()).collect();
    files.push("objects/taxonomy.jsonl".into());

    let cfg = RenderConfig::default();
    let children: Vec<_> = meshes.iter().filter(|m| m.lineage.generation == 2).collect();
    let views = ViewSpec::canonical_series();
    let jobs: Vec<_> = children.iter().flat_map(|m| views.iter().map(move |&v| (*m, v))).collect();
    let rendered: Vec<String> = jobs
        .par_iter()
        .map(|(m, v)| {
            let category = m.lineage.category.expect("children carry a category");
            let rel = format!("images/{}/{}.png", category.slug(), v.image_id(&m.lineage.object_id));
            let path = layout.root.join(&rel);
            fs::create_dir_all(path.parent().expect("has parent"))?;
            render(m, *v, &cfg)
                .and_then(|img| img.save_png(&path))
                .with_context(|| format!("rendering {}", m.lineage.object_id))?;
            Ok(rel)
        })
        .collect::<Result<_>>()?;
    let renderings = rendered.len();
    files.extend(rendered);

    let practice = practice_images(derive_seed(opts.seed, "practice"), PRACTICE_TRIALS, &cfg)?;
    let set = PracticeSet::write(&layout.practice(), &practice, &cfg)?;
    files.extend(set.trials.iter().map(|t| format!("practice/{}", t.path)));
    files.push(format!("practice/{}", set.fixation));
    files.push("practice/practice.json".into());

    let digest = write_stamp(layout, "gen", config, files)?;
    Ok(StageResult {
        skipped: false,
        digest,
        counts: BTreeMap::from([("meshes".into(), meshes.len()), ("renderings".into(), renderings)]),
    })
}

pub fn read_taxonomy(path: &Path) -> Result<Vec<TaxonomyEntry>> {
    let reader = BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Similarity filtering and split composition.
pub fn dataset(layout: &Layout, seed: u64) -> Result<StageResult> {
    let entries = read_taxonomy(&layout.taxonomy())?;
    let gen_digest = fs::read_to_string(layout.stamp("gen")).unwrap_or_default();
    let config = json!({"seed": seed, "gen": sha256_hex(gen_digest.as_bytes())});
    if let Some(d) = up_to_date(layout, "dataset", &config) {
        return Ok(skipped(d));
    }
    let initial: Vec<InitialRendering> = entries
        .par_iter()
        .filter(|e| e.lineage.generation == 2)
        .map(|e| {
            let category = e.lineage.category.context("child without category")?;
            let rel = format!("images/{}/{}.png", category.slug(), ViewSpec::INITIAL.image_id(&e.lineage.object_id));
            let image = image::open(layout.root.join(&rel)).with_context(|| format!("missing rendering {rel}"))?.to_rgb8();
            Ok(InitialRendering {
                object_id: e.lineage.object_id.clone(),
                category,
                image,
            })
        })
        .collect::<Result<_>>()?;
    let report = filter_coherent(&initial)?;
    report.write_csv(&layout.dataset())?;
    let manifest = compose_splits(&report, &ViewSpec::canonical_series(), derive_seed(seed, "dataset"))?;
    for r in &manifest.pool {
        if !layout.root.join(r.relative_path()).is_file() {
            bail!("missing rendering {}", r.relative_path());
        }
    }
    manifest.write_jsonl(&layout.manifest())?;

    let mut files = vec!["dataset/manifest.jsonl".to_string()];
    files.extend(report.categories.iter().map(|c| format!("dataset/similarity_{}.csv", c.category.slug())));
    let digest = write_stamp(layout, "dataset", config, files)?;
    Ok(StageResult {
        skipped: false,
        digest,
        counts: BTreeMap::from([
            ("pool".into(), manifest.pool.len()),
            ("training".into(), manifest.training_set.len()),
            ("test_sets".into(), manifest.test_sets.len()),
        ]),
    })
}

pub fn load_manifest(layout: &Layout) -> Result<DatasetManifest> {
    DatasetManifest::read_jsonl(&layout.manifest()).with_context(|| format!("reading {}", layout.manifest().display()))
}

pub fn shape_for(manifest: &DatasetManifest, epochs: u32) -> ProtocolShape {
    ProtocolShape {
        epochs,
        train_per_epoch: manifest.training_set.len() as u32,
        test_per_epoch: manifest.test_sets.first().map_or(0, |t| t.len()) as u32,
    }
}

/// Trains the learner runs, writes one log per run, the evaluation
/// digests, and a curves report.
pub fn train(layout: &Layout, cfg: &SessionConfig) -> Result<StageResult> {
    let manifest = load_manifest(layout)?;
    let config = json!({
        "seed": cfg.seed, "runs": cfg.runs, "epochs": cfg.epochs, "batch": cfg.batch, "lr": cfg.lr,
        "observer": cfg.observer_id, "model": cfg.model, "manifest": sha256_hex(&fs::read(layout.manifest())?),
    });
    if let Some(d) = up_to_date(layout, "train", &config) {
        return Ok(skipped(d));
    }
    let root = layout.root.clone();
    let inputs = prepare_inputs(&manifest, &cfg.model, |r| {
        Ok(image::open(root.join(r.relative_path()))
            .map_err(|e| match e {
                image::ImageError::IoError(_) => LearnerError::MissingImage(r.relative_path()),
                other => LearnerError::Image(other),
            })?
            .to_rgb8())
    })?;
    let results = run_session(cfg, &manifest, &inputs)?;

    let dir = layout.train();
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut digests = Vec::new();
    for r in &results {
        let name = format!("{}_run{:02}.jsonl", cfg.observer_id, r.log.run);
        r.log.write_jsonl(&dir.join(&name))?;
        files.push(format!("train/{name}"));
        digests.push(json!({"run": r.log.run, "evaluation": r.eval_digests, "final": r.final_digest}));
    }
    fs::write(dir.join("digests.json"), serde_json::to_string_pretty(&digests)?)?;
    files.push("train/digests.json".into());

    let logs: Vec<SessionLog> = results.into_iter().map(|r| r.log).collect();
    let summary = summarize(&cfg.observer_id, &logs, Some(&manifest), &shape_for(&manifest, cfg.epochs), false)?;
    write_report(&dir.join("report"), &[summary], None)?;
    files.push("train/report/curves.csv".into());
    files.push("train/report/delta_g.csv".into());

    let digest = write_stamp(layout, "train", config, files)?;
    Ok(StageResult {
        skipped: false,
        digest,
        counts: BTreeMap::from([("logs".into(), logs.len())]),
    })
}

fn known_images(manifest: Option<&DatasetManifest>) -> Option<HashSet<String>> {
    manifest.map(|m| m.protocol_images().map(|r| r.image_id()).collect())
}

/// Expands directories into their `.jsonl` files.
pub fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub logs: Vec<SessionLog>,
    /// One entry per rejected file.
    pub errors: Vec<(PathBuf, String)>,
    pub unknown_images: Vec<(PathBuf, Vec<String>)>,
}

/// Parses and validates log files, splitting each on observer/run changes.
pub fn read_logs(files: &[PathBuf], manifest: Option<&DatasetManifest>, shape: &ProtocolShape) -> IngestOutcome {
    let known = known_images(manifest);
    let mut out = IngestOutcome {
        logs: Vec::new(),
        errors: Vec::new(),
        unknown_images: Vec::new(),
    };
    for f in files {
        match ingest_log_file(f, known.as_ref(), shape, false) {
            Ok(parts) => {
                for part in parts {
                    if !part.unknown_images.is_empty() {
                        out.unknown_images.push((f.clone(), part.unknown_images));
                    }
                    out.logs.push(part.log);
                }
            }
            Err(e) => out.errors.push((f.clone(), e.to_string())),
        }
    }
    out
}

/// Validates external logs and copies them into `logs/`, one file per
/// observer and run.
pub fn ingest(layout: &Layout, files: &[PathBuf], epochs: u32) -> Result<IngestOutcome> {
    let manifest = load_manifest(layout).ok();
    let shape = manifest.as_ref().map_or(ProtocolShape { epochs, ..ProtocolShape::CANONICAL }, |m| shape_for(m, epochs));
    let outcome = read_logs(&expand_inputs(files)?, manifest.as_ref(), &shape);
    fs::create_dir_all(layout.logs())?;
    for log in &outcome.logs {
        log.write_jsonl(&layout.logs().join(format!("{}_run{:02}.jsonl", log.observer_id, log.run)))?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inclusion {
    /// Apply the inclusion rules to observers whose logs carry no scores.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub inputs: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub report: PathBuf,
    pub epochs: u32,
    pub inclusion: Inclusion,
}

#[derive(Debug)]
pub struct AnalyzeOutcome {
    pub summaries: Vec<ObserverSummary>,
    pub errors: Vec<(PathBuf, String)>,
}

/// Builds the report bundle. Files that fail validation are listed and
/// skipped; at least one valid log is required.
pub fn analyze(opts: &AnalyzeOptions) -> Result<AnalyzeOutcome> {
    let manifest = match &opts.manifest {
        Some(p) => Some(DatasetManifest::read_jsonl(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let shape = manifest
        .as_ref()
        .map_or(ProtocolShape { epochs: opts.epochs, ..ProtocolShape::CANONICAL }, |m| shape_for(m, opts.epochs));
    let files = expand_inputs(&opts.inputs)?;
    let read = read_logs(&files, manifest.as_ref(), &shape);
    if read.logs.is_empty() {
        let detail: Vec<String> = read.errors.iter().map(|(f, e)| format!("{}: {e}", f.display())).collect();
        bail!("no valid logs among {} file(s)\n{}", files.len(), detail.join("\n"));
    }
    let mut groups: BTreeMap<String, Vec<SessionLog>> = BTreeMap::new();
    for log in read.logs {
        groups.entry(log.observer_id.clone()).or_default().push(log);
    }
    let mut summaries = Vec::new();
    let mut errors = read.errors;
    for (observer, mut logs) in groups {
        logs.sort_by_key(|l| l.run);
        let human = logs.iter().all(|l| l.records.iter().all(|r| r.scores.is_none()));
        let apply = match opts.inclusion {
            Inclusion::Auto => human,
            Inclusion::On => true,
            Inclusion::Off => false,
        };
        match summarize(&observer, &logs, manifest.as_ref(), &shape, apply) {
            Ok(s) => summaries.push(s),
            Err(e) => errors.push((PathBuf::from(&observer), e.to_string())),
        }
    }
    let metadata = match &opts.metadata {
        Some(p) => Some(read_metadata(p)?),
        None => None,
    };
    write_report(&opts.report, &summaries, metadata.as_deref())?;
    Ok(AnalyzeOutcome { summaries, errors })
}
