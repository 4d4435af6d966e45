use std::collections::HashMap;
use std::io::Cursor as IoCursor;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::Engine;
use image::ImageFormat;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use learndyn_core::dataset::{DatasetManifest, ImageRef};
use learndyn_core::embryo::Category;
use learndyn_core::practice::{fixation_target, PracticeSet};
use learndyn_core::render::{pink_noise_mask, IMAGE_SIZE};
use learndyn_core::seed::{derive_keyed, keyed_rng, sha256_hex};
use learndyn_core::trial::{Phase, ProtocolShape, SessionLog, TrialRecord};

use crate::protocol::*;
use crate::store::{AnsweredEvent, SessionMeta, SessionStore};
use crate::ServiceError;

const TRAIN_KEY: u64 = 0x7472_6169;
const TEST_KEY: u64 = 0x7465_7374;
const MASK_KEY: u64 = 0x6d61_736b;
const BACKGROUND: u8 = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fixation_ms: u32,
    pub stimulus_ms: u32,
    pub mask_ms: u32,
    pub feedback_ms: u32,
    pub correction_ms: u32,
    pub epochs: u32,
    pub practice_trials: u32,
    pub stimulus_px: u32,
    /// Reject a new session while the observer has an unfinished one.
    pub exclusive: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            fixation_ms: 400,
            stimulus_ms: 300,
            mask_ms: 300,
            feedback_ms: 1000,
            correction_ms: 1000,
            epochs: 6,
            practice_trials: 10,
            stimulus_px: IMAGE_SIZE,
            exclusive: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let durations = [self.fixation_ms, self.stimulus_ms, self.mask_ms, self.feedback_ms, self.correction_ms];
        if durations.contains(&0) {
            return Err(ServiceError::Config("all durations must be positive".into()));
        }
        if self.epochs == 0 || self.stimulus_px == 0 {
            return Err(ServiceError::Config("epochs and stimulus size must be positive".into()));
        }
        Ok(())
    }
}

/// The manifest and the files behind it.
#[derive(Debug, Clone)]
pub struct ServiceAssets {
    /// Root that manifest image paths are relative to.
    pub data_dir: PathBuf,
    pub manifest: DatasetManifest,
    pub practice_dir: PathBuf,
    pub practice: PracticeSet,
}

impl ServiceAssets {
    /// Loads the practice set and checks every protocol image is on disk.
    pub fn load(data_dir: &Path, manifest: DatasetManifest) -> Result<Self, ServiceError> {
        manifest.validate()?;
        for r in manifest.protocol_images() {
            if !data_dir.join(r.relative_path()).is_file() {
                return Err(ServiceError::MissingAsset(r.relative_path()));
            }
        }
        let practice_dir = data_dir.join("practice");
        let practice = PracticeSet::read(&practice_dir)?;
        if practice.trials.is_empty() || practice.labels.len() != 3 {
            return Err(ServiceError::Config("practice set needs trials and three labels".into()));
        }
        for t in &practice.trials {
            if !practice.labels.contains(&t.label) || !practice_dir.join(&t.path).is_file() {
                return Err(ServiceError::MissingAsset(format!("practice/{}", t.path)));
            }
        }
        Ok(ServiceAssets {
            data_dir: data_dir.to_path_buf(),
            manifest,
            practice_dir,
            practice,
        })
    }
}

#[derive(Debug, Clone)]
enum Source {
    Practice(usize),
    Image(ImageRef),
}

#[derive(Debug, Clone)]
struct Planned {
    phase: Phase,
    epoch: u32,
    index: u32,
    block: u32,
    source: Source,
    answer: String,
}

#[derive(Debug, Clone)]
enum AssetSource {
    File(PathBuf),
    Fixation,
    Mask(u64),
}

#[derive(Debug)]
struct Outstanding {
    seq: usize,
    trial_id: String,
    served_ms: u64,
}

#[derive(Debug)]
struct Session {
    meta: SessionMeta,
    store: SessionStore,
    events: Vec<AnsweredEvent>,
    plan: Vec<Planned>,
    outstanding: Option<Outstanding>,
    handles: HashMap<String, AssetSource>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn category_options() -> Vec<String> {
    Category::ALL.iter().map(|c| c.name().to_string()).collect()
}

/// Full trial sequence of a session: practice, then per epoch a shuffled
/// training block and a shuffled test block.
fn plan(meta: &SessionMeta, assets: &ServiceAssets) -> Result<Vec<Planned>, ServiceError> {
    let m = &assets.manifest;
    if meta.epochs as usize > m.test_sets.len() {
        return Err(ServiceError::Config(format!("{} epochs but {} test sets", meta.epochs, m.test_sets.len())));
    }
    let mut out = Vec::new();
    let np = meta.practice_trials;
    for i in 0..np as usize {
        let k = i % assets.practice.trials.len();
        out.push(Planned {
            phase: Phase::Practice,
            epoch: 0,
            index: i as u32 + 1,
            block: np,
            source: Source::Practice(k),
            answer: assets.practice.trials[k].label.clone(),
        });
    }
    for epoch in 1..=meta.epochs {
        let mut train: Vec<&ImageRef> = m.training_set.iter().collect();
        train.shuffle(&mut keyed_rng(meta.shuffle_seed, &[TRAIN_KEY, epoch as u64]));
        let mut test: Vec<&ImageRef> = m.test_sets[epoch as usize - 1].iter().map(|t| &t.image).collect();
        test.shuffle(&mut keyed_rng(meta.shuffle_seed, &[TEST_KEY, epoch as u64]));
        for (phase, block) in [(Phase::Train, train), (Phase::Test, test)] {
            let n = block.len() as u32;
            for (i, r) in block.into_iter().enumerate() {
                out.push(Planned {
                    phase,
                    epoch,
                    index: i as u32 + 1,
                    block: n,
                    source: Source::Image(r.clone()),
                    answer: r.category.name().to_string(),
                });
            }
        }
    }
    Ok(out)
}

impl Session {
    fn finished(&self) -> bool {
        self.events.len() >= self.plan.len()
    }

    fn info(&self) -> SessionInfo {
        let (status, cursor) = match self.plan.get(self.events.len()) {
            None => (Status::Finished, None),
            Some(p) => (
                status_of(p.phase),
                Some(Cursor {
                    phase: p.phase,
                    epoch: p.epoch,
                    trial_index: p.index,
                }),
            ),
        };
        SessionInfo {
            session_id: self.meta.session_id.clone(),
            observer_id: self.meta.observer_id.clone(),
            status,
            cursor,
            answered: self.events.len() as u64,
            total: self.plan.len() as u64,
        }
    }

    fn handle(&self, seq: usize, kind: &str) -> String {
        sha256_hex(format!("{}/{seq}/{kind}", self.meta.session_id).as_bytes())[..24].to_string()
    }
}

fn status_of(phase: Phase) -> Status {
    match phase {
        Phase::Practice => Status::Practice,
        Phase::Train => Status::Training,
        Phase::Test => Status::Testing,
    }
}

/// All live sessions. Operations on one session are serialized by its own
/// lock; the registry lock is only held to look sessions up or add one.
#[derive(Debug)]
pub struct Service {
    config: ExperimentConfig,
    assets: ServiceAssets,
    sessions_dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    fixation_png: Vec<u8>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    /// Opens the service and restores every session found under
    /// `sessions_dir`.
    pub fn open(config: ExperimentConfig, assets: ServiceAssets, sessions_dir: &Path) -> Result<Self, ServiceError> {
        config.validate()?;
        std::fs::create_dir_all(sessions_dir)?;
        let mut png = IoCursor::new(Vec::new());
        fixation_target(config.stimulus_px, BACKGROUND).write_to(&mut png, ImageFormat::Png)?;
        let svc = Service {
            config,
            assets,
            sessions_dir: sessions_dir.to_path_buf(),
            sessions: Mutex::new(HashMap::new()),
            fixation_png: png.into_inner(),
        };
        let mut restored = HashMap::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("session.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let (store, meta, events) = SessionStore::open(&dir)?;
            let plan = plan(&meta, &svc.assets)?;
            log::info!("restored session {} at {}/{}", meta.session_id, events.len(), plan.len());
            restored.insert(
                meta.session_id.clone(),
                Arc::new(Mutex::new(Session {
                    meta,
                    store,
                    events,
                    plan,
                    outstanding: None,
                    handles: HashMap::new(),
                })),
            );
        }
        *lock(&svc.sessions) = restored;
        Ok(svc)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = lock(&self.sessions).keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Answers one request. Never panics on bad input; failures become
    /// error replies.
    pub fn handle(&self, req: Request) -> Response {
        let body = if req.v != PROTOCOL_VERSION {
            Err(ServiceError::rejected(
                ErrorCode::UnsupportedVersion,
                format!("protocol version {} not supported (server speaks {PROTOCOL_VERSION})", req.v),
            ))
        } else {
            self.dispatch(req.op)
        };
        Response {
            v: PROTOCOL_VERSION,
            body: body.unwrap_or_else(|e| {
                if e.code() == ErrorCode::Internal {
                    log::error!("{e}");
                }
                Reply::Error(ErrorReply {
                    code: e.code(),
                    message: e.to_string(),
                })
            }),
        }
    }

    fn dispatch(&self, op: Op) -> Result<Reply, ServiceError> {
        Ok(match op {
            Op::Create { observer_id } => Reply::Session(self.create(&observer_id)?),
            Op::Status { session_id } => Reply::Session(self.status(&session_id)?),
            Op::NextTrial { session_id } => Reply::Trial(self.next_trial(&session_id)?),
            Op::Submit {
                session_id,
                trial_id,
                response_label,
                client,
            } => Reply::Feedback(self.submit(&session_id, &trial_id, &response_label, client.unwrap_or_default())?),
            Op::Export { session_id, partial } => Reply::Export(self.export(&session_id, partial)?),
            Op::Asset { session_id, handle } => Reply::Asset(self.asset(&session_id, &handle)?),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::rejected(ErrorCode::UnknownSession, format!("unknown session {id:?}")))
    }

    pub fn create(&self, observer_id: &str) -> Result<SessionInfo, ServiceError> {
        let valid = !observer_id.is_empty()
            && observer_id.len() <= 64
            && observer_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !valid {
            return Err(ServiceError::rejected(
                ErrorCode::BadRequest,
                "observer id must be 1-64 characters of [A-Za-z0-9._-]",
            ));
        }
        let mut sessions = lock(&self.sessions);
        let mut run = 0;
        for s in sessions.values() {
            let s = lock(s);
            if s.meta.observer_id == observer_id {
                run += 1;
                if self.config.exclusive && !s.finished() {
                    return Err(ServiceError::rejected(
                        ErrorCode::ObserverBusy,
                        format!("observer {observer_id:?} has an unfinished session"),
                    ));
                }
            }
        }
        let mut rng = rand::rng();
        let session_id = format!("{:016x}", rng.random::<u64>());
        let meta = SessionMeta {
            session_id: session_id.clone(),
            observer_id: observer_id.to_string(),
            run,
            created_ms: now_ms(),
            shuffle_seed: rng.random(),
            manifest_seed: self.assets.manifest.seed,
            practice_trials: self.config.practice_trials,
            epochs: self.config.epochs,
        };
        let plan = plan(&meta, &self.assets)?;
        let store = SessionStore::create(&self.sessions_dir.join(&session_id), &meta)?;
        let session = Session {
            meta,
            store,
            events: Vec::new(),
            plan,
            outstanding: None,
            handles: HashMap::new(),
        };
        let info = session.info();
        sessions.insert(session_id.clone(), Arc::new(Mutex::new(session)));
        log::info!("created session {session_id} for {observer_id} (run {run})");
        Ok(info)
    }

    pub fn status(&self, session_id: &str) -> Result<SessionInfo, ServiceError> {
        Ok(lock(&*self.session(session_id)?).info())
    }

    pub fn next_trial(&self, session_id: &str) -> Result<TrialDescriptor, ServiceError> {
        let arc = self.session(session_id)?;
        let mut s = lock(&arc);
        if s.finished() {
            return Err(ServiceError::rejected(ErrorCode::Finished, "session is finished"));
        }
        if let Some(o) = &s.outstanding {
            return Err(ServiceError::rejected(
                ErrorCode::TrialOutstanding,
                format!("trial {} is still awaiting a response", o.trial_id),
            ));
        }
        let seq = s.events.len();
        let p = s.plan[seq].clone();
        let (stimulus, options) = match &p.source {
            Source::Practice(k) => (
                self.assets.practice_dir.join(&self.assets.practice.trials[*k].path),
                self.assets.practice.labels.clone(),
            ),
            Source::Image(r) => (self.assets.data_dir.join(r.relative_path()), category_options()),
        };
        let assets = TrialAssets {
            fixation: s.handle(seq, "fixation"),
            stimulus: s.handle(seq, "stimulus"),
            mask: s.handle(seq, "mask"),
        };
        let mask_seed = derive_keyed(s.meta.shuffle_seed, &[MASK_KEY, seq as u64]);
        s.handles.insert(assets.fixation.clone(), AssetSource::Fixation);
        s.handles.insert(assets.stimulus.clone(), AssetSource::File(stimulus));
        s.handles.insert(assets.mask.clone(), AssetSource::Mask(mask_seed));
        let trial_id = format!("{}-{seq:03}", s.meta.session_id);
        s.outstanding = Some(Outstanding {
            seq,
            trial_id: trial_id.clone(),
            served_ms: now_ms(),
        });
        Ok(TrialDescriptor {
            trial_id,
            status: status_of(p.phase),
            cursor: Cursor {
                phase: p.phase,
                epoch: p.epoch,
                trial_index: p.index,
            },
            block_size: p.block,
            assets,
            schedule: Schedule {
                fixation_ms: self.config.fixation_ms,
                stimulus_ms: self.config.stimulus_ms,
                mask_ms: self.config.mask_ms,
            },
            options,
            feedback: p.phase != Phase::Test,
            stimulus_px: self.config.stimulus_px,
        })
    }

    pub fn submit(&self, session_id: &str, trial_id: &str, label: &str, client: ClientReport) -> Result<FeedbackDirective, ServiceError> {
        let arc = self.session(session_id)?;
        let mut s = lock(&arc);
        let (seq, served_ms) = match &s.outstanding {
            None => return Err(ServiceError::rejected(ErrorCode::NoOutstandingTrial, "no trial awaiting a response")),
            Some(o) if o.trial_id != trial_id => {
                return Err(ServiceError::rejected(ErrorCode::UnknownTrial, format!("trial {trial_id:?} is not the outstanding trial")))
            }
            Some(o) => (o.seq, o.served_ms),
        };
        let p = s.plan[seq].clone();
        let record = match &p.source {
            Source::Practice(_) => {
                if !self.assets.practice.labels.iter().any(|l| l == label) {
                    return Err(invalid_label(label));
                }
                None
            }
            Source::Image(r) => {
                let response: Category = label.parse().map_err(|_| invalid_label(label))?;
                if response.name() != label {
                    return Err(invalid_label(label));
                }
                Some(TrialRecord {
                    observer_id: s.meta.observer_id.clone(),
                    run: s.meta.run,
                    phase: p.phase,
                    epoch: p.epoch,
                    trial_index: p.index,
                    image_id: r.image_id(),
                    true_label: r.category,
                    response_label: response,
                    scores: None,
                    correct: response == r.category,
                    timestamp_ms: Some(now_ms()),
                    response_time_ms: client.response_time_ms,
                    audit: Some(json!({
                        "served_ms": served_ms,
                        "client_responded_at_ms": client.responded_at_ms,
                        "client": client.audit,
                    })),
                })
            }
        };
        let correct = label == p.answer;
        let event = AnsweredEvent {
            seq: seq as u64,
            trial_id: trial_id.to_string(),
            response_label: label.to_string(),
            correct,
            record,
        };
        s.store.append(&event)?;
        s.events.push(event);
        s.outstanding = None;
        s.handles.clear();

        let highlight = |colour| HighlightStep {
            colour,
            option: label.to_string(),
            duration_ms: self.config.feedback_ms,
        };
        let directive = match (p.phase, correct) {
            (Phase::Test, _) => Directive::None,
            (_, true) => Directive::Correct {
                highlight: highlight(Highlight::Green),
            },
            (_, false) => Directive::Incorrect {
                highlight: highlight(Highlight::Red),
                correction: CorrectionStep {
                    correct_option: p.answer.clone(),
                    duration_ms: self.config.correction_ms,
                },
            },
        };
        Ok(FeedbackDirective {
            trial_id: trial_id.to_string(),
            directive,
            session: s.info(),
        })
    }

    /// Writes the session's log (practice excluded) and returns it.
    pub fn export(&self, session_id: &str, partial: bool) -> Result<ExportReply, ServiceError> {
        let arc = self.session(session_id)?;
        let s = lock(&arc);
        let finished = s.finished();
        if !finished && !partial {
            return Err(ServiceError::rejected(
                ErrorCode::NotFinished,
                "session is not finished; request a partial export",
            ));
        }
        let log = SessionLog {
            observer_id: s.meta.observer_id.clone(),
            run: s.meta.run,
            records: s.events.iter().filter_map(|e| e.record.clone()).collect(),
        };
        let shape = ProtocolShape {
            epochs: s.meta.epochs,
            train_per_epoch: self.assets.manifest.training_set.len() as u32,
            test_per_epoch: self.assets.manifest.test_sets.first().map_or(0, |t| t.len()) as u32,
        };
        if !log.records.is_empty() {
            log.validate(&shape, !finished)?;
        }
        let name = if finished { "log.jsonl" } else { "log_partial.jsonl" };
        let path = s.store.dir().join(name);
        log.write_jsonl(&path)?;
        Ok(ExportReply {
            session_id: session_id.to_string(),
            partial: !finished,
            path: path.display().to_string(),
            records: log.records,
        })
    }

    /// PNG bytes behind a handle of the outstanding trial.
    pub fn asset(&self, session_id: &str, handle: &str) -> Result<AssetReply, ServiceError> {
        let arc = self.session(session_id)?;
        let source = lock(&arc)
            .handles
            .get(handle)
            .cloned()
            .ok_or_else(|| ServiceError::rejected(ErrorCode::UnknownAsset, format!("unknown asset {handle:?}")))?;
        let bytes = match source {
            AssetSource::File(p) => std::fs::read(p)?,
            AssetSource::Fixation => self.fixation_png.clone(),
            AssetSource::Mask(seed) => {
                let mut png = IoCursor::new(Vec::new());
                pink_noise_mask(seed, self.config.stimulus_px, self.config.stimulus_px).write_to(&mut png, ImageFormat::Png)?;
                png.into_inner()
            }
        };
        Ok(AssetReply {
            handle: handle.to_string(),
            mime: "image/png".into(),
            data_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        })
    }
}

fn invalid_label(label: &str) -> ServiceError {
    ServiceError::rejected(ErrorCode::InvalidLabel, format!("{label:?} is not one of the response options"))
}
