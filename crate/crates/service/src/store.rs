//! Per-session persistence: `session.json` written once at creation and an
//! append-only `events.jsonl`, one answered trial per line, synced to disk
//! before the answer is acknowledged.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use learndyn_core::trial::TrialRecord;

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub observer_id: String,
    /// Index of this session among the observer's sessions.
    pub run: u32,
    pub created_ms: u64,
    /// Seed of the per-block trial shuffles and masks.
    pub shuffle_seed: u64,
    pub manifest_seed: u64,
    pub practice_trials: u32,
    pub epochs: u32,
}

/// One answered trial. Practice answers carry no record; they advance the
/// cursor but are never exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsweredEvent {
    pub seq: u64,
    pub trial_id: String,
    pub response_label: String,
    pub correct: bool,
    pub record: Option<TrialRecord>,
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    events: File,
}

impl SessionStore {
    pub fn create(dir: &Path, meta: &SessionMeta) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir)?;
        let tmp = dir.join("session.json.tmp");
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, meta)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join("session.json"))?;
        let events = OpenOptions::new().create(true).append(true).open(dir.join("events.jsonl"))?;
        sync_dir(dir);
        Ok(SessionStore {
            dir: dir.to_path_buf(),
            events,
        })
    }

    /// Reopens a session. A torn final line (a crash mid-append, never
    /// acknowledged) is cut off.
    pub fn open(dir: &Path) -> Result<(Self, SessionMeta, Vec<AnsweredEvent>), ServiceError> {
        let meta: SessionMeta = serde_json::from_reader(File::open(dir.join("session.json"))?)?;
        let path = dir.join("events.jsonl");
        let mut events = Vec::new();
        let mut good_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path)?);
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                if !line.ends_with('\n') {
                    log::warn!("{}: dropping torn final event", path.display());
                    break;
                }
                match serde_json::from_str::<AnsweredEvent>(line.trim_end()) {
                    Ok(e) => events.push(e),
                    Err(e) => {
                        log::warn!("{}: dropping unreadable event: {e}", path.display());
                        break;
                    }
                }
                good_len += n as u64;
            }
        }
        let mut file = OpenOptions::new().create(true).truncate(false).read(true).write(true).open(&path)?;
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((
            SessionStore {
                dir: dir.to_path_buf(),
                events: file,
            },
            meta,
            events,
        ))
    }

    /// Appends and syncs one event.
    pub fn append(&mut self, event: &AnsweredEvent) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.events.write_all(&line)?;
        self.events.sync_data()?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}
