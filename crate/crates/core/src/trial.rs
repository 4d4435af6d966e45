//! Per-trial log schema shared by the built-in learner, live human sessions
//! and externally produced model logs.
//!
//! A log is JSON Lines, one [`TrialRecord`] per line, in protocol order:
//! for each epoch, the 36 training trials and then the 51 trials of that
//! epoch's test set.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embryo::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Practice,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub observer_id: String,
    pub run: u32,
    pub phase: Phase,
    /// 1-based.
    pub epoch: u32,
    /// 1-based position within the epoch's training or test block.
    pub trial_index: u32,
    pub image_id: String,
    pub true_label: Category,
    pub response_label: Category,
    /// Per-class scores in category order; null for human observers.
    pub scores: Option<[f64; 3]>,
    pub correct: bool,
    /// Wall-clock time of the response, milliseconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time_ms: Option<u64>,
    /// Client-reported presentation timings and flags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<serde_json::Value>,
}

/// Trials per block and number of epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolShape {
    pub epochs: u32,
    pub train_per_epoch: u32,
    pub test_per_epoch: u32,
}

impl ProtocolShape {
    pub const CANONICAL: ProtocolShape = ProtocolShape {
        epochs: 6,
        train_per_epoch: 36,
        test_per_epoch: 51,
    };

    pub fn total(&self) -> usize {
        (self.epochs * (self.train_per_epoch + self.test_per_epoch)) as usize
    }

    /// (phase, epoch, trial_index) of the record at `position`.
    pub fn slot(&self, position: usize) -> Option<(Phase, u32, u32)> {
        if position >= self.total() {
            return None;
        }
        let per_epoch = (self.train_per_epoch + self.test_per_epoch) as usize;
        let epoch = (position / per_epoch) as u32 + 1;
        let within = (position % per_epoch) as u32;
        Some(if within < self.train_per_epoch {
            (Phase::Train, epoch, within + 1)
        } else {
            (Phase::Test, epoch, within - self.train_per_epoch + 1)
        })
    }
}

impl Default for ProtocolShape {
    fn default() -> Self {
        Self::CANONICAL
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: truncated record")]
    Truncated { line: usize },
    #[error("line {line}: protocol order: {message}")]
    Order { line: usize, message: String },
    #[error("log has {have} records, a complete log has {want}")]
    Incomplete { have: usize, want: usize },
    #[error("log is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub observer_id: String,
    pub run: u32,
    pub records: Vec<TrialRecord>,
}

impl SessionLog {
    pub fn train_records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.phase == Phase::Train)
    }

    pub fn test_records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.phase == Phase::Test)
    }

    /// Checks protocol order. With `partial`, any prefix of the protocol is
    /// accepted; otherwise the log must be complete.
    pub fn validate(&self, shape: &ProtocolShape, partial: bool) -> Result<(), LogError> {
        validate_records(&self.records, shape, partial, |i| i + 1)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), LogError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_records(
    records: &[TrialRecord],
    shape: &ProtocolShape,
    partial: bool,
    line_of: impl Fn(usize) -> usize,
) -> Result<(), LogError> {
    let Some(first) = records.first() else {
        return Err(LogError::Empty);
    };
    for (i, r) in records.iter().enumerate() {
        let line = line_of(i);
        let order = |message: String| Err(LogError::Order { line, message });
        if r.observer_id != first.observer_id || r.run != first.run {
            return order(format!(
                "observer/run changes from {}/{} to {}/{}",
                first.observer_id, first.run, r.observer_id, r.run
            ));
        }
        let Some((phase, epoch, index)) = shape.slot(i) else {
            return order(format!("more than {} records", shape.total()));
        };
        if r.phase == Phase::Practice {
            return order("practice trials do not belong in analysis logs".into());
        }
        if (r.phase, r.epoch, r.trial_index) != (phase, epoch, index) {
            return order(format!(
                "expected {phase:?} epoch {epoch} trial {index}, found {:?} epoch {} trial {}",
                r.phase, r.epoch, r.trial_index
            ));
        }
        if r.correct != (r.true_label == r.response_label) {
            return Err(LogError::Parse {
                line,
                message: "`correct` disagrees with the labels".into(),
            });
        }
        if let Some(s) = r.scores {
            if !s.iter().all(|v| v.is_finite()) {
                return Err(LogError::Parse {
                    line,
                    message: "non-finite score".into(),
                });
            }
        }
    }
    if !partial && records.len() != shape.total() {
        return Err(LogError::Incomplete {
            have: records.len(),
            want: shape.total(),
        });
    }
    Ok(())
}

/// Result of reading an external log.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub log: SessionLog,
    /// Image ids not found in the supplied id set (kept, not rejected).
    pub unknown_images: Vec<String>,
}

/// Reads and validates a complete single-run log. Schema and order
/// violations are reported with 1-based line numbers.
pub fn ingest_external_log(path: &Path, known_images: Option<&HashSet<String>>) -> Result<Ingested, LogError> {
    let mut logs = ingest_log_file(path, known_images, &ProtocolShape::CANONICAL, false)?;
    if logs.len() != 1 {
        return Err(LogError::Order {
            line: 0,
            message: format!("file holds {} runs, expected one", logs.len()),
        });
    }
    Ok(logs.remove(0))
}

/// Reads a log file holding one or more runs back to back (split where
/// observer or run changes). Each run is validated on its own.
pub fn ingest_log_file(
    path: &Path,
    known_images: Option<&HashSet<String>>,
    shape: &ProtocolShape,
    partial: bool,
) -> Result<Vec<Ingested>, LogError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut records: Vec<(usize, TrialRecord)> = Vec::new();
    let mut buf = String::new();
    let mut line = 0usize;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<TrialRecord>(text) {
            Ok(r) => records.push((line, r)),
            Err(e) if !complete || e.is_eof() => return Err(LogError::Truncated { line }),
            Err(e) => {
                return Err(LogError::Parse {
                    line,
                    message: e.to_string(),
                })
            }
        }
    }
    if records.is_empty() {
        return Err(LogError::Empty);
    }

    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let (obs, run) = (&records[start].1.observer_id, records[start].1.run);
        let end = records[start..]
            .iter()
            .position(|(_, r)| &r.observer_id != obs || r.run != run)
            .map_or(records.len(), |k| start + k);
        let chunk = &records[start..end];
        let recs: Vec<TrialRecord> = chunk.iter().map(|(_, r)| r.clone()).collect();
        validate_records(&recs, shape, partial, |i| chunk[i].0)?;
        let mut unknown_images = Vec::new();
        if let Some(known) = known_images {
            for (l, r) in chunk {
                if !known.contains(&r.image_id) {
                    log::warn!("{}:{l}: unknown image id {}", path.display(), r.image_id);
                    unknown_images.push(r.image_id.clone());
                }
            }
        }
        out.push(Ingested {
            log: SessionLog {
                observer_id: obs.clone(),
                run,
                records: recs,
            },
            unknown_images,
        });
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn record(phase: Phase, epoch: u32, trial_index: u32, correct: bool) -> TrialRecord {
        TrialRecord {
            observer_id: "obs".into(),
            run: 0,
            phase,
            epoch,
            trial_index,
            image_id: format!("img_{phase:?}_{epoch}_{trial_index}"),
            true_label: Category::Lauz,
            response_label: if correct { Category::Lauz } else { Category::Puns },
            scores: None,
            correct,
            timestamp_ms: None,
            response_time_ms: None,
            audit: None,
        }
    }

    pub(crate) fn complete_log(shape: &ProtocolShape) -> SessionLog {
        let records = (0..shape.total())
            .map(|i| {
                let (p, e, t) = shape.slot(i).unwrap();
                record(p, e, t, true)
            })
            .collect();
        SessionLog {
            observer_id: "obs".into(),
            run: 0,
            records,
        }
    }

    #[test]
    fn slots_follow_protocol() {
        let s = ProtocolShape::CANONICAL;
        assert_eq!(s.total(), 522);
        assert_eq!(s.slot(0), Some((Phase::Train, 1, 1)));
        assert_eq!(s.slot(35), Some((Phase::Train, 1, 36)));
        assert_eq!(s.slot(36), Some((Phase::Test, 1, 1)));
        assert_eq!(s.slot(86), Some((Phase::Test, 1, 51)));
        assert_eq!(s.slot(87), Some((Phase::Train, 2, 1)));
        assert_eq!(s.slot(522), None);
    }

    #[test]
    fn complete_and_partial_validation() {
        let shape = ProtocolShape::CANONICAL;
        let mut log = complete_log(&shape);
        log.validate(&shape, false).unwrap();
        log.records.truncate(100);
        assert!(matches!(log.validate(&shape, false), Err(LogError::Incomplete { have: 100, .. })));
        log.validate(&shape, true).unwrap();
    }

    #[test]
    fn test_record_inside_training_block_reports_line() {
        let shape = ProtocolShape::CANONICAL;
        let mut log = complete_log(&shape);
        log.records[5].phase = Phase::Test;
        match log.validate(&shape, false) {
            Err(LogError::Order { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn correctness_must_match_labels() {
        let shape = ProtocolShape::CANONICAL;
        let mut log = complete_log(&shape);
        log.records[3].correct = false;
        assert!(matches!(log.validate(&shape, false), Err(LogError::Parse { line: 4, .. })));
    }

    #[test]
    fn file_round_trip_and_truncation() {
        let shape = ProtocolShape::CANONICAL;
        let log = complete_log(&shape);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        log.write_jsonl(&path).unwrap();
        let back = ingest_external_log(&path, None).unwrap();
        assert_eq!(back.log, log);

        let text = std::fs::read_to_string(&path).unwrap();
        let cut = &text[..text.len() - 20];
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(ingest_external_log(&path, None), Err(LogError::Truncated { line: 522 })));
    }

    #[test]
    fn unknown_images_warn_but_keep() {
        let shape = ProtocolShape::CANONICAL;
        let log = complete_log(&shape);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        log.write_jsonl(&path).unwrap();
        let known: HashSet<String> = log.records[..10].iter().map(|r| r.image_id.clone()).collect();
        let got = ingest_external_log(&path, Some(&known)).unwrap();
        assert_eq!(got.log.records.len(), 522);
        assert_eq!(got.unknown_images.len(), 512);
    }

    #[test]
    fn multi_run_file_splits() {
        let shape = ProtocolShape::CANONICAL;
        let a = complete_log(&shape);
        let mut b = complete_log(&shape);
        b.run = 1;
        b.records.iter_mut().for_each(|r| r.run = 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        for r in a.records.iter().chain(&b.records) {
            writeln!(f, "{}", serde_json::to_string(r).unwrap()).unwrap();
        }
        drop(f);
        let logs = ingest_log_file(&path, None, &shape, false).unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(logs[1].log.run, 1);
        assert!(ingest_external_log(&path, None).is_err());
    }
}
