use serde::{Deserialize, Serialize};

use super::binomial::{clopper_pearson, count_from_accuracy};
use super::curves::moving_average;
use super::AnalysisError;
use crate::trial::SessionLog;

pub const INCLUSION_WINDOW: usize = 12;

/// Whether an observer started without prior knowledge and then learned,
/// with the evidence both flags are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub observer_id: String,
    pub run: u32,
    pub window: usize,
    pub started_at_chance: bool,
    pub learned: bool,
    pub first_window: f64,
    pub last_window: f64,
    /// Upper bound of the exact interval around chance, k = window / 3.
    pub chance_upper: f64,
    pub mean_accuracy: f64,
    /// Exact interval for k = round(mean_accuracy * window) of `window`.
    pub mean_lower: f64,
    pub mean_upper: f64,
}

impl InclusionReport {
    pub fn included(&self) -> bool {
        self.started_at_chance && self.learned
    }

    /// Recomputes both flags from the stored evidence.
    pub fn flags_from_evidence(&self) -> (bool, bool) {
        (
            self.first_window <= self.chance_upper,
            self.first_window < self.mean_lower && self.last_window > self.mean_upper,
        )
    }
}

/// Applies the two inclusion rules to the training trials of a log, with
/// a trailing moving average of `INCLUSION_WINDOW` trials:
///
/// * started at chance: the first window does not exceed the upper exact
///   bound around chance (k = 4 of 12);
/// * learned: the first window lies below, and the last window above, the
///   exact interval around the observer's own mean training accuracy.
pub fn inclusion_filter(log: &SessionLog) -> Result<InclusionReport, AnalysisError> {
    inclusion_filter_with(log, INCLUSION_WINDOW)
}

pub fn inclusion_filter_with(log: &SessionLog, window: usize) -> Result<InclusionReport, AnalysisError> {
    let flags: Vec<bool> = log.train_records().map(|r| r.correct).collect();
    let ma = moving_average(&flags, window)?;
    let w = window as u64;
    let (_, chance_upper) = clopper_pearson(count_from_accuracy(1.0 / 3.0, w), w, 0.05)?;
    let mean_accuracy = flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64;
    let (mean_lower, mean_upper) = clopper_pearson(count_from_accuracy(mean_accuracy, w), w, 0.05)?;
    let first_window = ma[0];
    let last_window = *ma.last().expect("non-empty");
    let mut report = InclusionReport {
        observer_id: log.observer_id.clone(),
        run: log.run,
        window,
        started_at_chance: false,
        learned: false,
        first_window,
        last_window,
        chance_upper,
        mean_accuracy,
        mean_lower,
        mean_upper,
    };
    (report.started_at_chance, report.learned) = report.flags_from_evidence();
    Ok(report)
}
