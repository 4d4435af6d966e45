use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::binomial::clopper_pearson;
use super::AnalysisError;
use crate::dataset::{DatasetManifest, TestKind};
use crate::trial::{Phase, ProtocolShape, SessionLog};

/// Accuracy at epoch 0, before any training: chance for three classes.
pub const CHANCE: f64 = 1.0 / 3.0;

/// Trailing-window mean of a 0/1 series. Entry `j` averages positions
/// `j ..= j + window - 1`, so the output has `len - window + 1` values.
pub fn moving_average(flags: &[bool], window: usize) -> Result<Vec<f64>, AnalysisError> {
    if window == 0 || window > flags.len() {
        return Err(AnalysisError::Window {
            window,
            len: flags.len(),
        });
    }
    let mut out = Vec::with_capacity(flags.len() - window + 1);
    let mut hits = flags[..window].iter().filter(|&&f| f).count();
    out.push(hits as f64 / window as f64);
    for i in window..flags.len() {
        hits = hits + flags[i] as usize - flags[i - window] as usize;
        out.push(hits as f64 / window as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurves {
    pub observer_id: String,
    /// Index `i` holds epoch `i + 1`.
    pub acc_train: Vec<f64>,
    pub acc_test: Vec<f64>,
    pub n_train: u32,
    pub n_test: u32,
    /// 1-based epoch of peak test accuracy, earliest on ties.
    pub best_epoch: usize,
    /// The same accuracies as exact ratios, when built from counts.
    #[serde(skip)]
    pub exact: Option<ExactAccuracies>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactAccuracies {
    pub train: Vec<Ratio<i64>>,
    pub test: Vec<Ratio<i64>>,
}

impl LearningCurves {
    /// Curves given directly as accuracies (e.g. read from a table).
    pub fn from_accuracies(observer_id: &str, acc_train: Vec<f64>, acc_test: Vec<f64>, n_train: u32, n_test: u32) -> Result<Self, AnalysisError> {
        if acc_train.is_empty() || acc_train.len() != acc_test.len() {
            return Err(AnalysisError::Curves(format!(
                "{} train vs {} test epochs",
                acc_train.len(),
                acc_test.len()
            )));
        }
        if !acc_train.iter().chain(&acc_test).all(|a| (0.0..=1.0).contains(a)) {
            return Err(AnalysisError::Curves("accuracy outside [0, 1]".into()));
        }
        let best_epoch = argmax_earliest(&acc_test) + 1;
        Ok(LearningCurves {
            observer_id: observer_id.to_string(),
            acc_train,
            acc_test,
            n_train,
            n_test,
            best_epoch,
            exact: None,
        })
    }

    fn from_exact(observer_id: &str, exact: ExactAccuracies, n_train: u32, n_test: u32) -> Self {
        let to_f = |r: &Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
        let acc_train: Vec<f64> = exact.train.iter().map(to_f).collect();
        let acc_test: Vec<f64> = exact.test.iter().map(to_f).collect();
        // argmax on exact values so ties are real ties
        let mut best = 0;
        for (i, v) in exact.test.iter().enumerate() {
            if *v > exact.test[best] {
                best = i;
            }
        }
        LearningCurves {
            observer_id: observer_id.to_string(),
            acc_train,
            acc_test,
            n_train,
            n_test,
            best_epoch: best + 1,
            exact: Some(exact),
        }
    }

    pub fn epochs(&self) -> usize {
        self.acc_test.len()
    }

    /// Peak test accuracy (the early-stopping measure).
    pub fn best_test(&self) -> f64 {
        self.acc_test[self.best_epoch - 1]
    }
}

fn argmax_earliest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-epoch training accuracy over the epoch's training records and test
/// accuracy over its test records. Order within an epoch is irrelevant.
pub fn epoch_curves(log: &SessionLog, shape: &ProtocolShape) -> Result<LearningCurves, AnalysisError> {
    let e = shape.epochs as usize;
    let mut train = vec![(0i64, 0i64); e];
    let mut test = vec![(0i64, 0i64); e];
    for r in &log.records {
        let idx = (r.epoch as usize).checked_sub(1).filter(|&i| i < e).ok_or_else(|| {
            AnalysisError::Curves(format!("epoch {} outside 1..={e}", r.epoch))
        })?;
        let slot = match r.phase {
            Phase::Train => &mut train[idx],
            Phase::Test => &mut test[idx],
            Phase::Practice => continue,
        };
        slot.0 += r.correct as i64;
        slot.1 += 1;
    }
    for i in 0..e {
        for (phase, got, want) in [
            (Phase::Train, train[i].1, shape.train_per_epoch),
            (Phase::Test, test[i].1, shape.test_per_epoch),
        ] {
            if got != want as i64 {
                return Err(AnalysisError::IncompleteEpoch {
                    epoch: i as u32 + 1,
                    phase,
                    have: got as usize,
                    want: want as usize,
                });
            }
        }
    }
    let exact = ExactAccuracies {
        train: train.iter().map(|&(c, n)| Ratio::new(c, n)).collect(),
        test: test.iter().map(|&(c, n)| Ratio::new(c, n)).collect(),
    };
    Ok(LearningCurves::from_exact(&log.observer_id, exact, shape.train_per_epoch, shape.test_per_epoch))
}

/// Mean of per-observer (or per-run) accuracies, epoch by epoch.
pub fn aggregate(observer_id: &str, members: &[LearningCurves]) -> Result<LearningCurves, AnalysisError> {
    let first = members.first().ok_or_else(|| AnalysisError::Curves("nothing to aggregate".into()))?;
    let e = first.epochs();
    if members.iter().any(|m| m.epochs() != e) {
        return Err(AnalysisError::Curves("members differ in epoch count".into()));
    }
    let (n_train, n_test) = (first.n_train, first.n_test);
    if members.iter().all(|m| m.exact.is_some()) {
        let k = members.len() as i64;
        let mean = |pick: &dyn Fn(&ExactAccuracies) -> &Vec<Ratio<i64>>| -> Vec<Ratio<i64>> {
            (0..e)
                .map(|i| {
                    members
                        .iter()
                        .map(|m| pick(m.exact.as_ref().expect("checked"))[i])
                        .fold(Ratio::from_integer(0), |a, b| a + b)
                        / k
                })
                .collect()
        };
        let exact = ExactAccuracies {
            train: mean(&|x| &x.train),
            test: mean(&|x| &x.test),
        };
        return Ok(LearningCurves::from_exact(observer_id, exact, n_train, n_test));
    }
    let k = members.len() as f64;
    let acc_train = (0..e).map(|i| members.iter().map(|m| m.acc_train[i]).sum::<f64>() / k).collect();
    let acc_test = (0..e).map(|i| members.iter().map(|m| m.acc_test[i]).sum::<f64>() / k).collect();
    LearningCurves::from_accuracies(observer_id, acc_train, acc_test, n_train, n_test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencySeries {
    pub observer_id: String,
    /// Index `i` holds epoch `i + 1`.
    pub gains: Vec<f64>,
    /// Exact gains when the curves carry exact accuracies.
    pub exact: Option<Vec<Ratio<i64>>>,
    pub n_training_images: u32,
}

/// Test accuracy gained per training image at each epoch, starting from
/// chance: `(acc_test[i] - acc_test[i-1]) / n_train`, `acc_test[0] = 1/3`.
pub fn data_efficiency(curves: &LearningCurves) -> EfficiencySeries {
    let n = curves.n_train as f64;
    let gains = (0..curves.epochs())
        .map(|i| {
            let prev = if i == 0 { CHANCE } else { curves.acc_test[i - 1] };
            (curves.acc_test[i] - prev) / n
        })
        .collect();
    let exact = curves.exact.as_ref().map(|x| {
        let n = curves.n_train as i64;
        (0..x.test.len())
            .map(|i| {
                let prev = if i == 0 { Ratio::new(1, 3) } else { x.test[i - 1] };
                (x.test[i] - prev) / n
            })
            .collect()
    });
    EfficiencySeries {
        observer_id: curves.observer_id.clone(),
        gains,
        exact,
        n_training_images: curves.n_train,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralisationLag {
    pub delta_g: f64,
    /// Inclusive, 1-based epoch interval E.
    pub first_epoch: usize,
    pub last_epoch: usize,
}

impl GeneralisationLag {
    pub fn epochs_label(&self) -> String {
        format!("{}-{}", self.first_epoch, self.last_epoch)
    }
}

/// Mean train-minus-test accuracy over the epoch interval E.
///
/// E opens at the first epoch whose training accuracy exceeds the upper
/// exact-interval bound around chance for `n_train` trials, and closes at
/// the epoch of peak test accuracy (earliest on ties), after which test
/// accuracy no longer improves. An empty E is not computable.
pub fn generalisation_lag(curves: &LearningCurves) -> Result<GeneralisationLag, AnalysisError> {
    let n = curves.n_train as u64;
    let k = super::binomial::count_from_accuracy(CHANCE, n);
    let (_, upper) = clopper_pearson(k, n, 0.05)?;
    let onset = curves
        .acc_train
        .iter()
        .position(|&a| a > upper)
        .ok_or_else(|| AnalysisError::NotComputable("training accuracy never exceeds chance".into()))?
        + 1;
    let end = curves.best_epoch;
    if end < onset {
        return Err(AnalysisError::NotComputable(format!(
            "test accuracy peaks at epoch {end}, before training leaves chance at epoch {onset}"
        )));
    }
    let sum: f64 = (onset..=end)
        .map(|e| curves.acc_train[e - 1] - curves.acc_test[e - 1])
        .sum();
    Ok(GeneralisationLag {
        delta_g: sum / (end - onset + 1) as f64,
        first_epoch: onset,
        last_epoch: end,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAccuracy {
    pub observer_id: String,
    pub novel_perspective: Vec<f64>,
    pub novel_object: Vec<f64>,
}

/// Test accuracy per epoch, separately for the novel-perspective and the
/// novel-object images of each test set.
pub fn split_test_accuracy(log: &SessionLog, manifest: &DatasetManifest) -> Result<SplitAccuracy, AnalysisError> {
    let epochs = manifest.test_sets.len();
    let kinds: Vec<_> = (0..epochs).map(|t| manifest.test_kinds(t)).collect();
    let mut persp = vec![(0u32, 0u32); epochs];
    let mut object = vec![(0u32, 0u32); epochs];
    for r in log.test_records() {
        let t = r.epoch as usize - 1;
        let kind = kinds
            .get(t)
            .and_then(|k| k.get(&r.image_id))
            .ok_or_else(|| AnalysisError::Untagged(r.image_id.clone()))?;
        let slot = match kind {
            TestKind::NovelPerspective => &mut persp[t],
            TestKind::NovelObject => &mut object[t],
        };
        slot.0 += r.correct as u32;
        slot.1 += 1;
    }
    let ratio = |(c, n): (u32, u32)| if n == 0 { f64::NAN } else { c as f64 / n as f64 };
    Ok(SplitAccuracy {
        observer_id: log.observer_id.clone(),
        novel_perspective: persp.into_iter().map(ratio).collect(),
        novel_object: object.into_iter().map(ratio).collect(),
    })
}
