//! Brute-force references for the binomial and learning-curve metrics.

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;

use learndyn_core::dataset::DatasetManifest;
use learndyn_core::trial::{Phase, SessionLog};

/// P(X <= k), X ~ Bin(n, p), by direct summation of the pmf.
pub fn cdf(k: i64, n: u64, p: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut log_choose = 0.0f64;
    for i in 0..=k as u64 {
        if i > 0 {
            log_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        let lp = if p == 0.0 {
            if i == 0 { 0.0 } else { f64::NEG_INFINITY }
        } else {
            i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()
        };
        sum += (log_choose + lp).exp();
    }
    sum
}

pub fn bisect(f: impl Fn(f64) -> bool) -> f64 {
    // f is true on [0, x*) and false on (x*, 1].
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    let lower = if k == 0 { 0.0 } else { bisect(|p| 1.0 - cdf(k as i64 - 1, n, p) < alpha / 2.0) };
    let upper = if k == n { 1.0 } else { bisect(|p| cdf(k as i64, n, p) > alpha / 2.0) };
    (lower, upper)
}

/// Upper exact bound at alpha = 0.05.
pub fn cp_upper(k: u64, n: u64) -> f64 {
    clopper_pearson(k, n, 0.05).1
}

pub struct Recount {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    pub test_exact: Vec<Ratio<i64>>,
    pub persp: Vec<f64>,
    pub object: Vec<f64>,
}

pub fn recount(log: &SessionLog, manifest: &DatasetManifest, epochs: usize) -> Recount {
    let mut tally: HashMap<(bool, u32), (i64, i64)> = HashMap::new();
    let train_objects: HashSet<&str> = manifest.training_set.iter().map(|r| r.object_id.as_str()).collect();
    let object_of: HashMap<String, String> = manifest.pool.iter().map(|r| (r.image_id(), r.object_id.clone())).collect();
    let mut split: HashMap<(bool, u32), (u32, u32)> = HashMap::new();
    for r in &log.records {
        let e = tally.entry((r.phase == Phase::Train, r.epoch)).or_default();
        e.0 += (r.response_label == r.true_label) as i64;
        e.1 += 1;
        if r.phase == Phase::Test {
            let seen = train_objects.contains(object_of[&r.image_id].as_str());
            let s = split.entry((seen, r.epoch)).or_default();
            s.0 += (r.response_label == r.true_label) as u32;
            s.1 += 1;
        }
    }
    let acc = |train: bool, e: u32| {
        let (c, n) = tally[&(train, e)];
        c as f64 / n as f64
    };
    let frac = |seen: bool, e: u32| {
        let (c, n) = split[&(seen, e)];
        c as f64 / n as f64
    };
    let es = 1..=epochs as u32;
    Recount {
        train: es.clone().map(|e| acc(true, e)).collect(),
        test: es.clone().map(|e| acc(false, e)).collect(),
        test_exact: es.clone().map(|e| Ratio::new(tally[&(false, e)].0, tally[&(false, e)].1)).collect(),
        persp: es.clone().map(|e| frac(true, e)).collect(),
        object: es.map(|e| frac(false, e)).collect(),
    }
}

/// ΔG by its definition, or None when E is empty.
pub fn lag_oracle(train: &[f64], test: &[f64], n_train: u64) -> Option<(f64, usize, usize)> {
    let upper = cp_upper((n_train as f64 / 3.0).round() as u64, n_train);
    let onset = train.iter().position(|&a| a > upper)? + 1;
    let mut best = 0;
    for i in 1..test.len() {
        if test[i] > test[best] {
            best = i;
        }
    }
    let end = best + 1;
    if end < onset {
        return None;
    }
    let diffs: Vec<f64> = (onset..=end).map(|e| train[e - 1] - test[e - 1]).collect();
    Some((diffs.iter().sum::<f64>() / diffs.len() as f64, onset, end))
}
