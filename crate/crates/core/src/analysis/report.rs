use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binomial::{clopper_pearson, count_from_accuracy};
use super::curves::{
    aggregate, data_efficiency, epoch_curves, generalisation_lag, moving_average, split_test_accuracy, EfficiencySeries,
    GeneralisationLag, LearningCurves, SplitAccuracy, CHANCE,
};
use super::inclusion::{inclusion_filter, InclusionReport};
use super::AnalysisError;
use crate::dataset::DatasetManifest;
use crate::trial::{ProtocolShape, SessionLog};

/// Moving-average windows for training trajectories.
pub const TRAIN_WINDOWS: [usize; 4] = [6, 12, 24, 36];
/// Moving-average windows for test trajectories.
pub const TEST_WINDOWS: [usize; 3] = [12, 24, 51];

/// Everything reported for one observer (a model over its runs, or a
/// group of human participants).
#[derive(Debug, Clone)]
pub struct ObserverSummary {
    pub observer_id: String,
    /// Aggregate over the members that passed inclusion.
    pub curves: LearningCurves,
    pub lag: Result<GeneralisationLag, String>,
    pub efficiency: EfficiencySeries,
    pub split: Option<SplitAccuracy>,
    /// Per-member inclusion, when the rules were applied.
    pub inclusion: Vec<InclusionReport>,
    pub members: Vec<LearningCurves>,
}

/// Aggregates the logs of one observer. With `apply_inclusion`, members
/// failing either inclusion rule are reported but left out of the
/// aggregate (the rule used for human participants).
pub fn summarize(
    observer_id: &str,
    logs: &[SessionLog],
    manifest: Option<&DatasetManifest>,
    shape: &ProtocolShape,
    apply_inclusion: bool,
) -> Result<ObserverSummary, AnalysisError> {
    let mut inclusion = Vec::new();
    let mut members = Vec::new();
    let mut kept_logs = Vec::new();
    for log in logs {
        let curves = epoch_curves(log, shape)?;
        if apply_inclusion {
            let rep = inclusion_filter(log)?;
            let keep = rep.included();
            inclusion.push(rep);
            if !keep {
                continue;
            }
        }
        members.push(curves);
        kept_logs.push(log);
    }
    if members.is_empty() {
        return Err(AnalysisError::Curves(format!("{observer_id}: no member passed inclusion")));
    }
    let curves = aggregate(observer_id, &members)?;
    let lag = generalisation_lag(&curves).map_err(|e| e.to_string());
    let efficiency = data_efficiency(&curves);
    let split = match manifest {
        Some(m) => {
            let parts = kept_logs
                .iter()
                .map(|l| split_test_accuracy(l, m))
                .collect::<Result<Vec<_>, _>>()?;
            let k = parts.len() as f64;
            let e = m.test_sets.len();
            Some(SplitAccuracy {
                observer_id: observer_id.to_string(),
                novel_perspective: (0..e).map(|i| parts.iter().map(|p| p.novel_perspective[i]).sum::<f64>() / k).collect(),
                novel_object: (0..e).map(|i| parts.iter().map(|p| p.novel_object[i]).sum::<f64>() / k).collect(),
            })
        }
        None => None,
    };
    Ok(ObserverSummary {
        observer_id: observer_id.to_string(),
        curves,
        lag,
        efficiency,
        split,
        inclusion,
        members,
    })
}

/// Optional per-model metadata joined onto the lag table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub name: String,
    pub top1_accuracy: Option<f64>,
    pub parameters: Option<f64>,
}

pub fn read_metadata(path: &Path) -> Result<Vec<ModelMetadata>, AnalysisError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ModelMetadata>, _>>()?)
}

fn lag_cells(s: &ObserverSummary) -> (String, String) {
    match &s.lag {
        Ok(g) => (format!("{:.3}", g.delta_g), g.epochs_label()),
        Err(_) => ("n/a".into(), "n/a".into()),
    }
}

/// Writes the CSV tables and SVG plots for a set of observers into `dir`.
pub fn write_report(dir: &Path, summaries: &[ObserverSummary], metadata: Option<&[ModelMetadata]>) -> Result<(), AnalysisError> {
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["observer", "epoch", "acc_train", "acc_test", "n_train", "n_test", "best_epoch"])?;
    for s in summaries {
        let c = &s.curves;
        for i in 0..c.epochs() {
            w.write_record([
                s.observer_id.clone(),
                (i + 1).to_string(),
                c.acc_train[i].to_string(),
                c.acc_test[i].to_string(),
                c.n_train.to_string(),
                c.n_test.to_string(),
                c.best_epoch.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("delta_g.csv"))?;
    w.write_record(["Observer", "ΔG", "Epochs"])?;
    for s in summaries {
        let (g, e) = lag_cells(s);
        w.write_record([s.observer_id.as_str(), &g, &e])?;
    }
    w.flush()?;

    if let Some(meta) = metadata {
        let mut w = csv::Writer::from_path(dir.join("delta_g_metadata.csv"))?;
        w.write_record(["Observer", "ΔG", "Epochs", "top1_accuracy", "parameters"])?;
        for s in summaries {
            let (g, e) = lag_cells(s);
            let m = meta.iter().find(|m| m.name == s.observer_id);
            let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                s.observer_id.as_str(),
                &g,
                &e,
                &cell(m.and_then(|m| m.top1_accuracy)),
                &cell(m.and_then(|m| m.parameters)),
            ])?;
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(dir.join("efficiency.csv"))?;
    w.write_record(["observer", "epoch", "gain_per_image"])?;
    for s in summaries {
        for (i, g) in s.efficiency.gains.iter().enumerate() {
            w.write_record([s.observer_id.clone(), (i + 1).to_string(), g.to_string()])?;
        }
    }
    w.flush()?;

    if summaries.iter().any(|s| s.split.is_some()) {
        let mut w = csv::Writer::from_path(dir.join("split.csv"))?;
        w.write_record(["observer", "epoch", "novel_perspective", "novel_object"])?;
        for s in summaries {
            if let Some(sp) = &s.split {
                for i in 0..sp.novel_perspective.len() {
                    w.write_record([
                        s.observer_id.clone(),
                        (i + 1).to_string(),
                        sp.novel_perspective[i].to_string(),
                        sp.novel_object[i].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }

    if summaries.iter().any(|s| !s.inclusion.is_empty()) {
        let mut w = csv::Writer::from_path(dir.join("inclusion.csv"))?;
        w.write_record([
            "observer",
            "member",
            "run",
            "started_at_chance",
            "learned",
            "first_window",
            "last_window",
            "chance_upper",
            "mean_accuracy",
            "mean_lower",
            "mean_upper",
        ])?;
        for s in summaries {
            for r in &s.inclusion {
                w.write_record([
                    s.observer_id.clone(),
                    r.observer_id.clone(),
                    r.run.to_string(),
                    r.started_at_chance.to_string(),
                    r.learned.to_string(),
                    r.first_window.to_string(),
                    r.last_window.to_string(),
                    r.chance_upper.to_string(),
                    r.mean_accuracy.to_string(),
                    r.mean_lower.to_string(),
                    r.mean_upper.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }

    for s in summaries {
        let name = sanitize(&s.observer_id);
        std::fs::write(dir.join(format!("curves_{name}.svg")), curves_svg(&s.curves)?)?;
    }
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 40.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    s
}

fn axes(s: &mut String, x_max: f64, x_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.2}</text>"#,
            x0 - 4.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        H - 8.0
    );
    let _ = x_max;
}

fn sx(x: f64, x_min: f64, x_max: f64) -> f64 {
    let span = (x_max - x_min).max(1e-9);
    MARGIN + (x - x_min) / span * (W - 1.5 * MARGIN)
}

fn sy(v: f64) -> f64 {
    H - MARGIN - v * (H - 2.0 * MARGIN)
}

fn polyline(points: &[(f64, f64)], colour: &str, dashed: bool) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
    format!(
        r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
        pts.join(" ")
    ) + "\n"
}

/// Train (dashed) and test (solid) accuracy by epoch over a shaded band
/// for the exact interval around chance on the training-set size.
pub fn curves_svg(c: &LearningCurves) -> Result<String, AnalysisError> {
    let e = c.epochs() as f64;
    let n = c.n_train as u64;
    let (lo, hi) = clopper_pearson(count_from_accuracy(CHANCE, n), n, 0.05)?;
    let mut s = svg_open(&c.observer_id);
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#cccccc" fill-opacity="0.5"/>"##,
        MARGIN,
        sy(hi),
        sx(e, 1.0, e) - MARGIN,
        sy(lo) - sy(hi)
    );
    axes(&mut s, e, "epoch");
    for k in 1..=c.epochs() {
        let x = sx(k as f64, 1.0, e);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{k}</text>"#,
            H - MARGIN + 14.0
        );
    }
    let pts = |v: &[f64]| -> Vec<(f64, f64)> { v.iter().enumerate().map(|(i, &a)| (sx(i as f64 + 1.0, 1.0, e), sy(a))).collect() };
    s += &polyline(&pts(&c.acc_train), "#1b7f79", true);
    s += &polyline(&pts(&c.acc_test), "#1b7f79", false);
    s += "</svg>\n";
    Ok(s)
}

/// Moving averages of training correctness for several window sizes,
/// over the exact interval around the observer's mean accuracy.
pub fn moving_average_svg(log: &SessionLog, windows: &[usize]) -> Result<String, AnalysisError> {
    let flags: Vec<bool> = log.train_records().map(|r| r.correct).collect();
    let len = flags.len() as f64;
    let mean = flags.iter().filter(|&&f| f).count() as f64 / len;
    let (lo, hi) = clopper_pearson(count_from_accuracy(mean, 12), 12, 0.05)?;
    let mut s = svg_open(&format!("{} run {}", log.observer_id, log.run));
    axes(&mut s, len, "training trial");
    for (v, dash) in [(lo, true), (hi, true), (mean, false)] {
        let d = if dash { r#" stroke-dasharray="3,3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="gray"{d}/>"#,
            y = sy(v),
            x2 = sx(len, 1.0, len)
        );
    }
    let shades = ["#f4a6c6", "#e0609a", "#b8286c", "#7a0f45"];
    for (k, &w) in windows.iter().enumerate() {
        let ma = moving_average(&flags, w)?;
        let pts: Vec<(f64, f64)> = ma
            .iter()
            .enumerate()
            .map(|(i, &a)| (sx((i + w) as f64, 1.0, len), sy(a)))
            .collect();
        s += &polyline(&pts, shades[k % shades.len()], false);
    }
    s += "</svg>\n";
    Ok(s)
}
