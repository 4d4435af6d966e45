//! Acceptance validator. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not a recorded deviation.
//!
//! The full-scale data directory is built once under the cargo target
//! directory and reused through the pipeline stamps.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Instant;

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;

use learndyn_cli::{analyze, dataset, gen, load_manifest, read_taxonomy, AnalyzeOptions, GenOptions, Inclusion, Layout};
use learndyn_core::analysis::{
    chance_upper, clopper_pearson, data_efficiency, epoch_curves, generalisation_lag, split_test_accuracy, LearningCurves,
};
use learndyn_core::dataset::{DatasetManifest, TestKind};
use learndyn_core::embryo::read_off;
use learndyn_core::geom::{mat_mul, IDENTITY};
use learndyn_core::learner::{prepare_inputs, run_session, Input, LearnerError, ModelConfig, Network, RunResult, SessionConfig};
use learndyn_core::render::{pink_noise_mask, render, render_with_rotation, RenderConfig, ViewSpec};
use learndyn_core::seed::{derive_seed, keyed_rng};
use learndyn_core::trial::{ingest_external_log, Phase, ProtocolShape};
use learndyn_service::protocol::Status;
use learndyn_service::Client;

const SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixture() -> anyhow::Result<Layout> {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-data");
    let layout = Layout::new(&root);
    let t = Instant::now();
    let g = gen(&layout, &GenOptions { seed: SEED, ..GenOptions::default() })?;
    let d = dataset(&layout, SEED)?;
    eprintln!(
        "fixture at {} (gen {}, dataset {}, {:.0} s)",
        root.display(),
        if g.skipped { "cached" } else { "built" },
        if d.skipped { "cached" } else { "built" },
        t.elapsed().as_secs_f64()
    );
    Ok(layout)
}

fn count_pngs(dir: &Path) -> usize {
    let Ok(entries) = std::fs::read_dir(dir) else { return 0 };
    entries
        .flatten()
        .map(|e| {
            let p = e.path();
            if p.is_dir() {
                count_pngs(&p)
            } else {
                (p.extension().is_some_and(|x| x == "png")) as usize
            }
        })
        .sum()
}

fn counts(layout: &Layout, m: &DatasetManifest) -> anyhow::Result<Outcome> {
    let tax = read_taxonomy(&layout.taxonomy())?;
    let parents = tax.iter().filter(|e| e.lineage.generation == 1).count();
    let children = tax.iter().filter(|e| e.lineage.generation == 2).count();
    let renderings = count_pngs(&layout.images());
    let sets: Vec<usize> = m.test_sets.iter().map(|s| s.len()).collect();
    let comp: Vec<(usize, usize)> = m
        .test_sets
        .iter()
        .map(|s| {
            let p = s.iter().filter(|x| x.kind == TestKind::NovelPerspective).count();
            (p, s.len() - p)
        })
        .collect();
    let mut seen: HashSet<String> = m.training_set.iter().map(|r| r.image_id()).collect();
    let disjoint = m.test_sets.iter().flatten().all(|x| seen.insert(x.image.image_id()));
    let pass = parents == 3
        && children == 300
        && renderings == 6900
        && m.pool.len() == 3450
        && m.training_set.len() == 36
        && sets == [51; 6]
        && comp.iter().all(|&c| c == (24, 27))
        && disjoint
        && m.validate().is_ok();
    Ok(outcome(
        pass,
        format!(
            "parents {parents}, children {children}, renderings {renderings}, pool {}, training {}, test sets {sets:?}, perspective/object {:?}, disjoint {disjoint}",
            m.pool.len(),
            m.training_set.len(),
            comp[0]
        ),
    ))
}

/// Returns (outcome, known deviation).
fn binomial() -> (Outcome, bool) {
    let (_, upper) = clopper_pearson(17, 51, 0.05).unwrap();
    let reference = (upper - 0.4705).abs() <= 0.0005;
    let mut worst: f64 = 0.0;
    for n in 1..=60u64 {
        for k in 0..=n {
            let (lo, hi) = clopper_pearson(k, n, 0.05).unwrap();
            let (olo, ohi) = common::oracle::clopper_pearson(k, n, 0.05);
            worst = worst.max((lo - olo).abs()).max((hi - ohi).abs());
        }
    }
    let oracle = worst < 1e-6;
    let detail = format!(
        "upper(17, 51) = {upper:.5} vs 0.4705 +/- 0.0005: {}; tail-sum oracle n <= 60 max deviation {worst:.1e}: {}",
        if reference { "ok" } else { "off" },
        if oracle { "ok" } else { "off" }
    );
    // 0.4705 is 24/51, the upper edge of the central 95% chance band, not
    // an exact interval bound; the exact bound is recorded as a deviation.
    (outcome(reference && oracle, detail), !reference && oracle)
}

fn metric_oracles(manifest: &DatasetManifest) -> Outcome {
    let shape = ProtocolShape::CANONICAL;
    let mut worst: f64 = 0.0;
    let mut telescoping = true;
    let mut lag_mismatch = 0;
    let mut computable = 0;
    for seed in 0..1000u64 {
        let log = common::random_log(manifest, &shape, seed);
        let want = common::oracle::recount(&log, manifest, 6);
        let curves = epoch_curves(&log, &shape).unwrap();
        let eff = data_efficiency(&curves);
        let split = split_test_accuracy(&log, manifest).unwrap();
        for i in 0..6 {
            let prev = if i == 0 { 1.0 / 3.0 } else { want.test[i - 1] };
            for d in [
                curves.acc_train[i] - want.train[i],
                curves.acc_test[i] - want.test[i],
                eff.gains[i] - (want.test[i] - prev) / 36.0,
                split.novel_perspective[i] - want.persp[i],
                split.novel_object[i] - want.object[i],
            ] {
                worst = worst.max(d.abs());
            }
        }
        let total = eff.exact.as_ref().map(|g| g.iter().fold(Ratio::from_integer(0), |a, b| a + b) * 36);
        telescoping &= total == Some(want.test_exact[5] - Ratio::new(1, 3));
        match (generalisation_lag(&curves), common::oracle::lag_oracle(&want.train, &want.test, 36)) {
            (Ok(g), Some((d, a, b))) => {
                computable += 1;
                worst = worst.max((g.delta_g - d).abs());
                lag_mismatch += ((g.first_epoch, g.last_epoch) != (a, b)) as usize;
            }
            (Err(_), None) => {}
            _ => lag_mismatch += 1,
        }
    }
    outcome(
        worst <= 1e-12 && telescoping && lag_mismatch == 0,
        format!(
            "1000 logs: max deviation {worst:.1e}, telescoping exact {telescoping}, lag interval mismatches {lag_mismatch} ({computable} computable)"
        ),
    )
}

/// Train accuracy crosses the chance bound at `e1`; test accuracy rises
/// linearly to its peak at `e2` and falls afterwards.
fn piecewise_curves(e1: usize, e2: usize) -> (Vec<f64>, Vec<f64>) {
    let train: Vec<f64> = (1..=6)
        .map(|e| if e < e1 { 0.36 + 0.01 * e as f64 } else { 0.56 + 0.07 * (e - e1) as f64 })
        .collect();
    let test: Vec<f64> = (1..=6)
        .map(|e| {
            if e <= e2 {
                0.38 + 0.06 * e as f64
            } else {
                0.38 + 0.06 * e2 as f64 - 0.04 * (e - e2) as f64
            }
        })
        .collect();
    (train, test)
}

fn lag_intervals(layout: &Layout) -> anyhow::Result<Outcome> {
    let mut wrong = Vec::new();
    let mut empty = 0;
    for e1 in 1..=6 {
        for e2 in 1..=6 {
            let (train, test) = piecewise_curves(e1, e2);
            let c = LearningCurves::from_accuracies("synthetic", train.clone(), test.clone(), 36, 51)?;
            match generalisation_lag(&c) {
                Ok(g) if e1 <= e2 => {
                    let want = (e1..=e2).map(|e| train[e - 1] - test[e - 1]).sum::<f64>() / (e2 - e1 + 1) as f64;
                    if g.epochs_label() != format!("{e1}-{e2}") || (g.delta_g - want).abs() > 1e-12 {
                        wrong.push(format!("({e1},{e2}) gave {} {:.4}", g.epochs_label(), g.delta_g));
                    }
                }
                // E runs from e1 to e2, so it is empty when the test peak
                // comes first.
                Err(_) if e1 > e2 => empty += 1,
                other => wrong.push(format!("({e1},{e2}) gave {other:?}")),
            }
        }
    }
    let mut detail = format!("36 (e1, e2) pairs: {} labelled e1-e2, {empty} with empty E", 36 - empty - wrong.len());
    if !wrong.is_empty() {
        detail.push_str(&format!("; wrong: {}", wrong.join(", ")));
    }
    let mut pass = wrong.is_empty();

    match std::env::var_os("LEARNDYN_TABLE1_LOGS") {
        None => detail.push_str("; released-log check skipped (LEARNDYN_TABLE1_LOGS unset)"),
        Some(dir) => {
            let rows = [
                ("humans", 0.002, "2-6"),
                ("convnext", 0.048, "2-5"),
                ("vgg-16", 0.107, "3-5"),
                ("alexnet", 0.122, "3-5"),
                ("vit", 0.178, "2-4"),
                ("resnet-50", 0.232, "1-4"),
                ("efficientnet", 0.256, "2-6"),
            ];
            let report = tempfile::tempdir()?;
            let out = analyze(&AnalyzeOptions {
                inputs: vec![PathBuf::from(dir)],
                manifest: Some(layout.manifest()),
                metadata: None,
                report: report.path().to_path_buf(),
                epochs: 6,
                inclusion: Inclusion::Auto,
            })?;
            let mut checked = Vec::new();
            for s in &out.summaries {
                let id = s.observer_id.to_lowercase();
                if let Some(&(name, want, epochs)) = rows.iter().find(|r| r.0 == id) {
                    let ok = s.lag.as_ref().is_ok_and(|g| (g.delta_g - want).abs() <= 0.001 && g.epochs_label() == epochs);
                    pass &= ok;
                    checked.push(format!("{name} {}", if ok { "ok" } else { "off" }));
                }
            }
            pass &= !checked.is_empty();
            detail.push_str(&format!("; released logs: {}", checked.join(", ")));
        }
    }
    Ok(outcome(pass, detail))
}

fn load_inputs(layout: &Layout, manifest: &DatasetManifest, model: &ModelConfig) -> anyhow::Result<HashMap<String, Input>> {
    let root = layout.root.clone();
    Ok(prepare_inputs(manifest, model, |r| {
        Ok(image::open(root.join(r.relative_path())).map_err(LearnerError::Image)?.to_rgb8())
    })?)
}

fn learner_integrity(manifest: &DatasetManifest, inputs: &HashMap<String, Input>, runs: &[RunResult]) -> anyhow::Result<Outcome> {
    let model = ModelConfig::default();
    let mut net = Network::new(model.clone(), 5)?;
    let batch: Vec<Input> = manifest.training_set[..3].iter().map(|r| inputs[&r.image_id()].clone()).collect();
    let labels: Vec<usize> = manifest.training_set[..3].iter().map(|r| r.label()).collect();
    let (_, grads, _) = net.loss_and_grads(&batch, &labels)?;
    let mut rng = keyed_rng(7, &[]);
    let n = net.param_count();
    let mut sample: Vec<usize> = (0..40).map(|_| rng.random_range(0..n)).collect();
    sample.extend(net.head_range());
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for &i in &sample {
        let orig = net.params[i];
        net.params[i] = orig + h;
        let up = net.loss_and_grads(&batch, &labels)?.0;
        net.params[i] = orig - h;
        let down = net.loss_and_grads(&batch, &labels)?.0;
        net.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - grads[i]).abs() / numeric.abs().max(grads[i].abs()).max(1e-7));
    }

    let phases: usize = runs.iter().map(|r| r.eval_digests.len()).sum();
    let unchanged = runs.iter().flat_map(|r| &r.eval_digests).filter(|(a, b)| a == b).count();
    let uniform = Network::zeros(model)?.loss_and_grads(&batch, &labels)?.0;
    let ce = (uniform - 3f64.ln()).abs();
    Ok(outcome(
        worst < 1e-4 && unchanged == phases && phases == runs.len() * 6 && ce <= 1e-9,
        format!(
            "gradient check {} parameters max relative error {worst:.1e}; digests unchanged in {unchanged}/{phases} test phases; uniform cross-entropy - ln 3 = {ce:.1e}",
            sample.len()
        ),
    ))
}

fn desk_run(layout: &Layout, manifest: &DatasetManifest) -> anyhow::Result<(Outcome, Vec<RunResult>, HashMap<String, Input>)> {
    let cfg = SessionConfig {
        seed: derive_seed(SEED, "train"),
        ..SessionConfig::default()
    };
    let t = Instant::now();
    let inputs = load_inputs(layout, manifest, &cfg.model)?;
    let runs = run_session(&cfg, manifest, &inputs)?;
    let secs = t.elapsed().as_secs_f64();
    let bound = chance_upper(36);
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| epoch_curves(&r.log, &ProtocolShape::CANONICAL).map(|c| c.acc_train[5]))
        .collect::<Result<_, _>>()?;
    let above = finals.iter().filter(|&&a| a > bound).count();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let out = outcome(
        runs.len() == 20 && secs < 600.0 && above >= 18,
        format!(
            "{} runs x 6 epochs in {secs:.0} s on {} thread(s); {above}/20 end above the chance bound {bound:.4} (mean epoch-6 training accuracy {mean:.3})",
            runs.len(),
            rayon::current_num_threads()
        ),
    );
    Ok((out, runs, inputs))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn renderer(layout: &Layout) -> anyhow::Result<Outcome> {
    let tax = read_taxonomy(&layout.taxonomy())?;
    let meshes = tax
        .iter()
        .filter(|e| e.lineage.generation == 2)
        .step_by(50)
        .map(|e| read_off(&layout.root.join(&e.path)).map(|mut m| {
            m.lineage = e.lineage.clone();
            m
        }))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = RenderConfig::default();

    let mut worst_rotation = 0;
    let mut composes = true;
    for m in &meshes {
        let initial = render(m, ViewSpec::INITIAL, &cfg)?;
        for step in [ViewSpec::pitch(30), ViewSpec::yaw(30)] {
            let mut r = IDENTITY;
            let mut v = ViewSpec::INITIAL;
            for _ in 0..12 {
                r = mat_mul(&step.rotation(), &r);
                v = v.then(step).expect("same axis");
            }
            let turned = render_with_rotation(m, &r, &cfg)?;
            let off = turned
                .as_raw()
                .iter()
                .zip(initial.pixels.as_raw())
                .filter(|(a, b)| (**a as i16 - **b as i16).abs() > 1)
                .count();
            worst_rotation = worst_rotation.max(off);
            composes &= v == ViewSpec::INITIAL;
        }
    }

    let jobs: Vec<(usize, ViewSpec)> = (0..meshes.len())
        .flat_map(|i| [ViewSpec::INITIAL, ViewSpec::pitch(-120), ViewSpec::yaw(90)].map(|v| (i, v)))
        .collect();
    let draw = || -> Vec<Vec<u8>> { jobs.par_iter().map(|&(i, v)| render(&meshes[i], v, &cfg).unwrap().pixels.into_raw()).collect() };
    let one = in_pool(1, draw);
    let four = in_pool(4, draw);
    let stored: Vec<Vec<u8>> = jobs
        .iter()
        .map(|&(i, v)| {
            let m = &meshes[i];
            let rel = format!("images/{}/{}.png", m.lineage.category.unwrap().slug(), v.image_id(&m.lineage.object_id));
            image::open(layout.root.join(rel)).map(|img| img.to_rgb8().into_raw())
        })
        .collect::<Result<_, _>>()?;
    let masks_equal = in_pool(1, || pink_noise_mask(3, 224, 224)) == in_pool(4, || pink_noise_mask(3, 224, 224));
    let deterministic = one == four && one == stored && masks_equal;

    let slopes: Vec<f64> = (0..4).map(|s| common::spectrum::spectral_slope(&pink_noise_mask(s, 224, 224), 4, 56)).collect();
    let slope_ok = slopes.iter().all(|s| (-1.15..=-0.85).contains(s));
    Ok(outcome(
        worst_rotation <= 3 && composes && deterministic && slope_ok,
        format!(
            "full turn about both axes on {} objects: at most {worst_rotation} channel(s) off by more than 1; {} images byte-identical at 1 and 4 threads and on disk: {deterministic}; spectral slopes {:?}",
            meshes.len(),
            jobs.len(),
            slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()
        ),
    ))
}

struct Server {
    child: Child,
    addr: String,
}

fn start_server(layout: &Layout) -> anyhow::Result<Server> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_learndyn"))
        .arg("--out")
        .arg(&layout.root)
        .args(["serve", "--addr", "127.0.0.1:0"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().expect("piped")).read_line(&mut line)?;
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| anyhow::anyhow!("unexpected server output {line:?}"))?
        .to_string();
    Ok(Server { child, addr })
}

fn durability(layout: &Layout) -> anyhow::Result<Outcome> {
    let _ = std::fs::remove_dir_all(layout.sessions());
    let kill_at = [10 + 87 + 20, 10 + 3 * 87 + 36 + 30];
    let mut server = start_server(layout)?;
    let mut client = Client::connect(&server.addr)?;
    let session = client.create("acceptance")?;
    let sid = session.session_id.clone();
    let mut rng = keyed_rng(99, &[]);
    let mut acked: HashMap<(Phase, u32, u32), String> = HashMap::new();
    let mut answered = 0u64;
    let mut restarts = 0;
    let mut resumed_at = Vec::new();
    loop {
        let t = client.next_trial(&sid)?;
        if restarts < kill_at.len() && answered == kill_at[restarts] {
            // Kill with a trial outstanding, mid-epoch.
            server.child.kill()?;
            server.child.wait()?;
            server = start_server(layout)?;
            client = Client::connect(&server.addr)?;
            restarts += 1;
            resumed_at.push(client.status(&sid)?.answered);
            continue;
        }
        let label = t.options[rng.random_range(0..t.options.len())].clone();
        let fb = client.submit(&sid, &t.trial_id, &label, None)?;
        answered = fb.session.answered;
        if t.cursor.phase != Phase::Practice {
            acked.insert((t.cursor.phase, t.cursor.epoch, t.cursor.trial_index), label);
        }
        if fb.session.status == Status::Finished {
            break;
        }
    }
    let export = client.export(&sid, false)?;
    let _ = server.child.kill();
    let _ = server.child.wait();

    let manifest = load_manifest(layout)?;
    let known: HashSet<String> = manifest.protocol_images().map(|r| r.image_id()).collect();
    let ingested = ingest_external_log(Path::new(&export.path), Some(&known));
    let (valid, records) = match &ingested {
        Ok(i) => (i.unknown_images.is_empty() && i.log.validate(&ProtocolShape::CANONICAL, false).is_ok(), i.log.records.clone()),
        Err(_) => (false, export.records.clone()),
    };
    let lost = acked
        .iter()
        .filter(|((phase, epoch, index), label)| {
            !records.iter().any(|r| {
                r.phase == *phase && r.epoch == *epoch && r.trial_index == *index && r.response_label.name() == label.as_str()
            })
        })
        .count();
    let resumed_ok = resumed_at.iter().zip(kill_at).all(|(&a, k)| a == k);
    Ok(outcome(
        valid && lost == 0 && records.len() == 522 && acked.len() == 522 && resumed_ok && restarts == kill_at.len(),
        format!(
            "{restarts} kills at answered {kill_at:?}, resumed at {resumed_at:?}; {} acknowledged responses, {lost} lost; exported {} records, schema-valid {valid}",
            acked.len(),
            records.len()
        ),
    ))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // cargo test --list probes every harness.
        return;
    }
    let layout = match fixture() {
        Ok(l) => l,
        Err(e) => {
            println!("FAIL fixture: {e:#}");
            std::process::exit(1);
        }
    };
    let manifest = load_manifest(&layout).expect("manifest after dataset stage");
    let mut results: Vec<(&str, anyhow::Result<Outcome>, bool)> = Vec::new();

    results.push(("counts pipeline", counts(&layout, &manifest), false));
    let (cp, known) = binomial();
    results.push(("clopper-pearson", Ok(cp), known));
    results.push(("metric oracles", Ok(metric_oracles(&manifest)), false));
    results.push(("lag interval semantics", lag_intervals(&layout), false));
    match desk_run(&layout, &manifest) {
        Ok((desk, runs, inputs)) => {
            results.push(("learner integrity", learner_integrity(&manifest, &inputs, &runs), false));
            results.push(("desk-scale learning run", Ok(desk), false));
        }
        Err(e) => {
            let msg = format!("{e:#}");
            results.push(("learner integrity", Err(anyhow::anyhow!("{msg}")), false));
            results.push(("desk-scale learning run", Err(anyhow::anyhow!("{msg}")), false));
        }
    }
    results.push(("renderer/noise", renderer(&layout), false));
    results.push(("service durability", durability(&layout), false));

    let mut unexpected = 0;
    for (name, r, known) in &results {
        match r {
            Ok(o) if o.pass => println!("PASS {name}: {}", o.detail),
            Ok(o) => {
                let tag = if *known { " [known deviation]" } else { "" };
                println!("FAIL {name}: {}{tag}", o.detail);
                unexpected += !known as usize;
            }
            Err(e) => {
                println!("FAIL {name}: error: {e:#}");
                unexpected += 1;
            }
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
