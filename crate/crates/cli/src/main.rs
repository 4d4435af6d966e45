use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use learndyn_cli::*;
use learndyn_core::learner::SessionConfig;
use learndyn_core::seed::derive_seed;
use learndyn_service::{serve, ExperimentConfig, Service, ServiceAssets};

#[derive(Parser)]
#[command(name = "learndyn", version, about = "Learning-dynamics laboratory: stimuli, learner, sessions, analysis")]
struct Cli {
    /// Master seed; every stage derives its own seed from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Data directory.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "learndyn-data")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InclusionArg {
    Auto,
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Grow the object taxonomy and render every view.
    Gen {
        /// Children per category (100 for the full set).
        #[arg(long, default_value_t = 100)]
        children: usize,
    },
    /// Filter by similarity and compose the training and test sets.
    Dataset,
    /// Train the desk-scale learner under the protocol.
    Train {
        #[arg(long, default_value_t = 20)]
        runs: u32,
        #[arg(long, default_value_t = 6)]
        epochs: u32,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value = "learner")]
        observer: String,
    },
    /// Validate external trial logs and copy them into the data directory.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 6)]
        epochs: u32,
    },
    /// Build the report bundle from trial logs.
    Analyze {
        /// Log files or directories; defaults to train/ and logs/.
        files: Vec<PathBuf>,
        /// Defaults to the data directory's manifest when present.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// CSV with name,top1_accuracy,parameters columns.
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Report directory; defaults to report/ under the data directory.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        epochs: u32,
        #[arg(long, value_enum, default_value_t = InclusionArg::Auto)]
        inclusion: InclusionArg,
    },
    /// Run the session service for live observers.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Allow an observer to open a session while another is unfinished.
        #[arg(long)]
        allow_concurrent: bool,
    },
}

fn print_stage(name: &str, r: &StageResult) {
    if r.skipped {
        println!("{name}: up to date ({})", &r.digest[..16]);
    } else {
        let counts: Vec<String> = r.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{name}: {} ({})", counts.join(" "), &r.digest[..16]);
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let layout = Layout::new(&cli.out);
    match cli.command {
        Command::Gen { children } => {
            let r = gen(&layout, &GenOptions { seed: cli.seed, children })?;
            print_stage("gen", &r);
        }
        Command::Dataset => print_stage("dataset", &dataset(&layout, cli.seed)?),
        Command::Train {
            runs,
            epochs,
            batch,
            lr,
            observer,
        } => {
            let cfg = SessionConfig {
                observer_id: observer,
                runs,
                epochs,
                batch,
                lr,
                seed: derive_seed(cli.seed, "train"),
                ..SessionConfig::default()
            };
            print_stage("train", &train(&layout, &cfg)?);
        }
        Command::Ingest { files, epochs } => {
            let o = ingest(&layout, &files, epochs)?;
            for l in &o.logs {
                println!("ok {} run {}: {} records", l.observer_id, l.run, l.records.len());
            }
            for (f, ids) in &o.unknown_images {
                println!("warning {}: {} image ids not in the manifest", f.display(), ids.len());
            }
            for (f, e) in &o.errors {
                eprintln!("error {}: {e}", f.display());
            }
            if !o.errors.is_empty() {
                std::process::exit(1);
            }
        }
        Command::Analyze {
            files,
            manifest,
            metadata,
            report,
            epochs,
            inclusion,
        } => {
            let inputs = if files.is_empty() {
                [layout.train(), layout.logs()].into_iter().filter(|p| p.is_dir()).collect()
            } else {
                files
            };
            let manifest = manifest.or_else(|| layout.manifest().is_file().then(|| layout.manifest()));
            let opts = AnalyzeOptions {
                inputs,
                manifest,
                metadata,
                report: report.unwrap_or_else(|| layout.report()),
                epochs,
                inclusion: match inclusion {
                    InclusionArg::Auto => Inclusion::Auto,
                    InclusionArg::On => Inclusion::On,
                    InclusionArg::Off => Inclusion::Off,
                },
            };
            let o = analyze(&opts)?;
            for s in &o.summaries {
                let lag = match &s.lag {
                    Ok(g) => format!("{:.3} (epochs {})", g.delta_g, g.epochs_label()),
                    Err(e) => format!("n/a ({e})"),
                };
                println!("{}: {} member(s), ΔG {lag}", s.observer_id, s.members.len());
            }
            for (f, e) in &o.errors {
                eprintln!("error {}: {e}", f.display());
            }
            println!("report written to {}", opts.report.display());
        }
        Command::Serve { addr, allow_concurrent } => {
            let manifest = load_manifest(&layout)?;
            let assets = ServiceAssets::load(&layout.root, manifest).context("loading service assets")?;
            let config = ExperimentConfig {
                exclusive: !allow_concurrent,
                ..ExperimentConfig::default()
            };
            let service = Arc::new(Service::open(config, assets, &layout.sessions())?);
            let listener = std::net::TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            serve(listener, service)?;
        }
    }
    Ok(())
}
