//! Command-line front end for corpus synthesis, training, denoising and
//! evaluation.
//!
//! Worker count follows `SEMG_SCRUB_THREADS` when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semg_scrub::exec::init_thread_pool;
use semg_scrub::harness::{
    denoise_file, evaluate_corpus, load_dataset, run_plan, synthesize_dataset, write_tables, Denoiser,
    ExperimentPlan, Method,
};
use semg_scrub::ingestion::{DatasetManifest, Split};
use semg_scrub::mixer::{build_corpus, CorpusConfig};
use semg_scrub::neural::FcnConfig;
use semg_scrub::trainer::{train, TrainConfig};
use semg_scrub::Execution;

#[derive(Parser)]
#[command(name = "semg-scrub", version, about = "ECG artifact removal for single-channel sEMG")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a surrogate sEMG/ECG dataset and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Mix ECG into clean segments at exact input SNRs.
    Mix {
        #[command(flatten)]
        common: Common,
        /// Dataset manifest, or the directory written by `synth`.
        #[arg(long)]
        manifest: PathBuf,
        /// Target SNR in dB, used for every split. Repeat for a grid.
        #[arg(long, allow_negative_numbers = true)]
        snr: Vec<f64>,
        /// ECG sources per clean segment, for every split.
        #[arg(long)]
        pairings: Option<usize>,
    },
    /// Train the FCN on a mixed corpus.
    Train {
        #[command(flatten)]
        common: Common,
        /// Mixed corpus providing train and validation records.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Where to write the best weights.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Denoise one signal file.
    Denoise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score one method on every test record of a corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Aggregate report CSVs into per-figure tables and charts.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report CSVs written by `eval`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run synth, mix, train, eval and report from one plan.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Plan or training configuration, TOML or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn plan(&self) -> Result<ExperimentPlan> {
        let mut plan = match &self.config {
            Some(p) => ExperimentPlan::load(p).with_context(|| format!("loading plan {}", p.display()))?,
            None => ExperimentPlan::default(),
        };
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        if let Some(o) = &self.out {
            plan.out_dir = o.clone();
        }
        Ok(plan)
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required")
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("input not found: {}", path.display());
    }
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .with_context(|| format!("unknown split {s:?}"))
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Synth { common } => {
            let plan = common.plan()?;
            let out = common.out()?;
            let m = synthesize_dataset(&plan.surrogate, plan.seed, out, exec)?;
            println!("wrote {} signals to {}", m.entries.len(), out.display());
        }
        Command::Mix {
            common,
            manifest,
            snr,
            pairings,
        } => {
            require(&manifest)?;
            let plan = common.plan()?;
            let out = common.out()?;
            let m = if manifest.is_dir() {
                load_dataset(&manifest)?
            } else {
                DatasetManifest::load(&manifest)?
            };
            let mut cfg = CorpusConfig {
                seed: plan.seed,
                ..plan.corpus.clone()
            };
            if !snr.is_empty() {
                cfg.train_snrs_db = snr.clone();
                cfg.test_snrs_db = snr;
            }
            if let Some(p) = pairings {
                cfg.train_pairings = p;
                cfg.test_pairings = p;
            }
            let index = build_corpus(&m, &cfg, out, exec)?;
            println!("wrote {} records to {}", index.records.len(), out.display());
        }
        Command::Train {
            common,
            corpus,
            checkpoint,
            epochs,
        } => {
            let mut cfg = match &common.config {
                Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => TrainConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(c) = corpus {
                cfg.train_corpus = c;
            }
            if let Some(e) = epochs {
                cfg.max_epochs = e;
            }
            cfg.checkpoint = checkpoint.or(common.out.clone()).or(cfg.checkpoint);
            if cfg.checkpoint.is_none() {
                bail!("--checkpoint (or --out) is required");
            }
            require(&cfg.train_corpus)?;
            let out = train(&cfg, FcnConfig::with_window(cfg.d), exec)?;
            println!(
                "best epoch {} of {} (validation loss {:.6e}), weights in {}",
                out.history.best_epoch,
                out.history.epochs.len(),
                out.history.best_val_loss,
                cfg.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
            );
        }
        Command::Denoise {
            common,
            method,
            input,
            checkpoint,
        } => {
            require(&input)?;
            if let Some(c) = &checkpoint {
                require(c)?;
            }
            let plan = common.plan()?;
            let denoiser = Denoiser::new(method, plan.ts, checkpoint.as_deref())?;
            let out = common.out()?;
            denoise_file(&denoiser, &input, out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval {
            common,
            method,
            corpus,
            checkpoint,
            split,
        } => {
            require(&corpus)?;
            if let Some(c) = &checkpoint {
                require(c)?;
            }
            let plan = common.plan()?;
            let denoiser = Denoiser::new(method, plan.ts, checkpoint.as_deref())?;
            let out = common.out()?;
            let report = evaluate_corpus(&corpus, parse_split(&split)?, &denoiser, &plan.metrics, &|_| false, None, exec)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            report.save(out)?;
            println!("scored {} records into {}", report.rows.len(), out.display());
        }
        Command::Report { common, reports } => {
            for r in &reports {
                require(r)?;
            }
            let plan = match &common.config {
                Some(p) => ExperimentPlan::load(p)?,
                None => ExperimentPlan::default(),
            };
            let out = common.out()?;
            let t = write_tables(&plan, &reports, out)?;
            println!("{} records summarized into {}", t.records, out.display());
        }
        Command::Run { common } => {
            let plan = common.plan()?;
            let summary = run_plan(&plan, exec)?;
            println!(
                "{} records mixed, {} reports, tables in {}",
                summary.records,
                summary.reports.len(),
                plan.tables_dir().display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let threads = std::env::var("SEMG_SCRUB_THREADS").ok().and_then(|v| v.parse().ok());
    init_thread_pool(threads);
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
