use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::plan::{ExperimentPlan, Method};
use super::report::{write_tables, ReportTables};
use super::synth::{synthesize_dataset, MANIFEST_NAME};
use crate::baselines::{hp_remove, ts_remove, TsConfig, HP_CUTOFF_HZ, HP_ORDER};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingestion::{write_signal, DatasetManifest, SignalFormat, SignalMeta, SignalSegment, Split};
use crate::metrics::{evaluate_record, MetricsConfig, MetricsReport, ReportRow};
use crate::mixer::{build_corpus, ContaminationRecord, CorpusIndex};
use crate::neural::{load_checkpoint, FcnConfig, FcnModel};
use crate::trainer::{train, TrainConfig, TrainHistory};

/// A ready-to-run artifact remover.
#[derive(Debug, Clone)]
pub enum Denoiser {
    Hp,
    Ts(TsConfig),
    Fcn {
        model: Box<FcnModel>,
        checkpoint: PathBuf,
        /// FNV-1a of the checkpoint bytes.
        digest: u64,
    },
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl Denoiser {
    /// `checkpoint` is required for, and only read by, the FCN.
    pub fn new(method: Method, ts: TsConfig, checkpoint: Option<&Path>) -> Result<Self> {
        Ok(match method {
            Method::Hp => Denoiser::Hp,
            Method::Ts => Denoiser::Ts(ts),
            Method::Fcn => {
                let path = checkpoint.ok_or_else(|| Error::InvalidArgument("the fcn method needs a checkpoint".into()))?;
                let mut model = load_checkpoint(path)?;
                let digest = fnv1a(&fs::read(path).map_err(|e| Error::io(path, e))?);
                // Records are already processed in parallel.
                model.set_execution(Execution::Sequential);
                Denoiser::Fcn {
                    model: Box::new(model),
                    checkpoint: path.to_path_buf(),
                    digest,
                }
            }
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Denoiser::Hp => Method::Hp,
            Denoiser::Ts(_) => Method::Ts,
            Denoiser::Fcn { .. } => Method::Fcn,
        }
    }

    /// Denoises `noisy`, returning the output and a description of what was done.
    pub fn apply(&self, noisy: &SignalSegment) -> Result<(SignalSegment, BTreeMap<String, Value>)> {
        let mut meta = BTreeMap::new();
        meta.insert("method".to_string(), json!(self.method().as_str()));
        let out = match self {
            Denoiser::Hp => {
                meta.insert("params".into(), json!({ "order": HP_ORDER, "cutoff_hz": HP_CUTOFF_HZ }));
                hp_remove(noisy)?
            }
            Denoiser::Ts(cfg) => {
                let r = ts_remove(noisy, cfg)?;
                meta.insert(
                    "params".into(),
                    json!({ "config": cfg, "beats": r.beats, "fallback_to_hp": r.fallback }),
                );
                r.signal
            }
            Denoiser::Fcn { model, checkpoint, digest } => {
                let name = checkpoint.file_name().map(|n| n.to_string_lossy().into_owned());
                meta.insert(
                    "params".into(),
                    json!({ "checkpoint": name, "weights_fnv1a": format!("{digest:016x}"), "d": model.config().d }),
                );
                noisy.with_samples(model.denoise(noisy.samples())?)?
            }
        };
        Ok((out, meta))
    }
}

/// Denoises one signal file into `output` (same format rules, fresh sidecar).
pub fn denoise_file(denoiser: &Denoiser, input: &Path, output: &Path) -> Result<()> {
    let (x, mut meta) = crate::ingestion::read_signal_with_meta(input, SignalFormat::from_path(input))?;
    let (y, extra) = denoiser.apply(&x)?;
    meta.extra.extend(extra);
    meta.extra.insert("source".into(), json!(input.display().to_string()));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_signal(output, &y, SignalFormat::from_path(output), &meta)
}

/// Scores one method over every record of `split`. Outputs of records for
/// which `keep` holds are written to `keep_dir` as `<record id>.f32`.
pub fn evaluate_corpus(
    corpus_dir: &Path,
    split: Split,
    denoiser: &Denoiser,
    metrics: &MetricsConfig,
    keep: &(dyn Fn(&ContaminationRecord) -> bool + Sync),
    keep_dir: Option<&Path>,
    exec: Execution,
) -> Result<MetricsReport> {
    let index = CorpusIndex::load(corpus_dir)?;
    let entries: Vec<_> = index.split(split).collect();
    if entries.is_empty() {
        return Err(Error::Corpus(format!("{} has no {} records", corpus_dir.display(), split.as_str())));
    }
    if let Some(dir) = keep_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let rows: Vec<Result<ReportRow>> = exec.map(&entries, |e| {
        let rec = ContaminationRecord::load(&CorpusIndex::record_dir(corpus_dir, &e.id))?;
        let (y, extra) = denoiser.apply(&rec.noisy)?;
        if let (Some(dir), true) = (keep_dir, keep(&rec)) {
            let meta = SignalMeta {
                extra: extra.clone(),
                ..SignalMeta::for_signal(&y)
            };
            write_signal(&dir.join(format!("{}.f32", rec.id)), &y, SignalFormat::RawF32Le, &meta)?;
        }
        Ok(ReportRow {
            method: denoiser.method().as_str().into(),
            channel: e.channel.to_string(),
            target_snr_db: e.target_snr_db,
            record_id: e.id.clone(),
            metrics: evaluate_record(&rec.clean, &rec.noisy, &y, metrics)?,
        })
    });
    Ok(MetricsReport {
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// Training configuration for the plan's corpus and checkpoint paths.
pub fn train_config(plan: &ExperimentPlan) -> TrainConfig {
    let t = &plan.train;
    TrainConfig {
        batch_size: t.batch_size,
        max_epochs: t.max_epochs,
        patience: t.patience,
        lr: t.lr,
        seed: plan.seed,
        d: t.d,
        windows_per_record: t.windows_per_record,
        val_windows_per_record: t.val_windows_per_record,
        train_corpus: plan.corpus_dir(),
        validation_corpus: None,
        checkpoint: Some(plan.checkpoint_path()),
        history: Some(plan.out_dir.join("train_history.csv")),
    }
}

pub fn waveform_dir(plan: &ExperimentPlan, method: Method) -> PathBuf {
    plan.out_dir.join("waveforms").join(method.as_str())
}

/// What a full run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: usize,
    pub history: Option<TrainHistory>,
    pub reports: Vec<(Method, PathBuf)>,
    pub tables: ReportTables,
}

/// synth → mix → train → eval → report, all under `plan.out_dir`.
pub fn run_plan(plan: &ExperimentPlan, exec: Execution) -> Result<RunSummary> {
    plan.validate()?;
    let dataset = plan.dataset_dir();
    let manifest = synthesize_dataset(&plan.surrogate, plan.seed, &dataset, exec)?;
    log::info!("synthesized {} signals under {}", manifest.entries.len(), dataset.display());
    let corpus_cfg = crate::mixer::CorpusConfig {
        seed: plan.seed,
        ..plan.corpus.clone()
    };
    let index = build_corpus(&manifest, &corpus_cfg, &plan.corpus_dir(), exec)?;
    log::info!("mixed {} records", index.records.len());

    let history = if plan.has(Method::Fcn) {
        let outcome = train(&train_config(plan), FcnConfig::with_window(plan.train.d), exec)?;
        log::info!(
            "training stopped after {} epochs, best epoch {}",
            outcome.history.epochs.len(),
            outcome.history.best_epoch
        );
        Some(outcome.history)
    } else {
        None
    };

    let wf = plan.waveform.clone();
    let keep = move |r: &ContaminationRecord| r.provenance.channel == wf.channel && r.target_snr_db == wf.snr_db;
    let mut reports = Vec::new();
    for &method in &plan.methods {
        let checkpoint = plan.checkpoint_path();
        let denoiser = Denoiser::new(method, plan.ts, Some(&checkpoint))?;
        let report = evaluate_corpus(
            &plan.corpus_dir(),
            Split::Test,
            &denoiser,
            &plan.metrics,
            &keep,
            Some(&waveform_dir(plan, method)),
            exec,
        )?;
        let path = plan.report_path(method);
        fs::create_dir_all(plan.reports_dir()).map_err(|e| Error::io(plan.reports_dir(), e))?;
        report.save(&path)?;
        log::info!("{method}: {} records scored", report.rows.len());
        reports.push((method, path));
    }
    let paths: Vec<PathBuf> = reports.iter().map(|(_, p)| p.clone()).collect();
    let tables = write_tables(plan, &paths, &plan.tables_dir())?;
    Ok(RunSummary {
        records: index.records.len(),
        history,
        reports,
        tables,
    })
}

/// Loads the manifest written by [`synthesize_dataset`] under `dir`.
pub fn load_dataset(dir: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(&dir.join(MANIFEST_NAME))
}
