//! Mini-batch training of the denoiser with validation-based early stopping.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingestion::Split;
use crate::mixer::CorpusIndex;
use crate::neural::{l2_loss, save_checkpoint, AdamConfig, AdamState, FcnConfig, FcnModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
    /// Window length in samples.
    pub d: usize,
    /// Random windows drawn from every training record per epoch.
    pub windows_per_record: usize,
    /// Fixed, evenly spaced windows per validation record.
    pub val_windows_per_record: usize,
    /// Dataset directory providing the `train` split.
    pub train_corpus: PathBuf,
    /// Dataset directory providing the `validation` split; defaults to `train_corpus`.
    pub validation_corpus: Option<PathBuf>,
    /// Where the best weights are written whenever validation improves.
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            patience: 15,
            lr: 1e-4,
            seed: 0,
            d: 4000,
            windows_per_record: 1,
            val_windows_per_record: 1,
            train_corpus: PathBuf::from("corpus"),
            validation_corpus: None,
            checkpoint: None,
            history: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.windows_per_record == 0 || self.val_windows_per_record == 0 {
            return bad("batch size, epoch count and windows per record must be positive");
        }
        if self.d == 0 || !self.d.is_multiple_of(4) {
            return bad("window length must be a positive multiple of 4");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::format(path, "training config", e))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::format(path, "training config", e))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sample-aligned noisy/clean pair held in single precision, which is the
/// precision of the corpus files.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub noisy: Vec<f32>,
    pub clean: Vec<f32>,
}

impl TrainingPair {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

pub fn load_pairs(dataset_dir: &Path, split: Split, exec: Execution) -> Result<Vec<TrainingPair>> {
    let index = CorpusIndex::load(dataset_dir)?;
    let ids: Vec<String> = index.split(split).map(|e| e.id.clone()).collect();
    let loaded = exec.map(&ids, |id| {
        let dir = CorpusIndex::record_dir(dataset_dir, id);
        let read = |name: &str| -> Result<Vec<f32>> {
            Ok(crate::ingestion::read_f32le(&dir.join(name))?.into_iter().map(|v| v as f32).collect())
        };
        Ok(TrainingPair {
            id: id.clone(),
            noisy: read("noisy.f32")?,
            clean: read("clean.f32")?,
        })
    });
    loaded.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub record: usize,
    pub offset: usize,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Random window placement for one epoch. Returns the shuffled windows and
/// the number of records shorter than `d`.
pub fn plan_windows(lens: &[usize], d: usize, per_record: usize, seed: u64, epoch: usize) -> (Vec<Window>, usize) {
    let mut rng = epoch_rng(seed, epoch);
    let mut windows = Vec::with_capacity(lens.len() * per_record);
    let mut skipped = 0;
    for (record, &len) in lens.iter().enumerate() {
        if len < d {
            skipped += 1;
            continue;
        }
        for _ in 0..per_record {
            windows.push(Window {
                record,
                offset: rng.gen_range(0..=len - d),
            });
        }
    }
    windows.shuffle(&mut rng);
    (windows, skipped)
}

/// Evenly spaced windows, identical on every call.
pub fn fixed_windows(lens: &[usize], d: usize, per_record: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for (record, &len) in lens.iter().enumerate().filter(|(_, &l)| l >= d) {
        let span = len - d;
        for k in 0..per_record {
            let offset = if per_record == 1 { span / 2 } else { span * k / (per_record - 1) };
            out.push(Window { record, offset });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[batch, 1, d]`
    pub noisy: Array3<f64>,
    pub clean: Array3<f64>,
    pub windows: Vec<Window>,
}

pub fn assemble(pairs: &[TrainingPair], windows: &[Window], d: usize) -> Batch {
    let b = windows.len();
    let mut noisy = Array3::zeros((b, 1, d));
    let mut clean = Array3::zeros((b, 1, d));
    for (i, w) in windows.iter().enumerate() {
        let p = &pairs[w.record];
        for j in 0..d {
            noisy[[i, 0, j]] = p.noisy[w.offset + j] as f64;
            clean[[i, 0, j]] = p.clean[w.offset + j] as f64;
        }
    }
    Batch {
        noisy,
        clean,
        windows: windows.to_vec(),
    }
}

/// The batches of one epoch, assembled lazily.
pub struct Batches<'a> {
    pairs: &'a [TrainingPair],
    windows: Vec<Window>,
    d: usize,
    batch_size: usize,
    next: usize,
    skipped: usize,
}

impl Batches<'_> {
    /// Records shorter than the window length.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.windows.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.windows.len());
        let batch = assemble(self.pairs, &self.windows[self.next..end], self.d);
        self.next = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.windows.len() - self.next).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Batches<'_> {}

pub fn make_batches(
    pairs: &[TrainingPair],
    d: usize,
    batch_size: usize,
    per_record: usize,
    seed: u64,
    epoch: usize,
) -> Result<Batches<'_>> {
    if batch_size == 0 || d == 0 {
        return Err(Error::InvalidArgument("batch size and window length must be positive".into()));
    }
    let lens: Vec<usize> = pairs.iter().map(TrainingPair::len).collect();
    let (windows, skipped) = plan_windows(&lens, d, per_record, seed, epoch);
    if skipped > 0 {
        log::warn!("{skipped} of {} records are shorter than {d} samples and were skipped", pairs.len());
    }
    Ok(Batches {
        pairs,
        windows,
        d,
        batch_size,
        next: 0,
        skipped,
    })
}

/// Patience counter on validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    /// An epoch improves only if it beats the best loss by more than this.
    pub min_delta: f64,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            min_delta: 1e-7,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        let improved = loss < self.best - self.min_delta;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Verdict {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_loss);
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Supplies the validation loss after every epoch.
pub trait Validator {
    fn validation_loss(&mut self, model: &FcnModel, epoch: usize) -> Result<f64>;
}

/// Eval-mode mean squared error over fixed validation windows.
pub struct WindowValidator<'a> {
    pairs: &'a [TrainingPair],
    windows: Vec<Window>,
    d: usize,
    batch_size: usize,
}

impl<'a> WindowValidator<'a> {
    pub fn new(pairs: &'a [TrainingPair], d: usize, per_record: usize, batch_size: usize) -> Result<Self> {
        let lens: Vec<usize> = pairs.iter().map(TrainingPair::len).collect();
        let windows = fixed_windows(&lens, d, per_record);
        if windows.is_empty() {
            return Err(Error::Corpus(format!("no validation record holds a {d}-sample window")));
        }
        Ok(Self {
            pairs,
            windows,
            d,
            batch_size: batch_size.max(1),
        })
    }

    pub fn loss(&self, model: &FcnModel) -> Result<f64> {
        let mut sum = 0.0;
        for chunk in self.windows.chunks(self.batch_size) {
            let b = assemble(self.pairs, chunk, self.d);
            let y = model.predict(&b.noisy)?;
            sum += (&y - &b.clean).iter().map(|v| v * v).sum::<f64>();
        }
        Ok(sum / (self.windows.len() * self.d) as f64)
    }
}

impl Validator for WindowValidator<'_> {
    fn validation_loss(&mut self, model: &FcnModel, _epoch: usize) -> Result<f64> {
        self.loss(model)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: FcnModel,
    pub history: TrainHistory,
}

/// Trains `model` on in-memory pairs. The best weights are written to
/// `cfg.checkpoint` on every improvement.
pub fn train_on(
    cfg: &TrainConfig,
    mut model: FcnModel,
    train: &[TrainingPair],
    validator: &mut dyn Validator,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Corpus("training corpus is empty".into()));
    }
    let mut opt = AdamState::for_model(
        &model,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut epochs = Vec::new();
    let mut best = model.clone();
    let mut reason = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_epochs {
        let batches = make_batches(train, cfg.d, cfg.batch_size, cfg.windows_per_record, cfg.seed, epoch)?;
        if batches.len() == 0 {
            return Err(Error::Corpus(format!("no training record holds a {}-sample window", cfg.d)));
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for (bi, batch) in batches.enumerate() {
            let (y, cache) = model.forward_train(&batch.noisy)?;
            let (loss, grad) = l2_loss(&y, &batch.clean)?;
            let diverged = |detail: &str| Error::Diverged {
                epoch,
                batch: bi + 1,
                detail: detail.to_string(),
            };
            if !loss.is_finite() {
                return Err(diverged(&format!("loss is {loss}")));
            }
            let grads = model.backward(&cache, &grad)?;
            if !grads.is_finite() {
                return Err(diverged("non-finite gradient"));
            }
            model.adam_step(&mut opt, &grads)?;
            sum += loss * batch.windows.len() as f64;
            count += batch.windows.len();
        }
        let train_loss = sum / count as f64;
        let val_loss = validator.validation_loss(&model, epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                detail: format!("validation loss is {val_loss}"),
            });
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        let verdict = stopper.observe(epoch, val_loss);
        log::info!(
            "epoch {epoch}: train {train_loss:.6e}, validation {val_loss:.6e}{}",
            if verdict.improved { " *" } else { "" }
        );
        if verdict.improved {
            best = model.clone();
            if let Some(path) = &cfg.checkpoint {
                save_checkpoint(&best, path)?;
            }
        }
        if verdict.stop {
            reason = StopReason::Patience;
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopper.best();
    let history = TrainHistory {
        epochs,
        best_epoch,
        best_val_loss,
        stop_reason: reason,
    };
    if let Some(path) = &cfg.history {
        history.save_csv(path)?;
    }
    Ok(TrainOutcome { model: best, history })
}

/// Loads both corpora named in `cfg` and trains a fresh model.
pub fn train(cfg: &TrainConfig, model_cfg: FcnConfig, exec: Execution) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = FcnConfig { d: cfg.d, ..model_cfg };
    let train = load_pairs(&cfg.train_corpus, Split::Train, exec)?;
    let val_dir = cfg.validation_corpus.as_deref().unwrap_or(&cfg.train_corpus);
    let val = load_pairs(val_dir, Split::Validation, exec)?;
    if val.is_empty() {
        return Err(Error::Corpus(format!("{} has no validation records", val_dir.display())));
    }
    let mut validator = WindowValidator::new(&val, cfg.d, cfg.val_windows_per_record, cfg.batch_size)?;
    let mut model = FcnModel::new(model_cfg, cfg.seed)?;
    model.set_execution(exec);
    train_on(cfg, model, &train, &mut validator)
}
