use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::TsConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::mixer::CorpusConfig;

/// Lowest and highest SNR a plan may ask for, dB.
pub const SNR_LIMITS_DB: (f64, f64) = (-20.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hp,
    Ts,
    Fcn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hp, Method::Ts, Method::Fcn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hp => "hp",
            Method::Ts => "ts",
            Method::Fcn => "fcn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hp" => Ok(Method::Hp),
            "ts" => Ok(Method::Ts),
            "fcn" => Ok(Method::Fcn),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?} (expected hp, ts or fcn)"))),
        }
    }
}

/// Shape of the surrogate dataset written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogatePlan {
    pub fs: f64,
    pub segment_s: f64,
    pub train_segments: usize,
    pub validation_segments: usize,
    pub test_segments: usize,
    /// Channel label of every training and validation segment.
    pub train_channel: u32,
    /// Test segments are dealt round-robin over these channels.
    pub test_channels: Vec<u32>,
    /// Distinct ECG subjects available to the training/validation splits.
    pub train_ecg_subjects: usize,
    /// Distinct ECG subjects reserved for the test split.
    pub test_ecg_subjects: usize,
    pub ecg_s: f64,
    /// Movement and rest durations of the activation protocol.
    pub active_s: f64,
    pub rest_s: f64,
    /// Zero-phase band applied to every ECG source before mixing.
    pub ecg_band_hz: (f64, f64),
    pub ecg_filter_order: usize,
}

impl Default for SurrogatePlan {
    fn default() -> Self {
        Self {
            fs: 1000.0,
            segment_s: 60.0,
            train_segments: 40,
            validation_segments: 8,
            test_segments: 16,
            train_channel: 2,
            test_channels: vec![9, 10, 11, 12],
            train_ecg_subjects: 14,
            test_ecg_subjects: 4,
            ecg_s: 120.0,
            active_s: 5.0,
            rest_s: 3.0,
            ecg_band_hz: (10.0, 200.0),
            ecg_filter_order: 3,
        }
    }
}

/// Training settings; corpus paths are filled in by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub d: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub windows_per_record: usize,
    pub val_windows_per_record: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            d: 1024,
            batch_size: 32,
            max_epochs: 30,
            patience: 15,
            lr: 1e-3,
            windows_per_record: 1,
            val_windows_per_record: 2,
        }
    }
}

/// Which record the waveform table is cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformPlan {
    pub channel: u32,
    pub snr_db: f64,
    pub start_s: f64,
    pub duration_s: f64,
}

impl Default for WaveformPlan {
    fn default() -> Self {
        Self {
            channel: 11,
            snr_db: -10.0,
            start_s: 0.0,
            duration_s: 5.0,
        }
    }
}

/// Everything `run` needs to reproduce the experiment grid end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub methods: Vec<Method>,
    pub surrogate: SurrogatePlan,
    pub corpus: CorpusConfig,
    pub train: TrainSettings,
    pub ts: TsConfig,
    pub metrics: MetricsConfig,
    pub waveform: WaveformPlan,
    /// Input SNRs of the per-channel four-criteria table.
    pub criteria_snrs_db: Vec<f64>,
    pub criteria_channel: u32,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("run"),
            methods: Method::ALL.to_vec(),
            surrogate: SurrogatePlan::default(),
            corpus: CorpusConfig {
                train_pairings: 3,
                ..CorpusConfig::default()
            },
            train: TrainSettings::default(),
            ts: TsConfig::default(),
            metrics: MetricsConfig::default(),
            waveform: WaveformPlan::default(),
            criteria_snrs_db: vec![-8.0, -10.0, -12.0],
            criteria_channel: 11,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        let (lo, hi) = SNR_LIMITS_DB;
        for (name, grid) in [("train", &self.corpus.train_snrs_db), ("test", &self.corpus.test_snrs_db)] {
            if grid.is_empty() {
                return bad(format!("{name} SNR grid is empty"));
            }
            if let Some(v) = grid.iter().find(|v| !(lo..=hi).contains(*v)) {
                return bad(format!("{name} SNR {v} dB lies outside [{lo}, {hi}] dB"));
            }
        }
        let s = &self.surrogate;
        if s.train_segments == 0 || s.validation_segments == 0 || s.test_segments == 0 {
            return bad("every split needs at least one sEMG segment".into());
        }
        if s.test_channels.is_empty() {
            return bad("at least one test channel is required".into());
        }
        if s.train_ecg_subjects < self.corpus.train_pairings || s.test_ecg_subjects < self.corpus.test_pairings {
            return bad("fewer ECG subjects than pairings per segment".into());
        }
        if !(s.active_s > 0.0 && s.rest_s >= 0.0 && s.segment_s > 0.0 && s.ecg_s > 0.0) {
            return bad("surrogate durations must be positive".into());
        }
        if self.methods.contains(&Method::Fcn) {
            if self.train.d == 0 || !self.train.d.is_multiple_of(4) {
                return bad("window length must be a positive multiple of 4".into());
            }
            if (self.train.d as f64) > s.segment_s * s.fs {
                return bad(format!("window of {} samples exceeds the segment length", self.train.d));
            }
        }
        Ok(())
    }

    /// Reads TOML (`.toml`) or JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::format(path, "experiment plan", e))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::format(path, "experiment plan", e))?
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn has(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join("dataset")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out_dir.join("corpus")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join("fcn.ckpt")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }

    pub fn report_path(&self, method: Method) -> PathBuf {
        self.reports_dir().join(format!("{method}.csv"))
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.out_dir.join("tables")
    }
}
