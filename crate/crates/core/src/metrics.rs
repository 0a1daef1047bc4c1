//! Reconstruction and feature-error metrics.
//!
//! * RMSE between reference and estimate.
//! * SNR of a noisy or denoised signal relative to the clean reference, and
//!   the improvement `snr_out - snr_in`.
//! * ARV (mean rectified value per non-overlapping window) and MF (amplitude
//!   spectrum centroid per active 1-s frame), compared via RMSE of the
//!   feature vectors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::stft_mag;
use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// ARV window length in samples.
    pub arv_window: usize,
    /// MF band edges, Hz, inclusive.
    pub mf_band_hz: (f64, f64),
    pub frame_s: f64,
    /// Fraction of a frame's samples that must be active for MF to use it.
    pub min_active_fraction: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            arv_window: 1000,
            mf_band_hz: (10.0, 500.0),
            frame_s: 1.0,
            min_active_fraction: 0.95,
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn rmse(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_len(reference, estimate)?;
    if reference.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / reference.len() as f64).sqrt())
}

/// `10·log10(Σx² / Σ(x − y)²)`. A perfect estimate yields `+∞`.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_len(reference, estimate)?;
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::ZeroPower);
    }
    let residual: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}

/// SNR of the contaminated input.
pub fn snr_in(clean: &[f64], noisy: &[f64]) -> Result<f64> {
    snr_db(clean, noisy)
}

/// SNR of the denoised output.
pub fn snr_out(clean: &[f64], denoised: &[f64]) -> Result<f64> {
    snr_db(clean, denoised)
}

pub fn snr_imp(clean: &[f64], noisy: &[f64], denoised: &[f64]) -> Result<f64> {
    Ok(snr_out(clean, denoised)? - snr_in(clean, noisy)?)
}

/// Mean absolute value per consecutive window of `window` samples.
pub fn arv_series(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("ARV window must be positive".into()));
    }
    if x.len() < window {
        return Err(Error::TooShort {
            needed: window - 1,
            got: x.len(),
        });
    }
    Ok(x.chunks_exact(window)
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / window as f64)
        .collect())
}

/// Mean-frequency feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MfSeries {
    pub values: Vec<f64>,
    /// Index of the frame each value came from.
    pub frames: Vec<usize>,
}

impl MfSeries {
    /// True when no frame qualified as active.
    pub fn is_flagged_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Amplitude-spectrum centroid within the MF band for every frame whose
/// samples are (almost) all active. A frame with no energy in the band
/// reports the band centre.
pub fn mf_series(x: &SignalSegment, mask: &[bool], cfg: &MetricsConfig) -> Result<MfSeries> {
    if mask.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: mask.len(),
        });
    }
    let (lo, hi) = cfg.mf_band_hz;
    if !(0.0 <= lo && lo < hi && hi <= x.fs() / 2.0) {
        return Err(Error::InvalidArgument(format!("MF band {lo}..{hi} Hz invalid at {} Hz", x.fs())));
    }
    let spec = stft_mag(x, cfg.frame_s)?;
    let n = spec.frame_len;
    let band: Vec<usize> = (0..spec.freqs.len())
        .filter(|&k| spec.freqs[k] >= lo && spec.freqs[k] <= hi)
        .collect();
    let mut out = MfSeries {
        values: Vec::new(),
        frames: Vec::new(),
    };
    for (i, frame) in spec.frames.iter().enumerate() {
        let active = mask[i * n..(i + 1) * n].iter().filter(|&&m| m).count();
        if (active as f64) < cfg.min_active_fraction * n as f64 {
            continue;
        }
        let (num, den) = band.iter().fold((0.0, 0.0), |(num, den), &k| {
            (num + spec.freqs[k] * frame[k], den + frame[k])
        });
        out.values.push(if den > 0.0 { num / den } else { 0.5 * (lo + hi) });
        out.frames.push(i);
    }
    Ok(out)
}

/// RMSE between two feature vectors.
pub fn feature_rmse(clean_features: &[f64], denoised_features: &[f64]) -> Result<f64> {
    rmse(clean_features, denoised_features)
}

/// Per-record results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub snr_in: f64,
    pub snr_out: f64,
    pub snr_imp: f64,
    pub rmse: f64,
    pub arv_rmse: f64,
    /// NaN when the record has no active frame.
    pub mf_rmse: f64,
}

/// Scores one denoised output. The activation mask is taken from `clean`;
/// without one every sample counts as active.
pub fn evaluate_record(
    clean: &SignalSegment,
    noisy: &SignalSegment,
    denoised: &SignalSegment,
    cfg: &MetricsConfig,
) -> Result<RecordMetrics> {
    let (x, xn, xd) = (clean.samples(), noisy.samples(), denoised.samples());
    let snr_in = snr_in(x, xn)?;
    let snr_out = snr_out(x, xd)?;
    let arv_rmse = feature_rmse(&arv_series(x, cfg.arv_window)?, &arv_series(xd, cfg.arv_window)?)?;
    let all_active;
    let mask = match clean.mask() {
        Some(m) => m,
        None => {
            all_active = vec![true; clean.len()];
            &all_active
        }
    };
    let mf_clean = mf_series(clean, mask, cfg)?;
    let mf_rmse = if mf_clean.is_flagged_empty() {
        f64::NAN
    } else {
        feature_rmse(&mf_clean.values, &mf_series(denoised, mask, cfg)?.values)?
    };
    Ok(RecordMetrics {
        snr_in,
        snr_out,
        snr_imp: snr_out - snr_in,
        rmse: rmse(x, xd)?,
        arv_rmse,
        mf_rmse,
    })
}

/// One line of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// `"all"` on aggregate rows spanning channels.
    pub channel: String,
    pub target_snr_db: f64,
    /// `"mean"` on aggregate rows.
    pub record_id: String,
    pub metrics: RecordMetrics,
}

pub const REPORT_HEADER: &str = "method,channel,target_snr_db,record_id,snr_in,snr_out,snr_imp,rmse,arv_rmse,mf_rmse";
pub const AGGREGATE_ID: &str = "mean";

/// Formats a float for the report: shortest round-trip form, `inf`/`-inf`/`nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

/// Per-record rows for one or more methods.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.channel,
                fmt_f64(r.target_snr_db),
                r.record_id,
                fmt_f64(m.snr_in),
                fmt_f64(m.snr_out),
                fmt_f64(m.snr_imp),
                fmt_f64(m.rmse),
                fmt_f64(m.arv_rmse),
                fmt_f64(m.mf_rmse),
            );
        }
        s
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_HEADER) {
            return Err(Error::format(path, "report header", "unexpected columns"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.trim().split(',').collect();
            let bad = || Error::format(path, "report row", format!("line {}: {line:?}", i + 2));
            if f.len() != 10 {
                return Err(bad());
            }
            let num = |k: usize| parse_f64(f[k]).ok_or_else(bad);
            rows.push(ReportRow {
                method: f[0].to_string(),
                channel: f[1].to_string(),
                target_snr_db: num(2)?,
                record_id: f[3].to_string(),
                metrics: RecordMetrics {
                    snr_in: num(4)?,
                    snr_out: num(5)?,
                    snr_imp: num(6)?,
                    rmse: num(7)?,
                    arv_rmse: num(8)?,
                    mf_rmse: num(9)?,
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Per-record rows only.
    pub fn records(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.record_id != AGGREGATE_ID)
    }

    /// Plain means of per-record rows grouped by `key`. Groups come out in
    /// key order.
    pub fn aggregate_by<K, F>(&self, key: F) -> BTreeMap<K, (RecordMetrics, usize)>
    where
        K: Ord,
        F: Fn(&ReportRow) -> K,
    {
        let mut groups: BTreeMap<K, Vec<&RecordMetrics>> = BTreeMap::new();
        for r in self.records() {
            groups.entry(key(r)).or_default().push(&r.metrics);
        }
        groups
            .into_iter()
            .map(|(k, ms)| {
                let n = ms.len();
                (k, (mean_metrics(&ms), n))
            })
            .collect()
    }

    /// Aggregate rows: one per (method, target SNR) across channels.
    pub fn aggregate_rows(&self) -> Vec<ReportRow> {
        self.aggregate_by(|r| (r.method.clone(), OrdF64(r.target_snr_db)))
            .into_iter()
            .map(|((method, snr), (metrics, _))| ReportRow {
                method,
                channel: "all".into(),
                target_snr_db: snr.0,
                record_id: AGGREGATE_ID.into(),
                metrics,
            })
            .collect()
    }
}

/// Means field by field; `snr_imp` stays the exact difference of the means.
pub fn mean_metrics(ms: &[&RecordMetrics]) -> RecordMetrics {
    let n = ms.len() as f64;
    let mean = |f: fn(&RecordMetrics) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
    let snr_in = mean(|m| m.snr_in);
    let snr_out = mean(|m| m.snr_out);
    RecordMetrics {
        snr_in,
        snr_out,
        snr_imp: snr_out - snr_in,
        rmse: mean(|m| m.rmse),
        arv_rmse: mean(|m| m.arv_rmse),
        mf_rmse: mean(|m| m.mf_rmse),
    }
}

/// Total order wrapper for grouping by float keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
