//! R-peak detection on ECG-contaminated sEMG.
//!
//! Low-pass at 30 Hz, differentiate, square, centred moving average; peaks
//! of the envelope above `median + 3·MAD` are accepted greedily by height
//! subject to a refractory gap, then moved to the largest absolute
//! excursion of the low-passed signal nearby.
//!
//! Confidence is the correlation of each beat with the mean of all other
//! detected beats, so isolated bursts that happen to cross the threshold
//! score near zero.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{design_butterworth, filtfilt_slice, FilterKind};
use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrsConfig {
    pub lowpass_hz: f64,
    pub lowpass_order: usize,
    pub envelope_s: f64,
    pub refractory_s: f64,
    /// Threshold = median + `mad_factor` × MAD of the envelope.
    pub mad_factor: f64,
    /// Half-width of the search for the R extremum around an envelope peak.
    pub localize_s: f64,
    /// Peaks below this fraction of the median accepted height are dropped.
    pub min_relative_height: f64,
    /// Extent before and after the peak used for the confidence score.
    pub shape_window_s: (f64, f64),
}

impl Default for QrsConfig {
    fn default() -> Self {
        Self {
            lowpass_hz: 30.0,
            lowpass_order: 4,
            envelope_s: 0.10,
            refractory_s: 0.30,
            mad_factor: 3.0,
            localize_s: 0.05,
            min_relative_height: 0.2,
            shape_window_s: (0.2, 0.4),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QrsAnnotations {
    /// Strictly increasing sample indices.
    pub peak_indices: Vec<usize>,
    /// Leave-one-out beat-to-template correlation, in [0, 1].
    pub confidence: Vec<f64>,
    pub fs: f64,
}

impl QrsAnnotations {
    pub fn len(&self) -> usize {
        self.peak_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_indices.is_empty()
    }

    /// Peaks whose confidence is at least `min`.
    pub fn confident(&self, min: f64) -> QrsAnnotations {
        let (peak_indices, confidence) = self
            .peak_indices
            .iter()
            .zip(&self.confidence)
            .filter(|(_, &c)| c >= min)
            .map(|(&p, &c)| (p, c))
            .unzip();
        QrsAnnotations {
            peak_indices,
            confidence,
            fs: self.fs,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,time_s,confidence\n");
        for (&p, &c) in self.peak_indices.iter().zip(&self.confidence) {
            let _ = writeln!(s, "{p},{},{c}", p as f64 / self.fs);
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Centred moving average with a window of `w` samples (shrinks at edges).
fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(x.len());
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

pub fn detect_qrs(noisy: &SignalSegment, cfg: &QrsConfig) -> Result<QrsAnnotations> {
    let fs = noisy.fs();
    let mut out = QrsAnnotations {
        fs,
        ..Default::default()
    };
    let x = noisy.samples();
    let lp = design_butterworth(cfg.lowpass_order, FilterKind::Lowpass, &[cfg.lowpass_hz], fs)?;
    if x.len() <= 3 * cfg.lowpass_order + 2 {
        return Ok(out);
    }
    let y = filtfilt_slice(&lp, x)?;
    // Central difference keeps the envelope centred on the complex.
    let mut d2 = vec![0.0; y.len()];
    for i in 1..y.len() - 1 {
        d2[i] = ((y[i + 1] - y[i - 1]) * 0.5 * fs).powi(2);
    }
    let env = moving_average(&d2, ((cfg.envelope_s * fs).round() as usize).max(1));

    let mut scratch = env.clone();
    let med = median(&mut scratch);
    scratch.iter_mut().zip(&env).for_each(|(s, e)| *s = (e - med).abs());
    let mad = median(&mut scratch);
    let threshold = med + cfg.mad_factor * mad;
    if threshold <= 0.0 {
        return Ok(out);
    }

    let mut candidates: Vec<usize> = (1..env.len() - 1)
        .filter(|&i| env[i] > threshold && env[i] >= env[i - 1] && env[i] > env[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));
    let gap = (cfg.refractory_s * fs).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= gap) {
            accepted.push(c);
        }
    }
    if accepted.is_empty() {
        return Ok(out);
    }
    let mut heights: Vec<f64> = accepted.iter().map(|&i| env[i]).collect();
    let reference = median(&mut heights);
    accepted.retain(|&i| env[i] >= cfg.min_relative_height * reference);
    accepted.sort_unstable();

    let reach = (cfg.localize_s * fs).round() as usize;
    let mut peaks: Vec<(usize, f64)> = accepted
        .iter()
        .map(|&i| {
            let a = i.saturating_sub(reach);
            let b = (i + reach + 1).min(y.len());
            let r = (a..b).max_by(|&p, &q| y[p].abs().total_cmp(&y[q].abs())).unwrap_or(i);
            (r, env[i])
        })
        .collect();
    // Localization can pull neighbours closer than the refractory gap.
    peaks.dedup_by(|b, a| b.0 < a.0 + gap && {
        if b.1 > a.1 {
            *a = *b;
        }
        true
    });
    out.peak_indices = peaks.iter().map(|p| p.0).collect();
    let pre = (cfg.shape_window_s.0 * fs).round() as usize;
    let post = (cfg.shape_window_s.1 * fs).round() as usize;
    out.confidence = shape_confidence(x, &out.peak_indices, pre, post);
    Ok(out)
}

fn shape_confidence(x: &[f64], peaks: &[usize], pre: usize, post: usize) -> Vec<f64> {
    let width = pre + post + 1;
    let window = |p: usize| -> (usize, usize) {
        // Template offsets [lo, hi) that fall inside the signal.
        let lo = pre.saturating_sub(p);
        let hi = width.min(x.len() + pre - p);
        (lo, hi)
    };
    let mut sum = vec![0.0; width];
    let mut count = vec![0usize; width];
    for &p in peaks {
        let (lo, hi) = window(p);
        for j in lo..hi {
            sum[j] += x[p + j - pre];
            count[j] += 1;
        }
    }
    peaks
        .iter()
        .map(|&p| {
            let (lo, hi) = window(p);
            let mut pairs = Vec::with_capacity(hi - lo);
            for j in lo..hi {
                if count[j] > 1 {
                    let v = x[p + j - pre];
                    pairs.push((v, (sum[j] - v) / (count[j] - 1) as f64));
                }
            }
            pearson(&pairs).max(0.0)
        })
        .collect()
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
