use serde::{Deserialize, Serialize};

use super::qrs::{detect_qrs, QrsAnnotations, QrsConfig};
use super::hp_remove;
use crate::dsp::{design_butterworth, filtfilt_slice, FilterKind};
use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

const TEMPLATE_LP_ORDER: usize = 4;

/// Ensemble-averaged beat; `waveform[pre]` is aligned with the R peak.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgTemplate {
    pub waveform: Vec<f64>,
    pub pre: usize,
    pub post: usize,
}

impl EcgTemplate {
    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsConfig {
    pub pre_s: f64,
    pub post_s: f64,
    /// Detections below this confidence are ignored.
    pub min_confidence: f64,
    /// Each beat is re-aligned to the first-pass template within ± this lag.
    pub align_s: f64,
    /// Zero-phase low-pass applied to the averaged template; `None` keeps the raw mean.
    pub template_lowpass_hz: Option<f64>,
    pub qrs: QrsConfig,
}

impl Default for TsConfig {
    fn default() -> Self {
        Self {
            pre_s: 0.25,
            post_s: 0.45,
            min_confidence: 0.5,
            align_s: 0.02,
            template_lowpass_hz: Some(100.0),
            qrs: QrsConfig::default(),
        }
    }
}

/// Pointwise mean of the windows `[p - pre, p + post]` around each peak.
/// Windows that would cross either end of the signal are skipped.
pub fn build_template(noisy: &SignalSegment, ann: &QrsAnnotations, pre_s: f64, post_s: f64) -> Result<EcgTemplate> {
    let pre = (pre_s * noisy.fs()).round() as usize;
    let post = (post_s * noisy.fs()).round() as usize;
    template_from_peaks(noisy.samples(), &ann.peak_indices, pre, post)
}

fn full_windows<'a>(peaks: &'a [usize], pre: usize, post: usize, len: usize) -> impl Iterator<Item = usize> + 'a {
    peaks.iter().copied().filter(move |&p| p >= pre && p + post < len)
}

fn template_from_peaks(x: &[f64], peaks: &[usize], pre: usize, post: usize) -> Result<EcgTemplate> {
    let width = pre + post + 1;
    let mut sum = vec![0.0; width];
    let mut count = 0usize;
    for p in full_windows(peaks, pre, post, x.len()) {
        sum.iter_mut().zip(&x[p - pre..=p + post]).for_each(|(s, v)| *s += v);
        count += 1;
    }
    if count < 3 {
        return Err(Error::InsufficientBeats { found: count });
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    Ok(EcgTemplate {
        waveform: sum,
        pre,
        post,
    })
}

/// Subtracts `a_k · template` at every peak, with `a_k` the least-squares
/// amplitude fitted to the current residual over the overlap of the
/// template with the signal. Samples further than the template extent from
/// every peak are untouched.
pub fn subtract_template(x: &mut [f64], template: &EcgTemplate, peaks: &[usize]) {
    let len = x.len() as i64;
    for &p in peaks {
        let start = p as i64 - template.pre as i64;
        let lo = (-start).max(0) as usize;
        let hi = ((len - start).min(template.len() as i64)).max(0) as usize;
        if lo >= hi {
            continue;
        }
        let t = &template.waveform[lo..hi];
        let base = (start + lo as i64) as usize;
        let seg = &mut x[base..base + (hi - lo)];
        let tt: f64 = t.iter().map(|v| v * v).sum();
        if tt == 0.0 {
            continue;
        }
        let a = t.iter().zip(seg.iter()).map(|(u, v)| u * v).sum::<f64>() / tt;
        seg.iter_mut().zip(t).for_each(|(v, u)| *v -= a * u);
    }
}

/// Shifts each peak within `± reach` to maximize correlation with `template`.
fn realign(x: &[f64], peaks: &[usize], template: &EcgTemplate, reach: usize) -> Vec<usize> {
    let (pre, post) = (template.pre, template.post);
    let mut out: Vec<usize> = peaks
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(reach).max(pre);
            let hi = (p + reach).min(x.len().saturating_sub(post + 1));
            if lo > hi {
                return p;
            }
            (lo..=hi)
                .max_by(|&a, &b| {
                    let c = |q: usize| -> f64 {
                        template.waveform.iter().zip(&x[q - pre..=q + post]).map(|(u, v)| u * v).sum()
                    };
                    c(a).total_cmp(&c(b)).then(b.cmp(&a))
                })
                .unwrap_or(p)
        })
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct TsOutcome {
    pub signal: SignalSegment,
    /// Set when fewer than three usable beats were found and only HP ran.
    pub fallback: bool,
    pub beats: usize,
    pub template: Option<EcgTemplate>,
}

/// Template subtraction followed by the HP remover. Falls back to HP alone
/// when no usable template can be formed.
pub fn ts_remove(noisy: &SignalSegment, cfg: &TsConfig) -> Result<TsOutcome> {
    let ann = detect_qrs(noisy, &cfg.qrs)?.confident(cfg.min_confidence);
    let fallback = || -> Result<TsOutcome> {
        Ok(TsOutcome {
            signal: hp_remove(noisy)?,
            fallback: true,
            beats: 0,
            template: None,
        })
    };
    let first = match build_template(noisy, &ann, cfg.pre_s, cfg.post_s) {
        Ok(t) => t,
        Err(Error::InsufficientBeats { .. }) => return fallback(),
        Err(e) => return Err(e),
    };
    let x = noisy.samples();
    let reach = (cfg.align_s * noisy.fs()).round() as usize;
    let peaks = realign(x, &ann.peak_indices, &first, reach);
    let mut template = match template_from_peaks(x, &peaks, first.pre, first.post) {
        Ok(t) => t,
        Err(Error::InsufficientBeats { .. }) => return fallback(),
        Err(e) => return Err(e),
    };
    if let Some(fc) = cfg.template_lowpass_hz.filter(|&fc| fc < 0.5 * noisy.fs()) {
        let lp = design_butterworth(TEMPLATE_LP_ORDER, FilterKind::Lowpass, &[fc], noisy.fs())?;
        if template.len() > 3 * TEMPLATE_LP_ORDER {
            template.waveform = filtfilt_slice(&lp, &template.waveform)?;
        }
    }
    let mut residual = x.to_vec();
    subtract_template(&mut residual, &template, &peaks);
    let signal = hp_remove(&noisy.with_samples(residual)?)?;
    Ok(TsOutcome {
        signal,
        fallback: false,
        beats: peaks.len(),
        template: Some(template),
    })
}
