//! Surrogate sEMG and ECG generators for desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::signal::SignalSegment;
use crate::dsp::{design_butterworth, filtfilt_slice, FilterKind};
use crate::error::{Error, Result};

/// Envelope gain applied inside activation windows (unit-RMS carrier).
pub const ACTIVE_GAIN: f64 = 1.0;
/// Envelope gain outside activation windows.
pub const REST_GAIN: f64 = 0.05;
/// Band of the shaping filter for the sEMG carrier.
pub const SEMG_BAND_HZ: (f64, f64) = (20.0, 500.0);
const SEMG_SHAPING_ORDER: usize = 4;
/// Corner of the gentle low-pass that tilts the carrier spectrum so its
/// mean frequency sits near 85 Hz, as in surface recordings.
pub const SEMG_ROLLOFF_HZ: f64 = 120.0;
const SEMG_ROLLOFF_ORDER: usize = 2;

/// One Gaussian component of the synthetic heartbeat.
#[derive(Debug, Clone, Copy)]
pub struct EcgWave {
    pub name: char,
    /// Centre relative to the R peak, seconds.
    pub offset_s: f64,
    pub amplitude: f64,
    /// Gaussian standard deviation, seconds.
    pub width_s: f64,
}

/// P-QRS-T morphology of the surrogate beat.
pub const ECG_WAVES: [EcgWave; 5] = [
    EcgWave { name: 'P', offset_s: -0.200, amplitude: 0.12, width_s: 0.025 },
    EcgWave { name: 'Q', offset_s: -0.025, amplitude: -0.12, width_s: 0.005 },
    EcgWave { name: 'R', offset_s: 0.000, amplitude: 1.00, width_s: 0.006 },
    EcgWave { name: 'S', offset_s: 0.025, amplitude: -0.22, width_s: 0.006 },
    EcgWave { name: 'T', offset_s: 0.280, amplitude: 0.30, width_s: 0.045 },
];
/// Support of one beat around its R peak; the waveform is exactly zero outside.
pub const ECG_BEAT_EXTENT_S: (f64, f64) = (0.35, 0.50);
/// Relative beat-amplitude spread per unit of heart-rate jitter.
const AMPLITUDE_JITTER_RATIO: f64 = 1.0;

/// Inclusive start, exclusive end, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationWindow {
    pub start_s: f64,
    pub end_s: f64,
}

impl ActivationWindow {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }
}

/// Amplitude-modulated, band-limited Gaussian noise with an activation mask.
pub fn synth_semg(duration_s: f64, fs: f64, windows: &[ActivationWindow], seed: u64) -> Result<SignalSegment> {
    if fs < 1000.0 {
        return Err(Error::InvalidArgument(format!("sEMG surrogate needs fs >= 1000 Hz, got {fs}")));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration_s}")));
    }
    let mut sorted = windows.to_vec();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for w in &sorted {
        if !(w.start_s >= 0.0 && w.start_s < w.end_s && w.end_s <= duration_s) {
            return Err(Error::InvalidArgument(format!(
                "activation window {:.3}..{:.3} s outside 0..{duration_s} s",
                w.start_s, w.end_s
            )));
        }
    }
    if let Some(p) = sorted.windows(2).find(|p| p[1].start_s < p[0].end_s) {
        return Err(Error::InvalidArgument(format!(
            "activation windows overlap: {:.3}..{:.3} and {:.3}..{:.3} s",
            p[0].start_s, p[0].end_s, p[1].start_s, p[1].end_s
        )));
    }

    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let shaping = semg_shaping_filter(fs)?;
    let mut carrier = filtfilt_slice(&shaping, &white)?;
    let rolloff = design_butterworth(SEMG_ROLLOFF_ORDER, FilterKind::Lowpass, &[SEMG_ROLLOFF_HZ], fs)?;
    carrier = filtfilt_slice(&rolloff, &carrier)?;
    let rms = (carrier.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    carrier.iter_mut().for_each(|v| *v /= rms);

    let mut mask = vec![false; n];
    for w in &sorted {
        let a = ((w.start_s * fs).round() as usize).min(n);
        let b = ((w.end_s * fs).round() as usize).min(n);
        mask[a..b].iter_mut().for_each(|m| *m = true);
    }
    let samples = carrier
        .iter()
        .zip(&mask)
        .map(|(v, &m)| v * if m { ACTIVE_GAIN } else { REST_GAIN })
        .collect();
    SignalSegment::with_mask(samples, fs, Some(mask))
}

/// The zero-phase shaping applied to the sEMG carrier: band-pass 20–500 Hz,
/// or high-pass 20 Hz when 500 Hz is not below Nyquist.
pub fn semg_shaping_filter(fs: f64) -> Result<crate::dsp::BiquadCascade> {
    let (lo, hi) = SEMG_BAND_HZ;
    if hi < fs / 2.0 {
        design_butterworth(SEMG_SHAPING_ORDER, FilterKind::Bandpass, &[lo, hi], fs)
    } else {
        design_butterworth(SEMG_SHAPING_ORDER, FilterKind::Highpass, &[lo], fs)
    }
}

/// A synthetic ECG and the sample index of every R peak.
#[derive(Debug, Clone)]
pub struct SyntheticEcg {
    pub signal: SignalSegment,
    pub r_peaks: Vec<usize>,
}

/// Quasi-periodic beat train. RR intervals are `60 / mean_hr_bpm` seconds
/// scaled by `1 + hr_jitter·z` (z standard normal, clamped to ±40 %); beat
/// amplitudes vary by the same relative spread. The first R peak sits half an
/// interval after the start. With zero jitter every beat is identical.
pub fn synth_ecg(duration_s: f64, fs: f64, mean_hr_bpm: f64, hr_jitter: f64, seed: u64) -> Result<SyntheticEcg> {
    if !(30.0..=200.0).contains(&mean_hr_bpm) {
        return Err(Error::InvalidArgument(format!("heart rate must be in 30..=200 bpm, got {mean_hr_bpm}")));
    }
    if !(hr_jitter.is_finite() && hr_jitter >= 0.0) {
        return Err(Error::InvalidArgument(format!("jitter must be non-negative, got {hr_jitter}")));
    }
    if !(fs.is_finite() && fs > 0.0 && duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid duration {duration_s} s or rate {fs} Hz")));
    }
    let n = (duration_s * fs).round() as usize;
    let rr = 60.0 / mean_hr_bpm;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pre = (ECG_BEAT_EXTENT_S.0 * fs).ceil() as i64;
    let post = (ECG_BEAT_EXTENT_S.1 * fs).ceil() as i64;
    let beat: Vec<f64> = (-pre..=post).map(|k| beat_value(k as f64 / fs)).collect();

    let mut samples = vec![0.0; n];
    let mut r_peaks = Vec::new();
    let mut t = rr / 2.0;
    while t < duration_s {
        let r = (t * fs).round() as i64;
        if r >= n as i64 {
            break;
        }
        let amplitude = if hr_jitter > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            (1.0 + AMPLITUDE_JITTER_RATIO * hr_jitter * z).max(0.5)
        } else {
            1.0
        };
        for (j, &b) in beat.iter().enumerate() {
            let idx = r - pre + j as i64;
            if (0..n as i64).contains(&idx) {
                samples[idx as usize] += amplitude * b;
            }
        }
        r_peaks.push(r as usize);
        let step = if hr_jitter > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            rr * (1.0 + hr_jitter * z).clamp(0.6, 1.4)
        } else {
            rr
        };
        t += step;
    }
    Ok(SyntheticEcg {
        signal: SignalSegment::new(samples, fs)?,
        r_peaks,
    })
}

fn beat_value(t: f64) -> f64 {
    ECG_WAVES
        .iter()
        .map(|w| w.amplitude * (-0.5 * ((t - w.offset_s) / w.width_s).powi(2)).exp())
        .sum()
}
