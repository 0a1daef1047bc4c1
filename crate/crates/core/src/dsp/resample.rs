//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

/// Taps per polyphase branch, counted at the lower of the two rates.
pub const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.9;
const MAX_PHASES: u64 = 1 << 16;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / bessel_i0(KAISER_BETA)
}

fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    }
}

/// Reduced up/down factors for converting `fs_from` to `fs_to`, resolved to
/// millihertz.
pub fn rational_factors(fs_from: f64, fs_to: f64) -> Result<(u64, u64)> {
    let a = (fs_from * 1000.0).round() as u64;
    let b = (fs_to * 1000.0).round() as u64;
    if a == 0 || b == 0 {
        return Err(Error::InvalidArgument(format!("cannot resample {fs_from} Hz -> {fs_to} Hz")));
    }
    let g = gcd(a, b);
    let (up, down) = (b / g, a / g);
    if up > MAX_PHASES || down > MAX_PHASES {
        return Err(Error::InvalidArgument(format!(
            "rate ratio {fs_to}/{fs_from} reduces to {up}/{down}, too many phases"
        )));
    }
    Ok((up, down))
}

struct Phase {
    /// Input offset relative to `q` (sample index = q - j) and its weight.
    taps: Vec<(i64, f64)>,
}

fn build_phases(up: u64, down: u64) -> Vec<Phase> {
    let up_i = up as i64;
    // Cutoff in cycles per upsampled sample.
    let fc = 0.5 * ROLLOFF / up.max(down) as f64;
    let half_width = (TAPS_PER_PHASE as f64 / 2.0) * up.max(down) as f64;
    (0..up_i)
        .map(|phi| {
            let j_lo = ((-half_width - phi as f64) / up as f64).ceil() as i64;
            let j_hi = ((half_width - phi as f64) / up as f64).floor() as i64;
            let mut taps: Vec<(i64, f64)> = (j_lo..=j_hi)
                .map(|j| {
                    let t = (phi + j * up_i) as f64;
                    (j, 2.0 * fc * sinc(2.0 * fc * t) * kaiser(t / half_width))
                })
                .collect();
            let sum: f64 = taps.iter().map(|(_, w)| w).sum();
            taps.iter_mut().for_each(|(_, w)| *w /= sum);
            Phase { taps }
        })
        .collect()
}

/// Resamples to `fs_to`. Output length is `round(len · fs_to / fs_from)`.
///
/// Samples beyond the ends are taken as the nearest edge sample, so DC is
/// preserved exactly. The activation mask, if any, is carried over by
/// nearest-sample lookup.
pub fn resample(x: &SignalSegment, fs_to: f64) -> Result<SignalSegment> {
    if !(fs_to.is_finite() && fs_to > 0.0) {
        return Err(Error::InvalidArgument(format!("target rate must be positive, got {fs_to}")));
    }
    let (up, down) = rational_factors(x.fs(), fs_to)?;
    let out_len = (x.len() as f64 * fs_to / x.fs()).round() as usize;
    let samples = if up == down {
        x.samples().to_vec()
    } else {
        resample_slice(x.samples(), up, down, out_len)
    };
    let mask = x.mask().map(|m| {
        (0..out_len)
            .map(|n| {
                let src = ((n as f64 * down as f64 / up as f64).round() as usize).min(m.len().saturating_sub(1));
                m.get(src).copied().unwrap_or(false)
            })
            .collect()
    });
    SignalSegment::with_mask(samples, fs_to, mask)
}

fn resample_slice(x: &[f64], up: u64, down: u64, out_len: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; out_len];
    }
    let phases = build_phases(up, down);
    let last = x.len() as i64 - 1;
    (0..out_len as u64)
        .map(|n| {
            let pos = n * down;
            let q = (pos / up) as i64;
            let phase = &phases[(pos % up) as usize];
            phase
                .taps
                .iter()
                .map(|&(j, w)| w * x[(q - j).clamp(0, last) as usize])
                .sum()
        })
        .collect()
}
