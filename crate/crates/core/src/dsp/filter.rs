use crate::dsp::butterworth::BiquadCascade;
use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

/// Transposed direct-form II state for each section.
fn steady_state(cascade: &BiquadCascade) -> Vec<[f64; 2]> {
    let mut level = 1.0;
    cascade
        .sections
        .iter()
        .map(|s| {
            let g = s.dc_gain();
            let s2 = (s.b2 - s.a2 * g) * level;
            let s1 = (s.b1 - s.a1 * g) * level + s2;
            level *= g;
            [s1, s2]
        })
        .collect()
}

fn run_sections(cascade: &BiquadCascade, data: &mut [f64], init: &[[f64; 2]], scale: f64) {
    for (s, zi) in cascade.sections.iter().zip(init) {
        let (mut s1, mut s2) = (zi[0] * scale, zi[1] * scale);
        for v in data.iter_mut() {
            let x = *v;
            let y = s.b0 * x + s1;
            s1 = s.b1 * x - s.a1 * y + s2;
            s2 = s.b2 * x - s.a2 * y;
            *v = y;
        }
    }
}

/// Single-pass causal filtering from rest.
pub fn lfilter(cascade: &BiquadCascade, x: &SignalSegment) -> Result<SignalSegment> {
    check_rate(cascade, x)?;
    let mut y = x.samples().to_vec();
    let zeros = vec![[0.0; 2]; cascade.sections.len()];
    run_sections(cascade, &mut y, &zeros, 0.0);
    x.with_samples(y)
}

/// Zero-phase forward-backward filtering.
///
/// The input is extended at both ends by odd reflection of `3 × order`
/// samples and each pass starts from the steady state for its first sample.
pub fn filtfilt(cascade: &BiquadCascade, x: &SignalSegment) -> Result<SignalSegment> {
    check_rate(cascade, x)?;
    let y = filtfilt_slice(cascade, x.samples())?;
    x.with_samples(y)
}

pub(crate) fn filtfilt_slice(cascade: &BiquadCascade, x: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * cascade.order;
    let n = x.len();
    if n <= pad {
        return Err(Error::TooShort { needed: pad, got: n });
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let zi = steady_state(cascade);
    let start = ext[0];
    run_sections(cascade, &mut ext, &zi, start);
    ext.reverse();
    let start = ext[0];
    run_sections(cascade, &mut ext, &zi, start);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

fn check_rate(cascade: &BiquadCascade, x: &SignalSegment) -> Result<()> {
    if (cascade.fs - x.fs()).abs() > 1e-9 * cascade.fs {
        return Err(Error::RateMismatch {
            left: cascade.fs,
            right: x.fs(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dsp::{design_butterworth, FilterKind};

    fn hp40() -> BiquadCascade {
        design_butterworth(4, FilterKind::Highpass, &[40.0], 1000.0).unwrap()
    }

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    /// Sine amplitude from RMS over whole periods.
    fn rms_amplitude(x: &[f64]) -> f64 {
        (2.0 * x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn constant_is_rejected_by_highpass() {
        let x = SignalSegment::new(vec![3.0; 2000], 1000.0).unwrap();
        let y = filtfilt(&hp40(), &x).unwrap();
        let peak = y.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-6 * 3.0, "{peak}");
    }

    #[test]
    fn passband_sine_amplitude_matches_squared_response() {
        let c = hp40();
        let expected = c.magnitude(100.0).powi(2);
        let x = SignalSegment::new(sine(100.0, 1000.0, 4000), 1000.0).unwrap();
        let y = filtfilt(&c, &x).unwrap();
        let amp = rms_amplitude(&y.samples()[1000..3000]);
        assert!((amp - expected).abs() < 2e-3, "{amp} vs {expected}");
        assert!((amp - 1.0).abs() < 0.02);
    }

    #[test]
    fn impulse_response_is_even() {
        let n = 4001;
        let mut x = vec![0.0; n];
        x[n / 2] = 1.0;
        let y = filtfilt_slice(&hp40(), &x).unwrap();
        for k in 1..n / 2 {
            assert!((y[n / 2 - k] - y[n / 2 + k]).abs() < 1e-12, "lag {k}");
        }
    }

    #[test]
    fn too_short_is_error() {
        let x = SignalSegment::new(vec![1.0; 12], 1000.0).unwrap();
        assert!(matches!(filtfilt(&hp40(), &x), Err(Error::TooShort { .. })));
        let x = SignalSegment::new(vec![1.0; 13], 1000.0).unwrap();
        assert!(filtfilt(&hp40(), &x).is_ok());
    }

    #[test]
    fn rate_mismatch_is_error() {
        let x = SignalSegment::new(vec![1.0; 100], 2000.0).unwrap();
        assert!(matches!(filtfilt(&hp40(), &x), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn causal_pass_has_single_pass_gain() {
        let c = hp40();
        let x = SignalSegment::new(sine(100.0, 1000.0, 4000), 1000.0).unwrap();
        let y = lfilter(&c, &x).unwrap();
        let amp = rms_amplitude(&y.samples()[2000..]);
        assert!((amp - c.magnitude(100.0)).abs() < 2e-3);
    }
}
