//! Preprocessing and spectral primitives: Butterworth design, zero-phase
//! filtering, resampling, normalization, segmentation and STFT.

mod butterworth;
mod filter;
mod resample;
mod spectrum;

pub use butterworth::{design_butterworth, Biquad, BiquadCascade, FilterKind, MAX_ORDER};
pub use filter::{filtfilt, lfilter};
pub(crate) use filter::filtfilt_slice;
pub use resample::{rational_factors, resample, TAPS_PER_PHASE};
pub use spectrum::{stft_mag, Spectrogram};

use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

/// Divides by the maximum absolute value. Returns the normalized segment and
/// the scale needed to undo it.
pub fn normalize_max_abs(x: &SignalSegment) -> Result<(SignalSegment, f64)> {
    let scale = x.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroPower);
    }
    let y = x.samples().iter().map(|v| v / scale).collect();
    Ok((x.with_samples(y)?, scale))
}

/// Cuts consecutive non-overlapping windows of `seconds`; a trailing
/// remainder shorter than one window is dropped.
pub fn segment(x: &SignalSegment, seconds: f64) -> Result<Vec<SignalSegment>> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {seconds} s")));
    }
    let win = (seconds * x.fs()).round() as usize;
    if win == 0 {
        return Err(Error::InvalidArgument(format!("window of {seconds} s is empty at {} Hz", x.fs())));
    }
    (0..x.len() / win).map(|i| x.slice(i * win, (i + 1) * win)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_definition() {
        let x = SignalSegment::new(vec![0.5, -2.0, 1.0], 1000.0).unwrap();
        let (y, scale) = normalize_max_abs(&x).unwrap();
        assert_eq!(y.samples(), &[0.25, -1.0, 0.5]);
        assert_eq!(scale, 2.0);
        let (z, s2) = normalize_max_abs(&y).unwrap();
        assert_eq!(z.samples(), y.samples());
        assert_eq!(s2, 1.0);
        assert!(normalize_max_abs(&SignalSegment::zeros(4, 1.0).unwrap()).is_err());
    }

    #[test]
    fn segmentation_drops_remainder() {
        let x = SignalSegment::zeros(130_000, 1000.0).unwrap();
        let segs = segment(&x, 60.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.len() == 60_000));
        let short = SignalSegment::zeros(59_000, 1000.0).unwrap();
        assert!(segment(&short, 60.0).unwrap().is_empty());
    }

    #[test]
    fn segmentation_slices_mask() {
        let mask: Vec<bool> = (0..25).map(|i| i % 3 == 0).collect();
        let x = SignalSegment::with_mask((0..25).map(f64::from).collect(), 10.0, Some(mask.clone())).unwrap();
        for (i, s) in segment(&x, 1.0).unwrap().iter().enumerate() {
            assert_eq!(s.mask().unwrap(), &mask[i * 10..(i + 1) * 10]);
            assert_eq!(s.samples()[0], (i * 10) as f64);
        }
    }

    proptest! {
        #[test]
        fn normalize_inverts(xs in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            prop_assume!(xs.iter().any(|v| *v != 0.0));
            let x = SignalSegment::new(xs.clone(), 500.0).unwrap();
            let (y, scale) = normalize_max_abs(&x).unwrap();
            let peak = y.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!((peak - 1.0).abs() < 1e-15);
            for (a, b) in y.samples().iter().zip(&xs) {
                prop_assert!((a * scale - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn filtfilt_is_linear(
            xs in prop::collection::vec(-1.0f64..1.0, 64..200),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let c = design_butterworth(4, FilterKind::Highpass, &[40.0], 1000.0).unwrap();
            let ys: Vec<f64> = xs.iter().rev().map(|v| v * 0.5 + 0.1).collect();
            let mix: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| alpha * x + beta * y).collect();
            let fx = filtfilt_slice(&c, &xs).unwrap();
            let fy = filtfilt_slice(&c, &ys).unwrap();
            let fm = filtfilt_slice(&c, &mix).unwrap();
            let scale = fm.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..xs.len() {
                prop_assert!((fm[i] - (alpha * fx[i] + beta * fy[i])).abs() <= 1e-9 * scale.max(1.0));
            }
        }

        #[test]
        fn stft_frame_count(n in 1000usize..5000) {
            let x = SignalSegment::zeros(n, 1000.0).unwrap();
            prop_assert_eq!(stft_mag(&x, 1.0).unwrap().frames.len(), n / 1000);
        }
    }
}
