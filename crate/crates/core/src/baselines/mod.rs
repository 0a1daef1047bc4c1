//! Conventional single-channel ECG removers: zero-phase high-pass filtering
//! (HP) and template subtraction followed by HP (TS).

mod qrs;
mod template;

pub use qrs::{detect_qrs, QrsAnnotations, QrsConfig};
pub use template::{build_template, subtract_template, ts_remove, EcgTemplate, TsConfig, TsOutcome};

use crate::dsp::{design_butterworth, filtfilt, BiquadCascade, FilterKind};
use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

pub const HP_ORDER: usize = 4;
pub const HP_CUTOFF_HZ: f64 = 40.0;

pub fn hp_filter(fs: f64) -> Result<BiquadCascade> {
    design_butterworth(HP_ORDER, FilterKind::Highpass, &[HP_CUTOFF_HZ], fs)
}

/// 4th-order Butterworth high-pass at 40 Hz, applied forward and backward.
pub fn hp_remove(noisy: &SignalSegment) -> Result<SignalSegment> {
    if noisy.fs() < 500.0 {
        return Err(Error::InvalidArgument(format!("HP remover needs fs >= 500 Hz, got {}", noisy.fs())));
    }
    filtfilt(&hp_filter(noisy.fs())?, noisy)
}
