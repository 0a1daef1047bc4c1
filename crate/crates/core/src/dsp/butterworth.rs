//! Butterworth IIR design as cascaded second-order sections.
//!
//! Analog prototype poles are placed on the unit circle, scaled to the
//! prewarped cutoff and mapped to the z-plane by the bilinear transform.
//! Conjugate pole pairs become biquads; odd orders add one first-order
//! section. Band-pass designs cascade a high-pass and a low-pass of the
//! requested order.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
}

/// One normalized second-order section, `a0 == 1`.
///
/// First-order sections have `b2 == a2 == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        if self.a2 == 0.0 {
            return self.a1.abs();
        }
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            self.a2.sqrt()
        } else {
            let r = disc.sqrt();
            ((-self.a1 + r) / 2.0).abs().max(((-self.a1 - r) / 2.0).abs())
        }
    }
}

/// A designed filter: sections applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub fs: f64,
    pub kind: FilterKind,
    pub order: usize,
    pub cutoffs: Vec<f64>,
}

impl BiquadCascade {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Single-pass magnitude in dB.
    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections.iter().map(Biquad::pole_radius).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0
    }
}

impl fmt::Display for BiquadCascade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# butterworth {:?} order {} cutoffs {:?} Hz fs {} Hz",
            self.kind, self.order, self.cutoffs, self.fs
        )?;
        writeln!(f, "section,b0,b1,b2,a1,a2")?;
        for (i, s) in self.sections.iter().enumerate() {
            writeln!(f, "{i},{:e},{:e},{:e},{:e},{:e}", s.b0, s.b1, s.b2, s.a1, s.a2)?;
        }
        Ok(())
    }
}

/// Designs a digital Butterworth filter.
///
/// `cutoffs` holds one frequency for low/high-pass and `[low, high]` for
/// band-pass. Every cutoff must lie strictly between 0 and Nyquist.
pub fn design_butterworth(order: usize, kind: FilterKind, cutoffs: &[f64], fs: f64) -> Result<BiquadCascade> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::FilterDesign(format!("order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::FilterDesign(format!("invalid sample rate {fs}")));
    }
    let expected = if kind == FilterKind::Bandpass { 2 } else { 1 };
    if cutoffs.len() != expected {
        return Err(Error::FilterDesign(format!(
            "{kind:?} needs {expected} cutoff(s), got {}",
            cutoffs.len()
        )));
    }
    for &fc in cutoffs {
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(Error::FilterDesign(format!(
                "cutoff {fc} Hz must lie in (0, {}) Hz",
                fs / 2.0
            )));
        }
    }
    let sections = match kind {
        FilterKind::Lowpass => sections_for(order, cutoffs[0], fs, false),
        FilterKind::Highpass => sections_for(order, cutoffs[0], fs, true),
        FilterKind::Bandpass => {
            if cutoffs[0] >= cutoffs[1] {
                return Err(Error::FilterDesign(format!(
                    "band edges must be increasing, got {cutoffs:?}"
                )));
            }
            let mut s = sections_for(order, cutoffs[0], fs, true);
            s.extend(sections_for(order, cutoffs[1], fs, false));
            s
        }
    };
    let cascade = BiquadCascade {
        sections,
        fs,
        kind,
        order,
        cutoffs: cutoffs.to_vec(),
    };
    if !cascade.is_stable() {
        return Err(Error::FilterDesign(format!(
            "design is unstable (pole radius {})",
            cascade.max_pole_radius()
        )));
    }
    Ok(cascade)
}

fn sections_for(order: usize, cutoff: f64, fs: f64, highpass: bool) -> Vec<Biquad> {
    let n = order as f64;
    let warped = 2.0 * fs * (PI * cutoff / fs).tan();
    let two_fs = Complex64::new(2.0 * fs, 0.0);
    let to_z = |p: Complex64| {
        let s = if highpass { warped / p } else { p * warped };
        (two_fs + s) / (two_fs - s)
    };

    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let zp = to_z(Complex64::from_polar(1.0, theta));
        let a1 = -2.0 * zp.re;
        let a2 = zp.norm_sqr();
        let s = if highpass {
            let g = (1.0 - a1 + a2) / 4.0;
            Biquad { b0: g, b1: -2.0 * g, b2: g, a1, a2 }
        } else {
            let g = (1.0 + a1 + a2) / 4.0;
            Biquad { b0: g, b1: 2.0 * g, b2: g, a1, a2 }
        };
        sections.push(s);
    }
    if order % 2 == 1 {
        let zr = to_z(Complex64::new(-1.0, 0.0)).re;
        let s = if highpass {
            let g = (1.0 + zr) / 2.0;
            Biquad { b0: g, b1: -g, b2: 0.0, a1: -zr, a2: 0.0 }
        } else {
            let g = (1.0 - zr) / 2.0;
            Biquad { b0: g, b1: g, b2: 0.0, a1: -zr, a2: 0.0 }
        };
        sections.push(s);
    }
    sections
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analog Butterworth magnitude evaluated at the prewarped frequency;
    /// the bilinear transform maps it exactly onto the digital response.
    fn analog_reference_db(order: usize, fc: f64, f: f64, fs: f64, highpass: bool) -> f64 {
        let w = (PI * f / fs).tan();
        let wc = (PI * fc / fs).tan();
        let ratio = if highpass { wc / w } else { w / wc };
        -10.0 * (1.0 + ratio.powi(2 * order as i32)).log10()
    }

    #[test]
    fn highpass_40hz_cutoff_is_minus_3db() {
        let c = design_butterworth(4, FilterKind::Highpass, &[40.0], 1000.0).unwrap();
        assert!((c.magnitude_db(40.0) + 3.0103).abs() < 0.1);
        assert!(c.magnitude(0.0) < 1e-12);
        assert!(c.is_stable());
        assert_eq!(c.sections.len(), 2);
    }

    #[test]
    fn lowpass_third_order_rolloff() {
        let c = design_butterworth(3, FilterKind::Lowpass, &[200.0], 1000.0).unwrap();
        assert!(c.magnitude_db(400.0) <= -36.0, "{}", c.magnitude_db(400.0));
        assert!((c.magnitude(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(c.sections.len(), 2);
    }

    #[test]
    fn matches_analog_prototype() {
        for order in 1..=MAX_ORDER {
            for &(hp, fc) in &[(false, 200.0), (true, 10.0), (true, 40.0)] {
                let kind = if hp { FilterKind::Highpass } else { FilterKind::Lowpass };
                let c = design_butterworth(order, kind, &[fc], 1000.0).unwrap();
                for i in 1..50 {
                    let f = i as f64 * 9.9;
                    let want = analog_reference_db(order, fc, f, 1000.0, hp);
                    if want > -120.0 {
                        assert!((c.magnitude_db(f) - want).abs() < 1e-6, "order {order} f {f}");
                    }
                }
            }
        }
    }

    #[test]
    fn monotone_magnitude() {
        let c = design_butterworth(4, FilterKind::Lowpass, &[100.0], 1000.0).unwrap();
        let mags: Vec<f64> = (0..500).map(|f| c.magnitude(f as f64)).collect();
        assert!(mags.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn bandpass_edges() {
        let c = design_butterworth(4, FilterKind::Bandpass, &[20.0, 500.0], 2000.0).unwrap();
        assert!((c.magnitude_db(20.0) + 3.0103).abs() < 0.05);
        assert!((c.magnitude_db(500.0) + 3.0103).abs() < 0.05);
        assert!(c.magnitude_db(100.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_cutoffs() {
        assert!(design_butterworth(4, FilterKind::Highpass, &[500.0], 1000.0).is_err());
        assert!(design_butterworth(4, FilterKind::Highpass, &[0.0], 1000.0).is_err());
        assert!(design_butterworth(0, FilterKind::Highpass, &[40.0], 1000.0).is_err());
        assert!(design_butterworth(9, FilterKind::Highpass, &[40.0], 1000.0).is_err());
        assert!(design_butterworth(2, FilterKind::Bandpass, &[50.0, 20.0], 1000.0).is_err());
    }

    #[test]
    fn coefficient_table_prints() {
        let c = design_butterworth(3, FilterKind::Highpass, &[10.0], 1000.0).unwrap();
        let table = c.to_string();
        assert_eq!(table.lines().count(), 2 + c.sections.len());
    }
}
