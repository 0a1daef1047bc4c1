use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};
use crate::ingestion::SignalSegment;

/// Magnitude spectrogram, one-sided, unscaled `|X_k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `frames[i][k]` is the magnitude of bin `k` in frame `i`.
    pub frames: Vec<Vec<f64>>,
    /// Bin centre frequencies, ascending from 0 to `fs/2`.
    pub freqs: Vec<f64>,
    pub frame_len: usize,
}

/// Short-time magnitude spectrum with a rectangular window and no overlap.
/// The FFT length equals the frame length; trailing partial frames are
/// dropped.
pub fn stft_mag(x: &SignalSegment, frame_s: f64) -> Result<Spectrogram> {
    let frame_len = (frame_s * x.fs()).round() as usize;
    if frame_len == 0 {
        return Err(Error::InvalidArgument(format!("frame of {frame_s} s is empty at {} Hz", x.fs())));
    }
    if x.len() < frame_len {
        return Err(Error::TooShort {
            needed: frame_len - 1,
            got: x.len(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(frame_len);
    let bins = frame_len / 2 + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    let frames = x
        .samples()
        .chunks_exact(frame_len)
        .map(|chunk| {
            buf.iter_mut()
                .zip(chunk)
                .for_each(|(b, &v)| *b = Complex64::new(v, 0.0));
            fft.process(&mut buf);
            buf[..bins].iter().map(|c| c.norm()).collect()
        })
        .collect();
    let freqs = (0..bins).map(|k| k as f64 * x.fs() / frame_len as f64).collect();
    Ok(Spectrogram {
        frames,
        freqs,
        frame_len,
    })
}
