use crate::error::{Error, Result};

/// A finite, uniformly sampled single-channel waveform.
///
/// `mask` optionally flags each sample as belonging to muscle activation.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment {
    samples: Vec<f64>,
    fs: f64,
    mask: Option<Vec<bool>>,
}

impl SignalSegment {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        Self::with_mask(samples, fs, None)
    }

    pub fn with_mask(samples: Vec<f64>, fs: f64, mask: Option<Vec<bool>>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidArgument(format!("sample rate must be positive, got {fs}")));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: "index",
                row: index,
            });
        }
        if let Some(m) = &mask {
            if m.len() != samples.len() {
                return Err(Error::LengthMismatch {
                    left: samples.len(),
                    right: m.len(),
                });
            }
        }
        Ok(Self { samples, fs, mask })
    }

    pub fn zeros(len: usize, fs: f64) -> Result<Self> {
        Self::new(vec![0.0; len], fs)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same rate and mask, new samples. Fails if the length changes while a
    /// mask is present or if the samples are not finite.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        let mask = match &self.mask {
            Some(m) if m.len() == samples.len() => Some(m.clone()),
            Some(_) => None,
            None => None,
        };
        Self::with_mask(samples, self.fs, mask)
    }

    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(m) = &mask {
            if m.len() != self.samples.len() {
                return Err(Error::LengthMismatch {
                    left: self.samples.len(),
                    right: m.len(),
                });
            }
        }
        self.mask = mask;
        Ok(())
    }

    /// Samples `[start, end)` with the mask sliced in lockstep.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} out of bounds for length {}",
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            fs: self.fs,
            mask: self.mask.as_ref().map(|m| m[start..end].to_vec()),
        })
    }

    /// Mean power (mean of squares).
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Converts a mask into half-open `[start, end)` runs of `true`.
pub fn mask_to_runs(mask: &[bool]) -> Vec<[usize; 2]> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push([s, i]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push([s, mask.len()]);
    }
    runs
}

pub fn runs_to_mask(runs: &[[usize; 2]], len: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; len];
    for &[s, e] in runs {
        if s > e || e > len {
            return Err(Error::InvalidArgument(format!(
                "activation run {s}..{e} outside signal of length {len}"
            )));
        }
        mask[s..e].iter_mut().for_each(|m| *m = true);
    }
    Ok(mask)
}
