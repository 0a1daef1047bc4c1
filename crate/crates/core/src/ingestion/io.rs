//! Signal files: little-endian `f32` samples (`*.f32`) or single-column CSV
//! (`*.csv`, header `sample`), each with a JSON sidecar holding the sample
//! rate and provenance.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::signal::{mask_to_runs, runs_to_mask, SignalSegment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    RawF32Le,
    Csv,
}

impl SignalFormat {
    /// Guesses from the file extension; anything but `.csv` is raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => SignalFormat::Csv,
            _ => SignalFormat::RawF32Le,
        }
    }
}

impl FromStr for SignalFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-f32le" | "raw" | "f32" => Ok(SignalFormat::RawF32Le),
            "csv" => Ok(SignalFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown signal format {other:?}"))),
        }
    }
}

/// Sidecar contents. `activation` stores the mask as `[start, end)` runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub fs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Vec<[usize; 2]>>,
    /// Free-form annotations (e.g. the denoising method and its parameters).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl SignalMeta {
    pub fn for_signal(x: &SignalSegment) -> Self {
        Self {
            fs: x.fs(),
            activation: x.mask().map(mask_to_runs),
            ..Self::default()
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, what, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, "json", e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a signal; the sample rate and mask come from the sidecar.
pub fn read_signal(path: &Path, format: SignalFormat) -> Result<SignalSegment> {
    read_signal_with_meta(path, format).map(|(s, _)| s)
}

pub fn read_signal_with_meta(path: &Path, format: SignalFormat) -> Result<(SignalSegment, SignalMeta)> {
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(Error::format(path, "sidecar", format!("missing {}", meta_path.display())));
    }
    let meta: SignalMeta = read_json(&meta_path, "sidecar")?;
    let samples = match format {
        SignalFormat::RawF32Le => read_f32le(path)?,
        SignalFormat::Csv => read_csv_samples(path)?,
    };
    let mask = meta
        .activation
        .as_ref()
        .map(|runs| runs_to_mask(runs, samples.len()))
        .transpose()
        .map_err(|e| Error::format(path, "sidecar", e))?;
    let seg = SignalSegment::with_mask(samples, meta.fs, mask).map_err(|e| match e {
        Error::InvalidArgument(d) => Error::format(&meta_path, "sidecar", d),
        other => other,
    })?;
    Ok((seg, meta))
}

/// Writes samples plus sidecar. Raw output narrows to `f32`; values that
/// are exactly representable in `f32` round-trip bit for bit.
pub fn write_signal(path: &Path, x: &SignalSegment, format: SignalFormat, meta: &SignalMeta) -> Result<()> {
    match format {
        SignalFormat::RawF32Le => write_f32le(path, x.samples())?,
        SignalFormat::Csv => write_csv_samples(path, x.samples())?,
    }
    let mut meta = meta.clone();
    meta.fs = x.fs();
    meta.activation = x.mask().map(mask_to_runs);
    write_json(&sidecar_path(path), &meta)
}

pub fn read_f32le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            path,
            "raw f32 data",
            format!("{} bytes is not a multiple of 4", bytes.len()),
        ));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(f64::from(v))
            } else {
                Err(Error::NonFinite {
                    location: "sample",
                    row: i,
                })
            }
        })
        .collect()
}

pub fn write_f32le(path: &Path, samples: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = samples.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_csv_samples(path: &Path) -> Result<Vec<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "sample" => {}
        Some(Ok(h)) => return Err(Error::format(path, "csv header", format!("expected \"sample\", got {h:?}"))),
        Some(Err(e)) => return Err(Error::io(path, e)),
        None => return Err(Error::format(path, "csv header", "empty file")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let row = i + 2;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let v: f64 = text
            .parse()
            .map_err(|_| Error::format(path, "csv row", format!("line {row}: {text:?} is not a number")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite { location: "line", row });
        }
        out.push(v);
    }
    Ok(out)
}

fn write_csv_samples(path: &Path, samples: &[f64]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| {
        writeln!(w, "sample")?;
        for v in samples {
            // `{}` prints the shortest string that parses back to the same f64.
            writeln!(w, "{v}")?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn raw_four_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f32");
        let x = SignalSegment::new(vec![0.0, 0.5, -0.5, 1.0], 1000.0).unwrap();
        write_signal(&path, &x, SignalFormat::RawF32Le, &SignalMeta::default()).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 16);
        let y = read_signal(&path, SignalFormat::RawF32Le).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn csv_nan_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "sample\n0.1\n0.2\nNaN\n0.3\n").unwrap();
        write_json(&sidecar_path(&path), &SignalMeta { fs: 1000.0, ..Default::default() }).unwrap();
        match read_signal(&path, SignalFormat::Csv) {
            Err(Error::NonFinite { location: "line", row: 4 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raw_inf_names_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f32");
        let bytes: Vec<u8> = [1.0f32, f32::INFINITY].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).unwrap();
        write_json(&sidecar_path(&path), &SignalMeta { fs: 1000.0, ..Default::default() }).unwrap();
        assert!(matches!(
            read_signal(&path, SignalFormat::RawF32Le),
            Err(Error::NonFinite { location: "sample", row: 1 })
        ));
    }

    #[test]
    fn malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "value\n1\n").unwrap();
        write_json(&sidecar_path(&path), &SignalMeta { fs: 1000.0, ..Default::default() }).unwrap();
        assert!(matches!(read_signal(&path, SignalFormat::Csv), Err(Error::Format { .. })));

        let raw = dir.path().join("y.f32");
        fs::write(&raw, [0u8; 6]).unwrap();
        write_json(&sidecar_path(&raw), &SignalMeta { fs: 1000.0, ..Default::default() }).unwrap();
        assert!(matches!(read_signal(&raw, SignalFormat::RawF32Le), Err(Error::Format { .. })));

        let orphan = dir.path().join("z.f32");
        fs::write(&orphan, [0u8; 4]).unwrap();
        assert!(read_signal(&orphan, SignalFormat::RawF32Le).is_err());

        fs::write(sidecar_path(&orphan), "{\"fs\": -1}").unwrap();
        assert!(matches!(read_signal(&orphan, SignalFormat::RawF32Le), Err(Error::Format { .. })));
    }

    #[test]
    fn mask_and_meta_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mask = vec![false, true, true, false];
        let x = SignalSegment::with_mask(vec![0.1, 0.2, 0.3, 0.4], 2000.0, Some(mask)).unwrap();
        let mut meta = SignalMeta {
            subject: Some("s07".into()),
            channel: Some(11),
            ..Default::default()
        };
        meta.extra.insert("method".into(), "hp".into());
        write_signal(&path, &x, SignalFormat::Csv, &meta).unwrap();
        let (y, m) = read_signal_with_meta(&path, SignalFormat::Csv).unwrap();
        assert_eq!(y, x);
        assert_eq!(m.subject.as_deref(), Some("s07"));
        assert_eq!(m.extra["method"], "hp");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_bit_exact(raw in prop::collection::vec(-1e6f32..1e6, 0..300), csv in prop::collection::vec(-1e9f64..1e9, 0..300)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("a.f32");
            let x = SignalSegment::new(raw.iter().map(|&v| f64::from(v)).collect(), 1000.0).unwrap();
            write_signal(&p, &x, SignalFormat::RawF32Le, &SignalMeta::default()).unwrap();
            let y = read_signal(&p, SignalFormat::RawF32Le).unwrap();
            prop_assert!(x.samples().iter().zip(y.samples()).all(|(a, b)| a.to_bits() == b.to_bits()));

            let q = dir.path().join("b.csv");
            let x = SignalSegment::new(csv, 128.0).unwrap();
            write_signal(&q, &x, SignalFormat::Csv, &SignalMeta::default()).unwrap();
            let y = read_signal(&q, SignalFormat::Csv).unwrap();
            prop_assert_eq!(x.len(), y.len());
            prop_assert!(x.samples().iter().zip(y.samples()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
