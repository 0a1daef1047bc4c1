//! Checkpoint layout: one line of JSON (format tag, version, config and the
//! name/shape of every tensor), a newline, then all tensors as contiguous
//! little-endian `f32` in header order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use super::model::{BatchNorm, FcnConfig, FcnModel, Layer};
use crate::error::{Error, Result};

pub const FORMAT: &str = "semg-scrub-fcn";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub config: FcnConfig,
    pub tensors: Vec<TensorInfo>,
}

impl CheckpointHeader {
    fn values(&self) -> usize {
        self.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum()
    }
}

pub fn save_checkpoint(model: &FcnModel, path: &Path) -> Result<()> {
    let tensors = model.state_tensors();
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        config: model.config().clone(),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorInfo {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    bytes.push(b'\n');
    bytes.reserve(header.values() * 4);
    for (_, _, data) in &tensors {
        for &v in data.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    split(&bytes, path).map(|(h, _)| h)
}

fn split<'a>(bytes: &'a [u8], path: &Path) -> Result<(CheckpointHeader, &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "checkpoint", "missing header line"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::format(path, "checkpoint header", e))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported format {} v{} (expected {FORMAT} v{VERSION})",
            path.display(),
            header.format,
            header.version
        )));
    }
    Ok((header, &bytes[nl + 1..]))
}

pub fn load_checkpoint(path: &Path) -> Result<FcnModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, blob) = split(&bytes, path)?;
    header.config.validate()?;

    // The expected tensor list comes from a freshly built model of the same config.
    let template = FcnModel::new(header.config.clone(), 0)?;
    let expected: Vec<TensorInfo> = template
        .state_tensors()
        .into_iter()
        .map(|(name, shape, _)| TensorInfo { name, shape })
        .collect();
    if expected != header.tensors {
        return Err(Error::Checkpoint(format!("{}: tensor list does not match the config", path.display())));
    }
    if blob.len() != header.values() * 4 {
        return Err(Error::Checkpoint(format!(
            "{}: expected {} bytes of parameters, found {}",
            path.display(),
            header.values() * 4,
            blob.len()
        )));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    if let Some(i) = blob.chunks_exact(4).position(|c| !f32::from_le_bytes([c[0], c[1], c[2], c[3]]).is_finite()) {
        return Err(Error::NonFinite {
            location: "checkpoint value",
            row: i,
        });
    }
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let mut layers = Vec::with_capacity(template.layers().len());
    for l in template.layers() {
        let shape = l.spec.weight_shape();
        let weight = Array3::from_shape_vec(shape, take(shape.iter().product())).expect("length checked above");
        let bias = l.bias.as_ref().map(|b| Array1::from(take(b.len())));
        let bn = l.bn.as_ref().map(|b| {
            let n = b.gamma.len();
            BatchNorm {
                gamma: Array1::from(take(n)),
                beta: Array1::from(take(n)),
                running_mean: Array1::from(take(n)),
                running_var: Array1::from(take(n)),
            }
        });
        layers.push(Layer {
            spec: l.spec,
            weight,
            bias,
            bn,
        });
    }
    FcnModel::from_layers(header.config, layers).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
