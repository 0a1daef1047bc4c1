use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::layers::{
    affine, bn_eval, bn_train, bn_train_backward, correlate, correlate_adjoint, correlate_weight_grad, elu, elu_grad,
    pad, BatchStats, ConvGeometry,
};
use crate::error::{Error, Result};
use crate::exec::Execution;

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Tconv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub batch_norm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_ch,
            out_ch,
            kernel: 16,
            stride,
            batch_norm: true,
            activation: Activation::Elu,
        }
    }

    pub fn tconv(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Tconv,
            ..Self::conv(in_ch, out_ch, stride)
        }
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            kernel: self.kernel,
            stride: self.stride,
        }
    }

    pub fn out_len(&self, in_len: usize) -> Option<usize> {
        match self.kind {
            LayerKind::Conv => in_len.is_multiple_of(self.stride).then(|| in_len / self.stride),
            LayerKind::Tconv => Some(in_len * self.stride),
        }
    }

    /// Convolutions store `[out, in, kernel]`; transposed ones `[in, out, kernel]`.
    pub fn weight_shape(&self) -> [usize; 3] {
        match self.kind {
            LayerKind::Conv => [self.out_ch, self.in_ch, self.kernel],
            LayerKind::Tconv => [self.in_ch, self.out_ch, self.kernel],
        }
    }

    /// A bias in front of batch normalization would be cancelled by the mean.
    pub fn has_bias(&self) -> bool {
        !self.batch_norm
    }

    fn fan_in(&self) -> f64 {
        match self.kind {
            LayerKind::Conv => (self.in_ch * self.kernel) as f64,
            LayerKind::Tconv => (self.in_ch * self.kernel) as f64 / self.stride as f64,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LayerKind::Conv => "conv",
            LayerKind::Tconv => "tconv",
        };
        write!(f, "{kind}({}->{}, k{}, s{})", self.in_ch, self.out_ch, self.kernel, self.stride)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnConfig {
    /// Training window length in samples.
    pub d: usize,
    pub layers: Vec<LayerSpec>,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for FcnConfig {
    fn default() -> Self {
        Self::with_window(4000)
    }
}

impl FcnConfig {
    /// Three-layer encoder and four-layer decoder with 16-tap kernels.
    pub fn with_window(d: usize) -> Self {
        let out = LayerSpec {
            batch_norm: false,
            activation: Activation::None,
            ..LayerSpec::tconv(80, 1, 1)
        };
        Self {
            d,
            layers: vec![
                LayerSpec::conv(1, 20, 2),
                LayerSpec::conv(20, 40, 2),
                LayerSpec::conv(40, 20, 1),
                LayerSpec::tconv(20, 20, 1),
                LayerSpec::tconv(20, 40, 2),
                LayerSpec::tconv(40, 80, 2),
                out,
            ],
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Input lengths must be a multiple of this.
    pub fn length_factor(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv)
            .map(|l| l.stride)
            .product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (Some(first), Some(last)) = (self.layers.first(), self.layers.last()) else {
            return bad("network has no layers".into());
        };
        if first.in_ch != 1 || last.out_ch != 1 {
            return bad("network must map one channel to one channel".into());
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_ch != pair[1].in_ch {
                return bad(format!("layer {} outputs {} channels but layer {} expects {}", i, pair[0].out_ch, i + 1, pair[1].in_ch));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_ch == 0 || l.out_ch == 0 || !l.geometry().is_valid() {
                return bad(format!("layer {i} {l} has an unsupported geometry"));
            }
        }
        let up: usize = self.layers.iter().filter(|l| l.kind == LayerKind::Tconv).map(|l| l.stride).product();
        if up != self.length_factor() {
            return bad(format!("decoder upsamples by {up} but encoder downsamples by {}", self.length_factor()));
        }
        if self.d == 0 || !self.d.is_multiple_of(self.length_factor()) {
            return bad(format!("window length {} is not a positive multiple of {}", self.d, self.length_factor()));
        }
        if !(self.bn_eps > 0.0 && self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad("batch-norm eps must be positive and momentum in (0, 1]".into());
        }
        Ok(())
    }

    /// `(length, channels)` after every layer for an input of `len` samples.
    pub fn ladder(&self, len: usize) -> Result<Vec<(usize, usize)>> {
        let mut cur = len;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            cur = l.out_len(cur).ok_or_else(|| Error::Shape {
                layer: format!("{i} {l}"),
                detail: format!("input length {cur} is not divisible by stride {}", l.stride),
            })?;
            out.push((cur, l.out_ch));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: Array3<f64>,
    pub bias: Option<Array1<f64>>,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics normalize; the cache supports [`FcnModel::backward`].
    Train,
    /// Running statistics normalize.
    Eval,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array3<f64>,
    xhat: Option<Array3<f64>>,
    inv_std: Option<Array1<f64>>,
    /// Input of the activation.
    pre_act: Array3<f64>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    mode: Mode,
    layers: Vec<LayerCache>,
    stats: Vec<Option<BatchStats>>,
    out_dim: (usize, usize, usize),
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Input that layer `i` received.
    pub fn layer_input(&self, i: usize) -> &Array3<f64> {
        &self.layers[i].input
    }

    /// Train-mode batch statistics of layer `i`, if it normalizes.
    pub fn batch_stats(&self, i: usize) -> Option<&BatchStats> {
        self.stats.get(i).and_then(Option::as_ref)
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Array3<f64>,
    pub bias: Option<Array1<f64>>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    /// Gradient with respect to the network input.
    pub input: Array3<f64>,
}

impl Gradients {
    /// Same order as [`FcnModel::params`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            for t in [&l.bias, &l.gamma, &l.beta].into_iter().flatten() {
                out.push(t.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The denoising autoencoder. Trainable parameters and running statistics
/// are kept at single-precision values so checkpoints round-trip exactly;
/// arithmetic runs in double precision.
#[derive(Debug, Clone)]
pub struct FcnModel {
    config: FcnConfig,
    layers: Vec<Layer>,
    generation: u64,
    exec: Execution,
}

impl PartialEq for FcnModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.layers == other.layers
    }
}

impl FcnModel {
    /// He-uniform weights, unit BN scale, zero shifts and biases.
    pub fn new(config: FcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layers
            .iter()
            .map(|spec| {
                let bound = (6.0 / spec.fan_in()).sqrt();
                Layer {
                    spec: *spec,
                    weight: Array3::from_shape_simple_fn(spec.weight_shape(), || rng.gen_range(-bound..bound)),
                    bias: spec.has_bias().then(|| Array1::zeros(spec.out_ch)),
                    bn: spec.batch_norm.then(|| BatchNorm::new(spec.out_ch)),
                }
            })
            .collect();
        let mut model = Self {
            config,
            layers,
            generation: next_generation(),
            exec: Execution::default(),
        };
        model.round_to_f32();
        Ok(model)
    }

    /// Assembles a model from explicit layers (used when loading checkpoints).
    pub fn from_layers(config: FcnConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.layers.len() {
            return Err(Error::Config(format!("{} layers for a {}-layer config", layers.len(), config.layers.len())));
        }
        for (i, (l, spec)) in layers.iter().zip(&config.layers).enumerate() {
            let ok = l.spec == *spec
                && l.weight.shape() == spec.weight_shape()
                && l.bias.as_ref().map(|b| b.len()) == spec.has_bias().then_some(spec.out_ch)
                && l.bn.as_ref().map(|b| {
                    [&b.gamma, &b.beta, &b.running_mean, &b.running_var].iter().all(|t| t.len() == spec.out_ch)
                        && b.running_var.iter().all(|&v| v > 0.0)
                }) == spec.batch_norm.then_some(true);
            if !ok {
                return Err(Error::Shape {
                    layer: format!("{i} {spec}"),
                    detail: "parameter shapes do not match the config".into(),
                });
            }
        }
        Ok(Self {
            config,
            layers,
            generation: next_generation(),
            exec: Execution::default(),
        })
    }

    pub fn config(&self) -> &FcnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Changes whenever trainable parameters change; caches from older
    /// generations are rejected by [`FcnModel::backward`].
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Trainable tensors: per layer the weight, then bias, BN scale and BN shift where present.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            if let Some(b) = &l.bias {
                out.push(b.as_slice().expect("standard layout"));
            }
            if let Some(bn) = &l.bn {
                out.push(bn.gamma.as_slice().expect("standard layout"));
                out.push(bn.beta.as_slice().expect("standard layout"));
            }
        }
        out
    }

    /// Mutable trainable tensors in [`FcnModel::params`] order. Invalidates caches.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation = next_generation();
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            if let Some(b) = &mut l.bias {
                out.push(b.as_slice_mut().expect("standard layout"));
            }
            if let Some(bn) = &mut l.bn {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// Names matching [`FcnModel::params`], e.g. `layer2.weight`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("layer{i}.weight"));
            if l.bias.is_some() {
                out.push(format!("layer{i}.bias"));
            }
            if l.bn.is_some() {
                out.push(format!("layer{i}.bn_gamma"));
                out.push(format!("layer{i}.bn_beta"));
            }
        }
        out
    }

    /// Every stored tensor, trainable or not, with its name and shape.
    pub fn state_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.weight"), l.weight.shape().to_vec(), l.weight.as_slice().expect("standard layout")));
            if let Some(b) = &l.bias {
                out.push((format!("layer{i}.bias"), vec![b.len()], b.as_slice().expect("standard layout")));
            }
            if let Some(bn) = &l.bn {
                for (name, t) in [
                    ("bn_gamma", &bn.gamma),
                    ("bn_beta", &bn.beta),
                    ("bn_running_mean", &bn.running_mean),
                    ("bn_running_var", &bn.running_var),
                ] {
                    out.push((format!("layer{i}.{name}"), vec![t.len()], t.as_slice().expect("standard layout")));
                }
            }
        }
        out
    }

    fn round_to_f32(&mut self) {
        let round = |t: &mut [f64]| t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        for l in &mut self.layers {
            round(l.weight.as_slice_mut().expect("standard layout"));
            if let Some(b) = &mut l.bias {
                round(b.as_slice_mut().expect("standard layout"));
            }
            if let Some(bn) = &mut l.bn {
                for t in [&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var] {
                    round(t.as_slice_mut().expect("standard layout"));
                }
                bn.running_var.mapv_inplace(|v| v.max(f32::MIN_POSITIVE as f64));
            }
        }
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (b, c, len) = x.dim();
        let first = &self.config.layers[0];
        if c != first.in_ch || b == 0 {
            return Err(Error::Shape {
                layer: format!("0 {first}"),
                detail: format!("expected [batch >= 1, {}, length], got [{b}, {c}, {len}]", first.in_ch),
            });
        }
        let factor = self.config.length_factor();
        if len == 0 || len % factor != 0 {
            return Err(Error::Shape {
                layer: format!("0 {first}"),
                detail: format!("input length {len} is not a positive multiple of {factor}"),
            });
        }
        self.config.ladder(len).map(|_| ())
    }

    pub(super) fn linear_forward(&self, layer: &Layer, x: &Array3<f64>) -> Array3<f64> {
        let (b, _, lin) = x.dim();
        let spec = layer.spec;
        let g = spec.geometry();
        let (pl, s) = (g.pad_left(), spec.stride);
        let w = layer.weight.view();
        let planes: Vec<Array2<f64>> = self.exec.map_range(b, |i| {
            let xi = x.index_axis(Axis(0), i);
            match spec.kind {
                LayerKind::Conv => {
                    let small = lin / s;
                    let xp = pad(xi, pl, g.padded_len(small));
                    correlate(w, xp.view(), s, small)
                }
                LayerKind::Tconv => {
                    let yp = correlate_adjoint(w, xi, s, g.padded_len(lin));
                    yp.slice(s![.., pl..pl + lin * s]).to_owned()
                }
            }
        });
        let views: Vec<ArrayView2<f64>> = planes.iter().map(|p| p.view()).collect();
        let mut z = ndarray::stack(Axis(0), &views).expect("equal plane shapes");
        if let Some(bias) = &layer.bias {
            for (c, mut lane) in z.axis_iter_mut(Axis(1)).enumerate() {
                lane += bias[c];
            }
        }
        z
    }

    /// Returns `(dx, dweight)`.
    fn linear_backward(&self, layer: &Layer, x: &Array3<f64>, gz: &Array3<f64>) -> (Array3<f64>, Array3<f64>) {
        let (b, _, lin) = x.dim();
        let spec = layer.spec;
        let g = spec.geometry();
        let (pl, s) = (g.pad_left(), spec.stride);
        let w = layer.weight.view();
        let parts: Vec<(Array2<f64>, Array3<f64>)> = self.exec.map_range(b, |i| {
            let xi = x.index_axis(Axis(0), i);
            let gi = gz.index_axis(Axis(0), i);
            let mut dw = Array3::zeros(layer.weight.raw_dim());
            let dx = match spec.kind {
                LayerKind::Conv => {
                    let xp = pad(xi, pl, g.padded_len(lin / s));
                    correlate_weight_grad(xp.view(), gi, s, &mut dw);
                    let dxp = correlate_adjoint(w, gi, s, xp.ncols());
                    dxp.slice(s![.., pl..pl + lin]).to_owned()
                }
                LayerKind::Tconv => {
                    let gp = pad(gi, pl, g.padded_len(lin));
                    correlate_weight_grad(gp.view(), xi, s, &mut dw);
                    correlate(w, gp.view(), s, lin)
                }
            };
            (dx, dw)
        });
        let mut dw = Array3::zeros(layer.weight.raw_dim());
        for (_, p) in &parts {
            dw += p;
        }
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.0.view()).collect();
        (ndarray::stack(Axis(0), &views).expect("equal plane shapes"), dw)
    }

    fn run(&self, x: &Array3<f64>, start: usize, mode: Mode, keep: bool) -> Result<(Array3<f64>, ForwardCache)> {
        let mut cache = ForwardCache {
            generation: self.generation,
            mode,
            layers: Vec::new(),
            stats: Vec::new(),
            out_dim: (0, 0, 0),
        };
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            if a.dim().1 != layer.spec.in_ch {
                return Err(Error::Shape {
                    layer: format!("{i} {}", layer.spec),
                    detail: format!("expected {} input channels, got {}", layer.spec.in_ch, a.dim().1),
                });
            }
            let mut z = self.linear_forward(layer, &a);
            let (mut xhat, mut inv_std, mut stats) = (None, None, None);
            if let Some(bn) = &layer.bn {
                match mode {
                    Mode::Train => {
                        let (st, r) = bn_train(&mut z, self.config.bn_eps);
                        stats = Some(st);
                        inv_std = Some(r);
                    }
                    Mode::Eval => bn_eval(&mut z, &bn.running_mean, &bn.running_var, self.config.bn_eps),
                }
                let y = affine(&z, &bn.gamma, &bn.beta);
                xhat = Some(z);
                z = y;
            }
            let out = match layer.spec.activation {
                Activation::Elu => z.mapv(elu),
                Activation::None => z.clone(),
            };
            if keep {
                cache.layers.push(LayerCache {
                    input: std::mem::replace(&mut a, out),
                    xhat: if mode == Mode::Train { xhat } else { None },
                    inv_std,
                    pre_act: z,
                });
                cache.stats.push(stats);
            } else {
                a = out;
            }
        }
        cache.out_dim = a.dim();
        Ok((a, cache))
    }

    /// Runs the network on `[batch, 1, length]`. Does not touch running statistics.
    pub fn forward(&self, x: &Array3<f64>, mode: Mode) -> Result<(Array3<f64>, ForwardCache)> {
        self.check_input(x)?;
        self.run(x, 0, mode, true)
    }

    /// Runs layers `start..` on `x`, which must have the shape that layer
    /// `start` expects. Intended for diagnostics such as gradient checks.
    pub fn forward_from(&self, start: usize, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        self.run(x, start, mode, false).map(|r| r.0)
    }

    /// Train-mode forward that also folds the batch statistics into the
    /// running estimates.
    pub fn forward_train(&mut self, x: &Array3<f64>) -> Result<(Array3<f64>, ForwardCache)> {
        let (y, cache) = self.forward(x, Mode::Train)?;
        self.update_running_stats(&cache)?;
        Ok((y, cache))
    }

    /// Exponential moving average with the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        if cache.mode != Mode::Train || cache.stats.len() != self.layers.len() {
            return Err(Error::InvalidArgument("running statistics need a full train-mode cache".into()));
        }
        let m = self.config.bn_momentum;
        for (layer, st) in self.layers.iter_mut().zip(&cache.stats) {
            if let (Some(bn), Some(st)) = (&mut layer.bn, st) {
                let unbias = if st.count > 1 { st.count as f64 / (st.count - 1) as f64 } else { 1.0 };
                bn.running_mean.zip_mut_with(&st.mean, |r, &v| *r = (1.0 - m) * *r + m * v);
                bn.running_var.zip_mut_with(&st.var, |r, &v| *r = (1.0 - m) * *r + m * v * unbias);
            }
        }
        self.round_to_f32();
        Ok(())
    }

    /// Eval-mode output without keeping activations.
    pub fn predict(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        self.check_input(x)?;
        self.run(x, 0, Mode::Eval, false).map(|r| r.0)
    }

    /// Denoises one signal of any length. Inputs that are not a multiple of
    /// the length factor are extended by mirroring both ends, and the output
    /// is cropped back.
    pub fn denoise(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let factor = self.config.length_factor();
        let len = x.len().div_ceil(factor) * factor;
        let left = (len - x.len()) / 2;
        let input = Array3::from_shape_fn((1, 1, len), |(_, _, i)| x[mirror(i as isize - left as isize, x.len())]);
        let y = self.predict(&input)?;
        Ok(y.slice(s![0, 0, left..left + x.len()]).to_vec())
    }

    /// Gradients of `⟨grad_out, output⟩` for a train-mode cache of this model.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array3<f64>) -> Result<Gradients> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if cache.mode != Mode::Train || cache.layers.len() != self.layers.len() {
            return Err(Error::InvalidArgument("backward needs a full train-mode cache".into()));
        }
        if grad_out.dim() != cache.out_dim {
            return Err(Error::Shape {
                layer: "output".into(),
                detail: format!("gradient shape {:?} differs from output {:?}", grad_out.dim(), cache.out_dim),
            });
        }
        let mut g = grad_out.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            if layer.spec.activation == Activation::Elu {
                g.zip_mut_with(&lc.pre_act, |gi, &z| *gi *= elu_grad(z));
            }
            let (mut gamma, mut beta) = (None, None);
            if let (Some(bn), Some(xhat), Some(inv_std)) = (&layer.bn, &lc.xhat, &lc.inv_std) {
                let (dz, dg, db) = bn_train_backward(&g, xhat, &bn.gamma, inv_std);
                g = dz;
                gamma = Some(dg);
                beta = Some(db);
            }
            let bias = layer.bias.as_ref().map(|_| g.sum_axis(Axis(2)).sum_axis(Axis(0)));
            let (dx, dw) = self.linear_backward(layer, &lc.input, &g);
            grads.push(LayerGrads {
                weight: dw,
                bias,
                gamma,
                beta,
            });
            g = dx;
        }
        grads.reverse();
        Ok(Gradients { layers: grads, input: g })
    }

    /// One optimizer update; parameters are re-rounded to single precision.
    pub fn adam_step(&mut self, state: &mut AdamState, grads: &Gradients) -> Result<()> {
        let g = grads.tensors();
        let mut p = self.params_mut();
        state.update(&mut p, &g)?;
        self.round_to_f32();
        Ok(())
    }
}

/// Mean squared error and its gradient `2 (pred - target) / n`.
pub fn l2_loss(pred: &Array3<f64>, target: &Array3<f64>) -> Result<(f64, Array3<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape {
            layer: "loss".into(),
            detail: format!("prediction {:?} vs target {:?}", pred.dim(), target.dim()),
        });
    }
    let n = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// Whole-sample symmetric reflection of `i` into `0..n`.
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period);
    (if r < n as isize { r } else { period - r }) as usize
}
