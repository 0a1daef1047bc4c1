use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use super::layers::{elu, ConvGeometry};
use super::model::{Activation, FcnModel, Layer, LayerKind, LayerSpec, Mode};
use crate::error::Result;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst agreement.
    pub worst: (String, usize),
    /// Analytic and numeric values at the worst entry.
    pub worst_values: (f64, f64),
}

/// Checks every trainable parameter of `model` on the scalar
/// `⟨proj, forward(x)⟩` in train mode with step `eps`. The relative error of
/// one entry is `|a - n| / max(|a|, |n|, floor)`.
///
/// A perturbation only re-runs the network from the layer that owns the
/// parameter. When the last layer is linear, perturbations of the layer
/// before it touch a single channel, and only that channel is pushed
/// through normalization, activation and the last layer.
pub fn gradient_check(model: &FcnModel, x: &Array3<f64>, proj: &Array3<f64>, eps: f64, floor: f64) -> Result<GradCheckReport> {
    let (_, cache) = model.forward(x, Mode::Train)?;
    let grads = model.backward(&cache, proj)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let names = model.param_names();

    // Tensor index -> (owning layer, role).
    let mut owner = Vec::new();
    for (i, l) in model.layers().iter().enumerate() {
        owner.push((i, Role::Weight));
        if l.bias.is_some() {
            owner.push((i, Role::Bias));
        }
        if l.bn.is_some() {
            owner.push((i, Role::Gamma));
            owner.push((i, Role::Beta));
        }
    }
    let n = model.layers().len();
    let last = &model.layers()[n - 1];
    let fast_layer = (n >= 2 && last.bn.is_none() && last.spec.activation == Activation::None).then(|| n - 2);
    let fast = fast_layer.map(|l| Penultimate::new(model, l, cache.layer_input(l), proj));

    let mut work = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        worst_values: (0.0, 0.0),
    };
    for (t, name) in names.iter().enumerate() {
        let (layer, role) = owner[t];
        let input = cache.layer_input(layer);
        for j in 0..analytic[t].len() {
            let numeric = match (&fast, Some(layer) == fast_layer) {
                (Some(p), true) => (p.eval(role, j, eps) - p.eval(role, j, -eps)) / (2.0 * eps),
                _ => {
                    let orig = work.params()[t][j];
                    let mut eval = |v: f64| -> Result<f64> {
                        work.params_mut()[t][j] = v;
                        let y = work.forward_from(layer, input, Mode::Train)?;
                        Ok((&y * proj).sum())
                    };
                    let plus = eval(orig + eps)?;
                    let minus = eval(orig - eps)?;
                    work.params_mut()[t][j] = orig;
                    (plus - minus) / (2.0 * eps)
                }
            };
            let a = analytic[t][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.0.is_empty() {
                report.max_rel_err = err.max(report.max_rel_err);
                report.worst = (name.clone(), j);
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// The layer feeding a linear output layer, evaluated one channel at a time.
struct Penultimate<'a> {
    model: &'a FcnModel,
    layer: &'a Layer,
    input: &'a Array3<f64>,
    /// Pre-normalization output of `layer`.
    z: Array3<f64>,
    /// The last layer restricted to each of its input channels.
    tails: Vec<Layer>,
    proj: &'a Array3<f64>,
}

impl<'a> Penultimate<'a> {
    fn new(model: &'a FcnModel, l: usize, input: &'a Array3<f64>, proj: &'a Array3<f64>) -> Self {
        let layer = &model.layers()[l];
        let last = &model.layers()[l + 1];
        let tails = (0..last.spec.in_ch)
            .map(|c| Layer {
                spec: LayerSpec {
                    in_ch: 1,
                    ..last.spec
                },
                weight: match last.spec.kind {
                    LayerKind::Conv => last.weight.slice(s![.., c..c + 1, ..]).to_owned(),
                    LayerKind::Tconv => last.weight.slice(s![c..c + 1, .., ..]).to_owned(),
                },
                bias: None,
                bn: None,
            })
            .collect();
        Self {
            model,
            layer,
            input,
            z: model.linear_forward(layer, input),
            tails,
            proj,
        }
    }

    /// Channel `c`'s share of the objective after perturbing one parameter by `delta`.
    fn eval(&self, role: Role, j: usize, delta: f64) -> f64 {
        let (c, zc) = match role {
            Role::Weight => {
                let (c, resp) = self.unit_response(j);
                (c, &self.z.index_axis(Axis(1), c) + &(resp * delta))
            }
            Role::Bias => (j, self.z.index_axis(Axis(1), j).mapv(|v| v + delta)),
            Role::Gamma | Role::Beta => (j, self.z.index_axis(Axis(1), j).to_owned()),
        };
        let mut y = zc;
        if let Some(bn) = &self.layer.bn {
            let n = y.len() as f64;
            let m = y.sum() / n;
            let v = y.fold(0.0, |acc, &x| acc + (x - m) * (x - m)) / n;
            let r = 1.0 / (v + self.model.config().bn_eps).sqrt();
            let g = bn.gamma[c] + if role == Role::Gamma { delta } else { 0.0 };
            let b = bn.beta[c] + if role == Role::Beta { delta } else { 0.0 };
            y.mapv_inplace(|x| g * (x - m) * r + b);
        }
        if self.layer.spec.activation == Activation::Elu {
            y.mapv_inplace(elu);
        }
        let out = self.model.linear_forward(&self.tails[c], &y.insert_axis(Axis(1)));
        (&out * self.proj).sum()
    }

    /// Output channel and `[batch, length]` change of the pre-normalization
    /// output per unit change of weight entry `j`.
    fn unit_response(&self, j: usize) -> (usize, Array2<f64>) {
        let spec = self.layer.spec;
        let [_, d1, k_len] = spec.weight_shape();
        let (a, b, k) = (j / (d1 * k_len), (j / k_len) % d1, j % k_len);
        let g = ConvGeometry {
            kernel: spec.kernel,
            stride: spec.stride,
        };
        let (pl, st) = (g.pad_left() as isize, spec.stride as isize);
        let (batch, _, lin) = self.input.dim();
        let lout = self.z.dim().2;
        let mut resp = Array2::zeros((batch, lout));
        let (channel, ci) = match spec.kind {
            LayerKind::Conv => (a, b),
            LayerKind::Tconv => (b, a),
        };
        let x: ArrayView2<f64> = self.input.index_axis(Axis(1), ci);
        match spec.kind {
            LayerKind::Conv => {
                for t in 0..lout {
                    let src = t as isize * st + k as isize - pl;
                    if (0..lin as isize).contains(&src) {
                        resp.column_mut(t).assign(&x.column(src as usize));
                    }
                }
            }
            LayerKind::Tconv => {
                for t in 0..lin {
                    let dst = t as isize * st + k as isize - pl;
                    if (0..lout as isize).contains(&dst) {
                        resp.column_mut(dst as usize).assign(&x.column(t));
                    }
                }
            }
        }
        (channel, resp)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::neural::{FcnConfig, LayerSpec};

    #[test]
    fn small_network_gradients() {
        // Narrow channels keep this fast; the full-width check lives in the acceptance suite.
        let mut cfg = FcnConfig::with_window(32);
        cfg.layers = vec![
            LayerSpec::conv(1, 3, 2),
            LayerSpec::conv(3, 4, 2),
            LayerSpec::conv(4, 3, 1),
            LayerSpec::tconv(3, 3, 1),
            LayerSpec::tconv(3, 4, 2),
            LayerSpec::tconv(4, 5, 2),
            LayerSpec {
                batch_norm: false,
                activation: crate::neural::Activation::None,
                ..LayerSpec::tconv(5, 1, 1)
            },
        ];
        let model = FcnModel::new(cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array3::from_shape_simple_fn((2, 1, 32), || rng.gen_range(-1.0..1.0));
        let proj = Array3::from_shape_simple_fn((2, 1, 32), || rng.gen_range(-1.0..1.0));
        let r = gradient_check(&model, &x, &proj, 1e-5, 1e-6).unwrap();
        assert_eq!(r.checked, model.num_params());
        assert!(r.max_rel_err < 1e-5, "{r:?}");
    }
}
