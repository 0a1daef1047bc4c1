//! Strided 1-D correlation, batch normalization and ELU on `[channels, length]`
//! planes, each with its hand-derived adjoint.
//!
//! A convolution from a long signal of `big` samples to `small = big / stride`
//! samples reads a zero-padded copy of length `(small - 1) * stride + kernel`
//! with `(kernel - 1) / 2` zeros on the left. The transposed convolution is
//! the exact adjoint of that map, so it scatters into the padded buffer and
//! crops.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis, Zip};

/// Geometry shared by a convolution and its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn padded_len(&self, small: usize) -> usize {
        (small - 1) * self.stride + self.kernel
    }

    /// The padded window must cover the whole long signal.
    pub fn is_valid(&self) -> bool {
        self.stride >= 1 && self.kernel > self.stride && self.pad_left() + self.stride <= self.kernel
    }
}

/// Copies `x` into a zero buffer of `padded` columns starting at `left`.
pub fn pad(x: ArrayView2<f64>, left: usize, padded: usize) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), padded));
    out.slice_mut(s![.., left..left + x.ncols()]).assign(&x);
    out
}

fn tap<'a>(xp: &ArrayView2<'a, f64>, k: usize, stride: usize, n: usize) -> ArrayView2<'a, f64> {
    (*xp).slice_move(s![.., k..k + stride * (n - 1) + 1;stride])
}

/// `y[o, t] = Σ_{i,k} w[o, i, k] · xp[i, t·stride + k]`, with `n` output columns.
pub fn correlate(w: ArrayView3<f64>, xp: ArrayView2<f64>, stride: usize, n: usize) -> Array2<f64> {
    let mut y = Array2::zeros((w.shape()[0], n));
    for k in 0..w.shape()[2] {
        let wk = w.index_axis(Axis(2), k);
        general_mat_mul(1.0, &wk, &tap(&xp, k, stride, n), 1.0, &mut y);
    }
    y
}

/// Adjoint of [`correlate`] with respect to `xp`; returns `padded` columns.
pub fn correlate_adjoint(w: ArrayView3<f64>, y: ArrayView2<f64>, stride: usize, padded: usize) -> Array2<f64> {
    let n = y.ncols();
    let mut xp = Array2::zeros((w.shape()[1], padded));
    for k in 0..w.shape()[2] {
        let wk = w.index_axis(Axis(2), k);
        let mut dst: ArrayViewMut2<f64> = xp.slice_mut(s![.., k..k + stride * (n - 1) + 1;stride]);
        general_mat_mul(1.0, &wk.t(), &y, 1.0, &mut dst);
    }
    xp
}

/// Gradient of `⟨gy, correlate(w, xp)⟩` with respect to `w`, accumulated into `dw`.
pub fn correlate_weight_grad(xp: ArrayView2<f64>, gy: ArrayView2<f64>, stride: usize, dw: &mut Array3<f64>) {
    let n = gy.ncols();
    for k in 0..dw.shape()[2] {
        let mut dwk = dw.index_axis_mut(Axis(2), k);
        general_mat_mul(1.0, &gy, &tap(&xp, k, stride, n).t(), 1.0, &mut dwk);
    }
}

/// Per-channel statistics of one training batch.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Biased (population) variance, as used for normalization.
    pub var: Array1<f64>,
    /// Values per channel (`batch × length`).
    pub count: usize,
}

/// Normalizes `z` in place per channel over batch and length. Returns the
/// batch statistics and the `1 / sqrt(var + eps)` factors.
pub fn bn_train(z: &mut Array3<f64>, eps: f64) -> (BatchStats, Array1<f64>) {
    let channels = z.shape()[1];
    let count = z.shape()[0] * z.shape()[2];
    let mut mean = Array1::zeros(channels);
    let mut var = Array1::zeros(channels);
    let mut inv_std = Array1::zeros(channels);
    for c in 0..channels {
        let mut lane = z.index_axis_mut(Axis(1), c);
        let m = lane.sum() / count as f64;
        let v = lane.fold(0.0, |acc, &x| acc + (x - m) * (x - m)) / count as f64;
        let r = 1.0 / (v + eps).sqrt();
        lane.mapv_inplace(|x| (x - m) * r);
        mean[c] = m;
        var[c] = v;
        inv_std[c] = r;
    }
    (BatchStats { mean, var, count }, inv_std)
}

/// Normalizes with fixed statistics.
pub fn bn_eval(z: &mut Array3<f64>, mean: &Array1<f64>, var: &Array1<f64>, eps: f64) {
    for (c, mut lane) in z.axis_iter_mut(Axis(1)).enumerate() {
        let (m, r) = (mean[c], 1.0 / (var[c] + eps).sqrt());
        lane.mapv_inplace(|x| (x - m) * r);
    }
}

/// `out = gamma · xhat + beta` per channel.
pub fn affine(xhat: &Array3<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> Array3<f64> {
    let mut out = xhat.clone();
    for (c, mut lane) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (g, b) = (gamma[c], beta[c]);
        lane.mapv_inplace(|x| g * x + b);
    }
    out
}

/// Backward through train-mode batch normalization followed by the affine
/// map. Returns `(dz, dgamma, dbeta)`.
pub fn bn_train_backward(
    dy: &Array3<f64>,
    xhat: &Array3<f64>,
    gamma: &Array1<f64>,
    inv_std: &Array1<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let channels = dy.shape()[1];
    let n = (dy.shape()[0] * dy.shape()[2]) as f64;
    let mut dz = Array3::zeros(dy.raw_dim());
    let mut dgamma = Array1::zeros(channels);
    let mut dbeta = Array1::zeros(channels);
    for c in 0..channels {
        let g = dy.index_axis(Axis(1), c);
        let xh = xhat.index_axis(Axis(1), c);
        let sum_g = g.sum();
        let sum_gx = Zip::from(&g).and(&xh).fold(0.0, |acc, &a, &b| acc + a * b);
        dgamma[c] = sum_gx;
        dbeta[c] = sum_g;
        let k = gamma[c] * inv_std[c] / n;
        Zip::from(dz.index_axis_mut(Axis(1), c))
            .and(&g)
            .and(&xh)
            .for_each(|d, &gi, &xi| *d = k * (n * gi - sum_g - xi * sum_gx));
    }
    (dz, dgamma, dbeta)
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU expressed through its input.
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> ndarray::ArrayD<f64> {
        Array::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn correlate_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for stride in [1, 2] {
            let g = ConvGeometry { kernel: 16, stride };
            let big = 24;
            let small = big / stride;
            let w = random(&[3, 2, 16], &mut rng).into_dimensionality().unwrap();
            let x: Array2<f64> = random(&[2, big], &mut rng).into_dimensionality().unwrap();
            let xp = pad(x.view(), g.pad_left(), g.padded_len(small));
            let y = correlate(w.view(), xp.view(), stride, small);
            for o in 0..3 {
                for t in 0..small {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        for k in 0..16 {
                            let j = (t * stride + k) as isize - g.pad_left() as isize;
                            if (0..big as isize).contains(&j) {
                                acc += w[[o, i, k]] * x[[i, j as usize]];
                            }
                        }
                    }
                    assert!((acc - y[[o, t]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for stride in [1, 2] {
            let g = ConvGeometry { kernel: 16, stride };
            let small = 20;
            let lp = g.padded_len(small);
            let w: Array3<f64> = random(&[4, 3, 16], &mut rng).into_dimensionality().unwrap();
            let xp: Array2<f64> = random(&[3, lp], &mut rng).into_dimensionality().unwrap();
            let y: Array2<f64> = random(&[4, small], &mut rng).into_dimensionality().unwrap();
            let lhs = (&correlate(w.view(), xp.view(), stride, small) * &y).sum();
            let rhs = (&xp * &correlate_adjoint(w.view(), y.view(), stride, lp)).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} {rhs}");
        }
    }

    #[test]
    fn geometry_hits_exact_lengths() {
        for stride in [1, 2] {
            let g = ConvGeometry { kernel: 16, stride };
            assert!(g.is_valid());
            let big = 64;
            assert!(g.padded_len(big / stride) >= g.pad_left() + big);
        }
        assert!(!ConvGeometry { kernel: 2, stride: 2 }.is_valid());
    }

    #[test]
    fn batch_norm_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = Array3::from_shape_fn((16, 4, 256), |(_, c, _)| 3.0 * c as f64 + (c + 1) as f64 * rng.gen_range(-1.0..1.0));
        let (stats, _) = bn_train(&mut z, 1e-5);
        for c in 0..4 {
            let lane = z.index_axis(Axis(1), c);
            let n = lane.len() as f64;
            let m = lane.sum() / n;
            let v = lane.fold(0.0, |a, &x| a + (x - m) * (x - m)) / n;
            assert!(m.abs() < 1e-3 && (v - 1.0).abs() < 1e-3, "{m} {v}");
            assert!((stats.mean[c] - 3.0 * c as f64).abs() < 0.05);
        }
    }

    #[test]
    fn elu_is_continuous_with_unit_slope_at_zero() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu_grad(0.0), 1.0);
        assert!((elu(-1.0) - (-1.0f64).exp_m1()).abs() < 1e-15);
        assert_eq!(elu(2.5), 2.5);
    }
}
