//! Layer primitives with explicit forward/backward passes.
//!
//! Tensors are `(N, C, H, W)` in f64. Convolutions go through im2col + GEMM;
//! the per-sample work is parallelized over the batch and reduced in sample
//! order, so results are bit-identical regardless of thread scheduling.

use ndarray::{s, Array1, Array2, Array4, ArrayView3, Axis};
use rayon::prelude::*;

use super::param::Param;

/// How batch normalization obtains its statistics during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnStats {
    /// Statistics from the current batch (standard training behavior).
    Batch,
    /// Running statistics even in training mode. Decouples samples, which
    /// makes gradient accumulation exactly equal to large-batch training.
    Frozen,
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct Conv2d {
    pub weight: Param, // (out_c, in_c * k * k)
    pub bias: Param,   // (out_c,)
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    cache: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, rng: &mut impl rand::Rng) -> Self {
        use rand_distr::{Distribution, Normal};
        let fan_in = (in_c * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let weight = ndarray::ArrayD::from_shape_fn(
            ndarray::IxDyn(&[out_c, in_c * k * k]),
            |_| normal.sample(rng),
        );
        let bias = ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_c]));
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_c,
            out_c,
            k,
            cache: None,
        }
    }

    fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn forward(&mut self, x: &Array4<f64>, training: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        debug_assert_eq!(c, self.in_c);
        let weight = self
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("weight is 2-d");
        let bias = &self.bias.value;
        let k = self.k;
        let pad = self.pad();

        let outputs: Vec<Array2<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let cols = im2col(&x.index_axis(Axis(0), i), k, pad);
                cols.dot(&weight.t())
            })
            .collect();

        let mut out = Array4::zeros((n, self.out_c, h, w));
        for (i, flat) in outputs.into_iter().enumerate() {
            for oc in 0..self.out_c {
                let b = bias[[oc]];
                let col = flat.column(oc);
                let mut plane = out.slice_mut(s![i, oc, .., ..]);
                for r in 0..h {
                    for cc in 0..w {
                        plane[[r, cc]] = col[r * w + cc] + b;
                    }
                }
            }
        }
        if training {
            self.cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let x = self.cache.take().expect("conv backward without forward");
        let (n, _, h, w) = x.dim();
        let k = self.k;
        let pad = self.pad();
        let weight = self
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("weight is 2-d");

        struct SampleGrads {
            dx: Array4<f64>,
            dw: Array2<f64>,
            db: Array1<f64>,
        }

        let per_sample: Vec<SampleGrads> = (0..n)
            .into_par_iter()
            .map(|i| {
                // Recompute im2col from the cached input instead of caching
                // the columns; trades ~30% conv time for a batch-sized
                // memory footprint.
                let cols = im2col(&x.index_axis(Axis(0), i), k, pad);
                let go = grad_out.index_axis(Axis(0), i);
                let mut dy_flat = Array2::zeros((h * w, self.out_c));
                for oc in 0..self.out_c {
                    for r in 0..h {
                        for cc in 0..w {
                            dy_flat[[r * w + cc, oc]] = go[[oc, r, cc]];
                        }
                    }
                }
                let dw = dy_flat.t().dot(&cols);
                let db = dy_flat.sum_axis(Axis(0));
                let dcols = dy_flat.dot(&weight);
                let mut dx = Array4::zeros((1, self.in_c, h, w));
                col2im(&dcols, self.in_c, h, w, k, pad, &mut dx);
                SampleGrads { dx, dw, db }
            })
            .collect();

        let mut grad_in = Array4::zeros(x.dim());
        let mut dw_view = self
            .weight
            .grad
            .view_mut()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("weight grad is 2-d");
        let mut db_view = self
            .bias
            .grad
            .view_mut()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("bias grad is 1-d");
        for (i, g) in per_sample.into_iter().enumerate() {
            grad_in
                .slice_mut(s![i, .., .., ..])
                .assign(&g.dx.slice(s![0, .., .., ..]));
            dw_view += &g.dw;
            db_view += &g.db;
        }
        grad_in
    }
}

/// (C, H, W) → (H·W, C·k²) patch matrix with zero padding.
fn im2col(x: &ArrayView3<f64>, k: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((h * w, c * k * k));
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let col_idx = ch * k * k + ki * k + kj;
                let di = ki as isize - pad as isize;
                let dj = kj as isize - pad as isize;
                for r in 0..h {
                    let rr = r as isize + di;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for cc in 0..w {
                        let cj = cc as isize + dj;
                        if cj < 0 || cj >= w as isize {
                            continue;
                        }
                        cols[[r * w + cc, col_idx]] = x[[ch, rr as usize, cj as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the column gradient back to input layout.
fn col2im(
    dcols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    dx: &mut Array4<f64>,
) {
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let col_idx = ch * k * k + ki * k + kj;
                let di = ki as isize - pad as isize;
                let dj = kj as isize - pad as isize;
                for r in 0..h {
                    let rr = r as isize + di;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for cc in 0..w {
                        let cj = cc as isize + dj;
                        if cj < 0 || cj >= w as isize {
                            continue;
                        }
                        dx[[0, ch, rr as usize, cj as usize]] += dcols[[r * w + cc, col_idx]];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug)]
struct BnCache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
    batch_stats: bool,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(ndarray::ArrayD::ones(ndarray::IxDyn(&[channels]))),
            beta: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[channels]))),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, training: bool, stats: BnStats) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let use_batch_stats = training && stats == BnStats::Batch;

        let (mean, var) = if use_batch_stats {
            let mut mean = Array1::zeros(c);
            let mut var = Array1::zeros(c);
            for ch in 0..c {
                let plane = x.slice(s![.., ch, .., ..]);
                let mu = plane.sum() / m;
                let v = plane.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / m;
                mean[ch] = mu;
                var[ch] = v;
            }
            // Running stats use the unbiased variance, as is conventional.
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for ch in 0..c {
                self.running_mean[ch] =
                    (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
                self.running_var[ch] = (1.0 - self.momentum) * self.running_var[ch]
                    + self.momentum * var[ch] * unbias;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut xhat = x.clone();
        for ch in 0..c {
            let mu = mean[ch];
            let is = inv_std[ch];
            xhat.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mu) * is);
        }
        let gamma = &self.gamma.value;
        let beta = &self.beta.value;
        let mut out = xhat.clone();
        for ch in 0..c {
            let g = gamma[[ch]];
            let b = beta[[ch]];
            out.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| v * g + b);
        }
        if training {
            self.cache = Some(BnCache {
                xhat,
                inv_std,
                batch_stats: use_batch_stats,
            });
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("bn backward without forward");
        let (n, c, h, w) = grad_out.dim();
        let m = (n * h * w) as f64;
        let mut grad_in = Array4::zeros(grad_out.dim());
        for ch in 0..c {
            let dy = grad_out.slice(s![.., ch, .., ..]);
            let xh = cache.xhat.slice(s![.., ch, .., ..]);
            let g = self.gamma.value[[ch]];
            let is = cache.inv_std[ch];

            let sum_dy: f64 = dy.sum();
            let sum_dy_xhat: f64 = dy.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
            self.gamma.grad[[ch]] += sum_dy_xhat;
            self.beta.grad[[ch]] += sum_dy;

            let mut gi = grad_in.slice_mut(s![.., ch, .., ..]);
            if cache.batch_stats {
                // Batch statistics couple the samples.
                let mean_dy = sum_dy / m;
                let mean_dy_xhat = sum_dy_xhat / m;
                ndarray::Zip::from(&mut gi).and(&dy).and(&xh).for_each(
                    |out, &dyv, &xhv| {
                        *out = g * is * (dyv - mean_dy - xhv * mean_dy_xhat);
                    },
                );
            } else {
                ndarray::Zip::from(&mut gi).and(&dy).for_each(|out, &dyv| {
                    *out = g * is * dyv;
                });
            }
        }
        grad_in
    }
}

// ---------------------------------------------------------------------------
// Activations and shape ops
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct Elu {
    cache: Option<Array4<f64>>,
}

impl Elu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Array4<f64>, training: bool) -> Array4<f64> {
        let y = x.mapv(|v| if v > 0.0 { v } else { v.exp() - 1.0 });
        if training {
            self.cache = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let y = self.cache.take().expect("elu backward without forward");
        let mut grad = grad_out.clone();
        ndarray::Zip::from(&mut grad).and(&y).for_each(|g, &yv| {
            *g *= if yv > 0.0 { 1.0 } else { yv + 1.0 };
        });
        grad
    }
}

#[derive(Debug, Default)]
pub struct MaxPool2 {
    // Argmax offset (0..=3) per output element.
    cache: Option<(Array4<u8>, (usize, usize, usize, usize))>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Array4<f64>, training: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        debug_assert!(h % 2 == 0 && w % 2 == 0, "pool needs even extents");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Array4::zeros((n, c, oh, ow));
        let mut arg = Array4::<u8>::zeros((n, c, oh, ow));
        for i in 0..n {
            for ch in 0..c {
                for r in 0..oh {
                    for cc in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_k = 0u8;
                        for k in 0..4u8 {
                            let (dr, dc) = ((k / 2) as usize, (k % 2) as usize);
                            let v = x[[i, ch, 2 * r + dr, 2 * cc + dc]];
                            if v > best {
                                best = v;
                                best_k = k;
                            }
                        }
                        out[[i, ch, r, cc]] = best;
                        arg[[i, ch, r, cc]] = best_k;
                    }
                }
            }
        }
        if training {
            self.cache = Some((arg, (n, c, h, w)));
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (arg, dim) = self.cache.take().expect("pool backward without forward");
        let (n, c, h, w) = dim;
        let mut grad_in = Array4::zeros((n, c, h, w));
        let (oh, ow) = (h / 2, w / 2);
        for i in 0..n {
            for ch in 0..c {
                for r in 0..oh {
                    for cc in 0..ow {
                        let k = arg[[i, ch, r, cc]];
                        let (dr, dc) = ((k / 2) as usize, (k % 2) as usize);
                        grad_in[[i, ch, 2 * r + dr, 2 * cc + dc]] += grad_out[[i, ch, r, cc]];
                    }
                }
            }
        }
        grad_in
    }
}

/// Nearest-neighbor 2x upsampling.
#[derive(Debug, Default)]
pub struct Upsample2x;

impl Upsample2x {
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(i, ch, r, cc)| {
            x[[i, ch, r / 2, cc / 2]]
        })
    }

    pub fn backward(&self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (n, c, h2, w2) = grad_out.dim();
        let (h, w) = (h2 / 2, w2 / 2);
        let mut grad_in = Array4::zeros((n, c, h, w));
        for i in 0..n {
            for ch in 0..c {
                for r in 0..h2 {
                    for cc in 0..w2 {
                        grad_in[[i, ch, r / 2, cc / 2]] += grad_out[[i, ch, r, cc]];
                    }
                }
            }
        }
        grad_in
    }
}

pub fn sigmoid(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|z| 1.0 / (1.0 + (-z).exp()))
}

/// Concatenate along the channel axis.
pub fn concat_channels(a: &Array4<f64>, b: &Array4<f64>) -> Array4<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching shapes")
}

/// Split a channel-concatenated gradient back into the two parts.
pub fn split_channels(grad: &Array4<f64>, first: usize) -> (Array4<f64>, Array4<f64>) {
    let a = grad.slice(s![.., ..first, .., ..]).to_owned();
    let b = grad.slice(s![.., first.., .., ..]).to_owned();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn finite_diff_check<F>(x: &Array4<f64>, grad_analytic: &Array4<f64>, mut loss: F)
    where
        F: FnMut(&Array4<f64>) -> f64,
    {
        let step = 1e-5;
        let mut xp = x.clone();
        for idx in ndarray::indices(x.raw_dim()) {
            let orig = xp[idx];
            xp[idx] = orig + step;
            let plus = loss(&xp);
            xp[idx] = orig - step;
            let minus = loss(&xp);
            xp[idx] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let g = grad_analytic[idx];
            let denom = fd.abs().max(g.abs()).max(1e-6);
            assert!(
                (fd - g).abs() / denom < 1e-4,
                "fd {fd} vs analytic {g} at {idx:?}"
            );
        }
    }

    // Scalar test loss: sum of squares / 2, so dL/dy = y.
    fn half_sq_sum(y: &Array4<f64>) -> f64 {
        y.iter().map(|v| v * v).sum::<f64>() / 2.0
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut conv = Conv2d::new(2, 3, 3, &mut rng);
        let x = Array4::from_shape_fn((2, 2, 5, 5), |_| rng.gen_range(-1.0..1.0));

        let y = conv.forward(&x, true);
        let dx = conv.backward(&y.clone());
        finite_diff_check(&x, &dx, |xi| {
            let mut c2 = Conv2d::new(2, 3, 3, &mut ChaCha20Rng::seed_from_u64(99));
            c2.weight.value.assign(&conv.weight.value);
            c2.bias.value.assign(&conv.bias.value);
            half_sq_sum(&c2.forward(xi, false))
        });
    }

    #[test]
    fn conv_weight_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(1, 2, 3, &mut rng);
        let x = Array4::from_shape_fn((1, 1, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let y = conv.forward(&x, true);
        let _ = conv.backward(&y.clone());
        let analytic = conv.weight.grad.clone();

        let step = 1e-5;
        for idx in ndarray::indices(conv.weight.value.raw_dim()) {
            let orig = conv.weight.value[&idx];
            conv.weight.value[&idx] = orig + step;
            let plus = half_sq_sum(&conv.forward(&x, false));
            conv.weight.value[&idx] = orig - step;
            let minus = half_sq_sum(&conv.forward(&x, false));
            conv.weight.value[&idx] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let g = analytic[&idx];
            let denom = fd.abs().max(g.abs()).max(1e-6);
            assert!((fd - g).abs() / denom < 1e-4, "fd {fd} vs {g}");
        }
    }

    #[test]
    fn batchnorm_normalizes_and_backprops() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::new(2);
        let x = Array4::from_shape_fn((3, 2, 4, 4), |_| rng.gen_range(-2.0..2.0) + 1.5);
        let y = bn.forward(&x, true, BnStats::Batch);
        // Output is standardized per channel.
        for ch in 0..2 {
            let plane = y.slice(s![.., ch, .., ..]);
            let m = plane.sum() / 48.0;
            let v = plane.iter().map(|&a| (a - m) * (a - m)).sum::<f64>() / 48.0;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-3);
        }

        // Gradient check through batch statistics.
        let dy = Array4::from_shape_fn((3, 2, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let _ = bn.forward(&x, true, BnStats::Batch);
        let dx = bn.backward(&dy);
        let step = 1e-5;
        let mut xp = x.clone();
        for idx in [[0usize, 0, 0, 0], [1, 1, 2, 3], [2, 0, 3, 1]] {
            let orig = xp[idx];
            let loss_at = |xv: &Array4<f64>| {
                let mut bn2 = BatchNorm2d::new(2);
                bn2.gamma.value.assign(&bn.gamma.value);
                bn2.beta.value.assign(&bn.beta.value);
                let out = bn2.forward(xv, true, BnStats::Batch);
                out.iter().zip(dy.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            xp[idx] = orig + step;
            let plus = loss_at(&xp);
            xp[idx] = orig - step;
            let minus = loss_at(&xp);
            xp[idx] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let g = dx[idx];
            assert!(
                (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6) < 1e-3,
                "bn grad fd {fd} vs {g}"
            );
        }
    }

    #[test]
    fn frozen_bn_decouples_samples() {
        // With frozen statistics, each sample's output is independent of the
        // rest of the batch.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut bn = BatchNorm2d::new(1);
        bn.running_mean[0] = 0.3;
        bn.running_var[0] = 2.0;
        let a = Array4::from_shape_fn((1, 1, 2, 2), |_| rng.gen_range(-1.0..1.0));
        let b = Array4::from_shape_fn((1, 1, 2, 2), |_| rng.gen_range(-1.0..1.0));
        let ya = bn.forward(&a, true, BnStats::Frozen);
        let batch = ndarray::concatenate(Axis(0), &[a.view(), b.view()]).unwrap();
        let yb = bn.forward(&batch, true, BnStats::Frozen);
        for idx in ndarray::indices(ya.raw_dim()) {
            assert_eq!(ya[idx], yb[idx]);
        }
        // Running stats must be untouched by frozen-mode forwards.
        assert_eq!(bn.running_mean[0], 0.3);
        assert_eq!(bn.running_var[0], 2.0);
    }

    #[test]
    fn elu_matches_definition() {
        let x = Array4::from_shape_vec((1, 1, 1, 3), vec![-1.0, 0.0, 2.0]).unwrap();
        let mut elu = Elu::new();
        let y = elu.forward(&x, true);
        assert!((y[[0, 0, 0, 0]] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(y[[0, 0, 0, 1]], 0.0);
        assert_eq!(y[[0, 0, 0, 2]], 2.0);
        let dy = Array4::ones((1, 1, 1, 3));
        let dx = elu.backward(&dy);
        assert!((dx[[0, 0, 0, 0]] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(dx[[0, 0, 0, 2]], 1.0);
    }

    #[test]
    fn maxpool_forward_backward() {
        let x = Array4::from_shape_vec(
            (1, 1, 2, 4),
            vec![1.0, 3.0, 5.0, 2.0, 4.0, 2.0, 1.0, 6.0],
        )
        .unwrap();
        let mut pool = MaxPool2::new();
        let y = pool.forward(&x, true);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        assert_eq!(y[[0, 0, 0, 1]], 6.0);
        let dy = Array4::from_shape_vec((1, 1, 1, 2), vec![10.0, 20.0]).unwrap();
        let dx = pool.backward(&dy);
        assert_eq!(dx[[0, 0, 1, 0]], 10.0); // argmax at 4.0
        assert_eq!(dx[[0, 0, 1, 3]], 20.0); // argmax at 6.0
        assert_eq!(dx.sum(), 30.0);
    }

    #[test]
    fn upsample_round_trip_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = Array4::from_shape_fn((1, 2, 3, 3), |_| rng.gen::<f64>());
        let up = Upsample2x;
        let y = up.forward(&x);
        assert_eq!(y.dim(), (1, 2, 6, 6));
        assert_eq!(y[[0, 1, 5, 5]], x[[0, 1, 2, 2]]);
        let dy = Array4::ones((1, 2, 6, 6));
        let dx = up.backward(&dy);
        assert!(dx.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn concat_split_inverse() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = Array4::from_shape_fn((2, 3, 4, 4), |_| rng.gen::<f64>());
        let b = Array4::from_shape_fn((2, 5, 4, 4), |_| rng.gen::<f64>());
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.dim(), (2, 8, 4, 4));
        let (a2, b2) = split_channels(&cat, 3);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }
}
