//! Encoder–decoder segmentation network: U-Net layout with batch
//! normalization and ELU activations, a single sigmoid output channel, and
//! hand-wired backpropagation.

use ndarray::{s, Array2, Array4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::layers::{
    concat_channels, sigmoid, split_channels, BatchNorm2d, BnStats, Conv2d, Elu, MaxPool2,
    Upsample2x,
};
use super::param::Param;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {got} channels, network expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("overlap {overlap} must be smaller than patch/2 = {half}")]
    BadOverlap { overlap: usize, half: usize },
    #[error("patch {patch} exceeds tile extent {h}x{w}")]
    PatchTooLarge { patch: usize, h: usize, w: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    /// Batch-statistics behavior during training.
    pub bn_stats: BnStats,
}

impl NetConfig {
    /// Desk-scale preset: small enough to train on CPU in minutes.
    pub fn desk(in_channels: usize) -> Self {
        Self {
            depth: 4,
            base_channels: 16,
            in_channels,
            bn_stats: BnStats::Batch,
        }
    }

    /// Full-scale preset matching the experimental setup.
    pub fn paper(in_channels: usize) -> Self {
        Self {
            depth: 4,
            base_channels: 64,
            in_channels,
            bn_stats: BnStats::Batch,
        }
    }

    pub fn multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Debug)]
struct ConvBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    elu1: Elu,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    elu2: Elu,
}

impl ConvBlock {
    fn new(in_c: usize, out_c: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            conv1: Conv2d::new(in_c, out_c, 3, rng),
            bn1: BatchNorm2d::new(out_c),
            elu1: Elu::new(),
            conv2: Conv2d::new(out_c, out_c, 3, rng),
            bn2: BatchNorm2d::new(out_c),
            elu2: Elu::new(),
        }
    }

    fn forward(&mut self, x: &Array4<f64>, training: bool, stats: BnStats) -> Array4<f64> {
        let x = self.conv1.forward(x, training);
        let x = self.bn1.forward(&x, training, stats);
        let x = self.elu1.forward(&x, training);
        let x = self.conv2.forward(&x, training);
        let x = self.bn2.forward(&x, training, stats);
        self.elu2.forward(&x, training)
    }

    fn backward(&mut self, grad: &Array4<f64>) -> Array4<f64> {
        let grad = self.elu2.backward(grad);
        let grad = self.bn2.backward(&grad);
        let grad = self.conv2.backward(&grad);
        let grad = self.elu1.backward(&grad);
        let grad = self.bn1.backward(&grad);
        self.conv1.backward(&grad)
    }
}

#[derive(Debug)]
struct UpBlock {
    upsample: Upsample2x,
    up_conv: Conv2d,
    up_bn: BatchNorm2d,
    up_elu: Elu,
    block: ConvBlock,
    skip_channels: usize,
}

#[derive(Debug)]
pub struct UNet {
    pub config: NetConfig,
    encoders: Vec<ConvBlock>,
    pools: Vec<MaxPool2>,
    bottleneck: ConvBlock,
    decoders: Vec<UpBlock>, // deepest first
    head: Conv2d,
    forward_shape: Option<ForwardShape>,
}

#[derive(Debug, Clone, Copy)]
struct ForwardShape {
    orig_h: usize,
    orig_w: usize,
    padded_h: usize,
    padded_w: usize,
}

impl UNet {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let d = config.depth;
        let b = config.base_channels;

        let mut encoders = Vec::with_capacity(d);
        let mut pools = Vec::with_capacity(d);
        let mut in_c = config.in_channels;
        for i in 0..d {
            let out_c = b << i;
            encoders.push(ConvBlock::new(in_c, out_c, &mut rng));
            pools.push(MaxPool2::new());
            in_c = out_c;
        }
        let bottleneck = ConvBlock::new(b << (d - 1), b << d, &mut rng);

        let mut decoders = Vec::with_capacity(d);
        for i in (0..d).rev() {
            let deep_c = b << (i + 1);
            let out_c = b << i;
            decoders.push(UpBlock {
                upsample: Upsample2x,
                up_conv: Conv2d::new(deep_c, out_c, 3, &mut rng),
                up_bn: BatchNorm2d::new(out_c),
                up_elu: Elu::new(),
                block: ConvBlock::new(deep_c, out_c, &mut rng),
                skip_channels: out_c,
            });
        }
        let head = Conv2d::new(b, 1, 1, &mut rng);
        Self {
            config,
            encoders,
            pools,
            bottleneck,
            decoders,
            head,
            forward_shape: None,
        }
    }

    /// Forward pass producing per-pixel probabilities `(N, 1, H, W)` matching
    /// the input spatial shape. Inputs whose extents are not divisible by
    /// `2^depth` are zero-padded on the bottom/right and the output cropped
    /// back, so callers never see the padding.
    pub fn forward(&mut self, x: &Array4<f64>, training: bool) -> Result<Array4<f64>, ModelError> {
        Ok(sigmoid(&self.forward_logits(x, training)?))
    }

    pub fn forward_logits(
        &mut self,
        x: &Array4<f64>,
        training: bool,
    ) -> Result<Array4<f64>, ModelError> {
        let (n, c, h, w) = x.dim();
        if c != self.config.in_channels {
            return Err(ModelError::ChannelMismatch {
                expected: self.config.in_channels,
                got: c,
            });
        }
        let mult = self.config.multiple();
        let ph = h.div_ceil(mult) * mult;
        let pw = w.div_ceil(mult) * mult;
        let padded = if (ph, pw) == (h, w) {
            x.clone()
        } else {
            let mut p = Array4::zeros((n, c, ph, pw));
            p.slice_mut(s![.., .., ..h, ..w]).assign(x);
            p
        };
        self.forward_shape = Some(ForwardShape {
            orig_h: h,
            orig_w: w,
            padded_h: ph,
            padded_w: pw,
        });

        let stats = self.config.bn_stats;
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut cur = padded;
        for (enc, pool) in self.encoders.iter_mut().zip(self.pools.iter_mut()) {
            let feat = enc.forward(&cur, training, stats);
            cur = pool.forward(&feat, training);
            skips.push(feat);
        }
        cur = self.bottleneck.forward(&cur, training, stats);
        for dec in self.decoders.iter_mut() {
            let skip = skips.pop().expect("one skip per decoder");
            let up = dec.upsample.forward(&cur);
            let up = dec.up_conv.forward(&up, training);
            let up = dec.up_bn.forward(&up, training, stats);
            let up = dec.up_elu.forward(&up, training);
            let cat = concat_channels(&skip, &up);
            cur = dec.block.forward(&cat, training, stats);
        }
        let logits = self.head.forward(&cur, training);
        Ok(logits.slice(s![.., .., ..h, ..w]).to_owned())
    }

    /// Backpropagate from the gradient w.r.t. the (cropped) logits and
    /// accumulate parameter gradients.
    pub fn backward_from_logits(&mut self, dlogits: &Array4<f64>) {
        let shape = self
            .forward_shape
            .expect("backward_from_logits without forward");
        let (n, c, _, _) = dlogits.dim();
        let grad = if (shape.padded_h, shape.padded_w) == (shape.orig_h, shape.orig_w) {
            dlogits.clone()
        } else {
            let mut g = Array4::zeros((n, c, shape.padded_h, shape.padded_w));
            g.slice_mut(s![.., .., ..shape.orig_h, ..shape.orig_w])
                .assign(dlogits);
            g
        };
        let mut grad = self.head.backward(&grad);
        // Decoders ran deepest-first in forward, so walk them in reverse.
        let mut skip_grads = Vec::with_capacity(self.decoders.len());
        for dec in self.decoders.iter_mut().rev() {
            let grad_cat = dec.block.backward(&grad);
            let (g_skip, g_up) = split_channels(&grad_cat, dec.skip_channels);
            let g_up = dec.up_elu.backward(&g_up);
            let g_up = dec.up_bn.backward(&g_up);
            let g_up = dec.up_conv.backward(&g_up);
            grad = dec.upsample.backward(&g_up);
            skip_grads.push(g_skip);
        }
        // skip_grads is shallowest-first here; encoders run shallowest-first
        // in forward, so walk encoders in reverse pairing with skip grads.
        grad = self.bottleneck.backward(&grad);
        for (enc, pool) in self
            .encoders
            .iter_mut()
            .zip(self.pools.iter_mut())
            .rev()
        {
            let g_skip = skip_grads.pop().expect("one skip grad per encoder");
            let g_pool = pool.backward(&grad);
            let total = &g_pool + &g_skip;
            grad = enc.backward(&total);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    /// Walk all trainable parameters in a fixed order with stable names.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            visit_block_mut(&format!("enc{i}"), enc, f);
        }
        visit_block_mut("bottleneck", &mut self.bottleneck, f);
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            let p = format!("dec{i}");
            f(&format!("{p}.up_conv.weight"), &mut dec.up_conv.weight);
            f(&format!("{p}.up_conv.bias"), &mut dec.up_conv.bias);
            f(&format!("{p}.up_bn.gamma"), &mut dec.up_bn.gamma);
            f(&format!("{p}.up_bn.beta"), &mut dec.up_bn.beta);
            visit_block_mut(&format!("{p}.block"), &mut dec.block, f);
        }
        f("head.weight", &mut self.head.weight);
        f("head.bias", &mut self.head.bias);
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        for (i, enc) in self.encoders.iter().enumerate() {
            visit_block(&format!("enc{i}"), enc, f);
        }
        visit_block("bottleneck", &self.bottleneck, f);
        for (i, dec) in self.decoders.iter().enumerate() {
            let p = format!("dec{i}");
            f(&format!("{p}.up_conv.weight"), &dec.up_conv.weight);
            f(&format!("{p}.up_conv.bias"), &dec.up_conv.bias);
            f(&format!("{p}.up_bn.gamma"), &dec.up_bn.gamma);
            f(&format!("{p}.up_bn.beta"), &dec.up_bn.beta);
            visit_block(&format!("{p}.block"), &dec.block, f);
        }
        f("head.weight", &self.head.weight);
        f("head.bias", &self.head.bias);
    }

    /// Walk the non-trainable running statistics (batch-norm buffers).
    pub fn visit_buffers(&self, f: &mut dyn FnMut(&str, &ndarray::Array1<f64>)) {
        for (i, enc) in self.encoders.iter().enumerate() {
            visit_block_buffers(&format!("enc{i}"), enc, f);
        }
        visit_block_buffers("bottleneck", &self.bottleneck, f);
        for (i, dec) in self.decoders.iter().enumerate() {
            let p = format!("dec{i}");
            f(&format!("{p}.up_bn.running_mean"), &dec.up_bn.running_mean);
            f(&format!("{p}.up_bn.running_var"), &dec.up_bn.running_var);
            visit_block_buffers(&format!("{p}.block"), &dec.block, f);
        }
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut ndarray::Array1<f64>)) {
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            visit_block_buffers_mut(&format!("enc{i}"), enc, f);
        }
        visit_block_buffers_mut("bottleneck", &mut self.bottleneck, f);
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            let p = format!("dec{i}");
            f(&format!("{p}.up_bn.running_mean"), &mut dec.up_bn.running_mean);
            f(&format!("{p}.up_bn.running_var"), &mut dec.up_bn.running_var);
            visit_block_buffers_mut(&format!("{p}.block"), &mut dec.block, f);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }
}

fn visit_block_mut(prefix: &str, b: &mut ConvBlock, f: &mut dyn FnMut(&str, &mut Param)) {
    f(&format!("{prefix}.conv1.weight"), &mut b.conv1.weight);
    f(&format!("{prefix}.conv1.bias"), &mut b.conv1.bias);
    f(&format!("{prefix}.bn1.gamma"), &mut b.bn1.gamma);
    f(&format!("{prefix}.bn1.beta"), &mut b.bn1.beta);
    f(&format!("{prefix}.conv2.weight"), &mut b.conv2.weight);
    f(&format!("{prefix}.conv2.bias"), &mut b.conv2.bias);
    f(&format!("{prefix}.bn2.gamma"), &mut b.bn2.gamma);
    f(&format!("{prefix}.bn2.beta"), &mut b.bn2.beta);
}

fn visit_block(prefix: &str, b: &ConvBlock, f: &mut dyn FnMut(&str, &Param)) {
    f(&format!("{prefix}.conv1.weight"), &b.conv1.weight);
    f(&format!("{prefix}.conv1.bias"), &b.conv1.bias);
    f(&format!("{prefix}.bn1.gamma"), &b.bn1.gamma);
    f(&format!("{prefix}.bn1.beta"), &b.bn1.beta);
    f(&format!("{prefix}.conv2.weight"), &b.conv2.weight);
    f(&format!("{prefix}.conv2.bias"), &b.conv2.bias);
    f(&format!("{prefix}.bn2.gamma"), &b.bn2.gamma);
    f(&format!("{prefix}.bn2.beta"), &b.bn2.beta);
}

fn visit_block_buffers(prefix: &str, b: &ConvBlock, f: &mut dyn FnMut(&str, &ndarray::Array1<f64>)) {
    f(&format!("{prefix}.bn1.running_mean"), &b.bn1.running_mean);
    f(&format!("{prefix}.bn1.running_var"), &b.bn1.running_var);
    f(&format!("{prefix}.bn2.running_mean"), &b.bn2.running_mean);
    f(&format!("{prefix}.bn2.running_var"), &b.bn2.running_var);
}

fn visit_block_buffers_mut(
    prefix: &str,
    b: &mut ConvBlock,
    f: &mut dyn FnMut(&str, &mut ndarray::Array1<f64>),
) {
    f(&format!("{prefix}.bn1.running_mean"), &mut b.bn1.running_mean);
    f(&format!("{prefix}.bn1.running_var"), &mut b.bn1.running_var);
    f(&format!("{prefix}.bn2.running_mean"), &mut b.bn2.running_mean);
    f(&format!("{prefix}.bn2.running_var"), &mut b.bn2.running_var);
}

// ---------------------------------------------------------------------------
// Whole-tile prediction with overlap-average stitching
// ---------------------------------------------------------------------------

/// Predict a probability raster for a whole tile by running overlapping
/// patches and averaging every pixel over its contributing predictions.
/// Seams cannot introduce discontinuities because the blend is a plain
/// per-pixel mean.
pub fn predict_tile(
    net: &mut UNet,
    tile: &crate::grid::RasterTile,
    patch: usize,
    overlap: usize,
) -> Result<Array2<f64>, ModelError> {
    let (h, w) = (tile.height(), tile.width());
    if overlap >= patch.div_ceil(2) {
        return Err(ModelError::BadOverlap {
            overlap,
            half: patch / 2,
        });
    }
    if patch > h || patch > w {
        return Err(ModelError::PatchTooLarge { patch, h, w });
    }
    let stride = patch - overlap;
    let rows = crate::util::patch_offsets(h, patch, stride);
    let cols = crate::util::patch_offsets(w, patch, stride);

    let mut sum = Array2::<f64>::zeros((h, w));
    let mut count = Array2::<f64>::zeros((h, w));
    for &r0 in &rows {
        for &c0 in &cols {
            let x = patch_to_input(tile, r0, c0, patch);
            let probs = net.forward(&x, false)?;
            for r in 0..patch {
                for c in 0..patch {
                    sum[[r0 + r, c0 + c]] += probs[[0, 0, r, c]];
                    count[[r0 + r, c0 + c]] += 1.0;
                }
            }
        }
    }
    Ok(sum / count)
}

/// Crop `(patch × patch)` pixels into network input layout `(1, C, H, W)`.
pub fn patch_to_input(
    tile: &crate::grid::RasterTile,
    row: usize,
    col: usize,
    patch: usize,
) -> Array4<f64> {
    let px = tile.pixels();
    let c = tile.channels();
    Array4::from_shape_fn((1, c, patch, patch), |(_, ch, r, cc)| {
        px[[row + r, col + cc, ch]] as f64
    })
}
