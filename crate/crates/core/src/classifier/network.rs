//! The convolutional network: `[conv1d → batch-norm → ReLU] × blocks →
//! global average pool → dense → softmax`.
//!
//! Activations are channel-major (`[channel][time]`). A convolution is the
//! sum over kernel taps of `W_k · X_shifted`, each a strided GEMM, so no
//! im2col buffer is needed. Batch work is parallel over samples and every
//! cross-sample reduction runs in sample order, which keeps results
//! bitwise reproducible regardless of thread count.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use super::real::{gemm, Real, View};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Layer sizes of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub conv_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<R> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][tap]`.
    pub weight: Vec<R>,
    pub bias: Vec<R>,
    pub gamma: Vec<R>,
    pub beta: Vec<R>,
    pub running_mean: Vec<R>,
    pub running_var: Vec<R>,
}

impl<R: Real> ConvBlock<R> {
    /// Zero padding before the first sample; `kernel - 1 - pad_left` after.
    pub fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn pad_right(&self) -> usize {
        self.kernel - 1 - self.pad_left()
    }

    /// Inference-mode batch-norm as `scale · z + shift` per channel.
    fn folded_norm(&self) -> (Vec<R>, Vec<R>) {
        (0..self.out_channels)
            .map(|c| {
                let scale = self.gamma[c].to_f64() / (self.running_var[c].to_f64() + BN_EPS).sqrt();
                let shift = self.beta[c].to_f64() - self.running_mean[c].to_f64() * scale;
                (R::from_f64(scale), R::from_f64(shift))
            })
            .unzip()
    }
}

/// Computes same-padded convolution outputs for global positions `out_span`
/// of a sequence of length `len`. `input` holds `in_channels` rows covering
/// global positions `in_span`; positions outside `0..len` read as zero.
pub fn conv_span<R: Real>(
    block: &ConvBlock<R>,
    input: &[R],
    in_span: Range<usize>,
    len: usize,
    out: &mut [R],
    out_span: Range<usize>,
) {
    let (cin, cout, taps) = (block.in_channels, block.out_channels, block.kernel);
    let in_n = in_span.len();
    let out_n = out_span.len();
    debug_assert_eq!(input.len(), cin * in_n);
    debug_assert_eq!(out.len(), cout * out_n);
    for (co, row) in out.chunks_exact_mut(out_n.max(1)).enumerate().take(cout) {
        row.fill(block.bias[co]);
    }
    let pad = block.pad_left() as isize;
    for k in 0..taps {
        let shift = k as isize - pad;
        let t0 = (out_span.start as isize).max(-shift);
        let t1 = (out_span.end as isize).min(len as isize - shift);
        if t0 >= t1 {
            continue;
        }
        let s0 = (t0 + shift) as usize;
        let s1 = (t1 + shift) as usize;
        assert!(
            s0 >= in_span.start && s1 <= in_span.end,
            "conv input span {in_span:?} does not cover {s0}..{s1}"
        );
        gemm(
            cout,
            cin,
            (t1 - t0) as usize,
            &block.weight,
            View::new(k, cin * taps, taps),
            input,
            View::new(s0 - in_span.start, in_n, 1),
            R::ONE,
            out,
            View::new(t0 as usize - out_span.start, out_n, 1),
        );
    }
}

/// Gradients of a full-length convolution with respect to its weights,
/// bias and (optionally) input.
fn conv_backward<R: Real>(
    block: &ConvBlock<R>,
    input: &[R],
    dout: &[R],
    len: usize,
    want_input_grad: bool,
) -> (Vec<R>, Vec<R>, Option<Vec<R>>) {
    let (cin, cout, taps) = (block.in_channels, block.out_channels, block.kernel);
    let mut dw = vec![R::ZERO; cout * cin * taps];
    let db: Vec<R> = dout.chunks_exact(len).map(|row| row.iter().copied().sum()).collect();
    let mut din = want_input_grad.then(|| vec![R::ZERO; cin * len]);
    let pad = block.pad_left() as isize;
    for k in 0..taps {
        let shift = k as isize - pad;
        let t0 = 0isize.max(-shift);
        let t1 = (len as isize).min(len as isize - shift);
        if t0 >= t1 {
            continue;
        }
        let (t0, n, s0) = (t0 as usize, (t1 - t0) as usize, (t0 + shift) as usize);
        // dW[co][ci][k] += Σ_t dout[co][t] · x[ci][t + shift]
        gemm(
            cout,
            n,
            cin,
            dout,
            View::new(t0, len, 1),
            input,
            View::new(s0, 1, len),
            R::ONE,
            &mut dw,
            View::new(k, cin * taps, taps),
        );
        // dx[ci][t + shift] += Σ_co W[co][ci][k] · dout[co][t]
        if let Some(din) = din.as_mut() {
            gemm(
                cin,
                cout,
                n,
                &block.weight,
                View::new(k, taps, cin * taps),
                dout,
                View::new(t0, len, 1),
                R::ONE,
                din,
                View::new(s0, len, 1),
            );
        }
    }
    (dw, db, din)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<R> {
    pub arch: Architecture,
    pub blocks: Vec<ConvBlock<R>>,
    /// `[filters][classes]`.
    pub dense_weight: Vec<R>,
    pub dense_bias: Vec<R>,
}

/// Per-layer values kept from a training forward pass.
#[derive(Debug)]
pub struct LayerCache<R> {
    /// Normalized pre-activations, one `[channel][time]` buffer per sample.
    pub xhat: Vec<Vec<R>>,
    /// Post-ReLU outputs.
    pub act: Vec<Vec<R>>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<R>,
}

#[derive(Debug)]
pub struct BatchCache<R> {
    pub len: usize,
    pub layers: Vec<LayerCache<R>>,
    /// Pooled features, `[sample][filter]`.
    pub pooled: Vec<Vec<R>>,
    pub logits: Vec<Vec<f64>>,
    pub log_probs: Vec<Vec<f64>>,
}

impl<R> BatchCache<R> {
    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.log_probs
            .iter()
            .map(|row| row.iter().map(|l| l.exp()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads<R> {
    pub weight: Vec<R>,
    pub bias: Vec<R>,
    pub gamma: Vec<R>,
    pub beta: Vec<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<R> {
    pub blocks: Vec<BlockGrads<R>>,
    pub dense_weight: Vec<R>,
    pub dense_bias: Vec<R>,
}

impl<R: Real> Gradients<R> {
    /// Gradient tensors in [`Network::trainable_mut`] order.
    pub fn slices(&self) -> Vec<&[R]> {
        let mut out: Vec<&[R]> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.weight[..], &b.bias[..], &b.gamma[..], &b.beta[..]]);
        }
        out.push(&self.dense_weight);
        out.push(&self.dense_bias);
        out
    }
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Per-channel mean over time of a channel-major `[channel][len]` buffer.
pub fn global_average_pool<R: Real>(act: &[R], len: usize) -> Vec<f64> {
    act.chunks_exact(len)
        .map(|r| r.iter().map(|v| v.to_f64()).sum::<f64>() / len as f64)
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<R: Real> Network<R> {
    /// Kaiming-uniform weights (`±sqrt(6 / fan_in)`), zero biases, unit
    /// batch-norm scale.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Self {
        let mut blocks = Vec::with_capacity(arch.conv_blocks);
        for b in 0..arch.conv_blocks {
            let cin = if b == 0 { arch.in_channels } else { arch.filters };
            let fan_in = cin * arch.kernel_size;
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            blocks.push(ConvBlock {
                in_channels: cin,
                out_channels: arch.filters,
                kernel: arch.kernel_size,
                weight: (0..arch.filters * fan_in).map(|_| R::from_f64(dist.sample(rng))).collect(),
                bias: vec![R::ZERO; arch.filters],
                gamma: vec![R::ONE; arch.filters],
                beta: vec![R::ZERO; arch.filters],
                running_mean: vec![R::ZERO; arch.filters],
                running_var: vec![R::ONE; arch.filters],
            });
        }
        let bound = (6.0 / arch.filters as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            arch,
            blocks,
            dense_weight: (0..arch.filters * arch.classes)
                .map(|_| R::from_f64(dist.sample(rng)))
                .collect(),
            dense_bias: vec![R::ZERO; arch.classes],
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<S: Real>(&self) -> Network<S> {
        let conv = |v: &[R]| v.iter().map(|x| S::from_f64(x.to_f64())).collect::<Vec<S>>();
        Network {
            arch: self.arch,
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    in_channels: b.in_channels,
                    out_channels: b.out_channels,
                    kernel: b.kernel,
                    weight: conv(&b.weight),
                    bias: conv(&b.bias),
                    gamma: conv(&b.gamma),
                    beta: conv(&b.beta),
                    running_mean: conv(&b.running_mean),
                    running_var: conv(&b.running_var),
                })
                .collect(),
            dense_weight: conv(&self.dense_weight),
            dense_bias: conv(&self.dense_bias),
        }
    }

    /// Trainable tensors: per block weight, bias, gamma, beta; then dense
    /// weight and bias.
    pub fn trainable_mut(&mut self) -> Vec<&mut [R]> {
        let mut out: Vec<&mut [R]> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.dense_weight);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn trainable_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.blocks.len() {
            for n in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
                out.push(format!("block{i}.{n}"));
            }
        }
        out.push("dense.weight".into());
        out.push("dense.bias".into());
        out
    }

    /// Every stored tensor (trainable and running statistics) with its name
    /// and shape, in serialization order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[R])> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.out_channels;
            out.push((format!("block{i}.conv.weight"), vec![c, b.in_channels, b.kernel], &b.weight[..]));
            out.push((format!("block{i}.conv.bias"), vec![c], &b.bias[..]));
            out.push((format!("block{i}.bn.gamma"), vec![c], &b.gamma[..]));
            out.push((format!("block{i}.bn.beta"), vec![c], &b.beta[..]));
            out.push((format!("block{i}.bn.running_mean"), vec![c], &b.running_mean[..]));
            out.push((format!("block{i}.bn.running_var"), vec![c], &b.running_var[..]));
        }
        out.push((
            "dense.weight".into(),
            vec![self.arch.filters, self.arch.classes],
            &self.dense_weight[..],
        ));
        out.push(("dense.bias".into(), vec![self.arch.classes], &self.dense_bias[..]));
        out
    }

    /// Mutable counterpart of [`Network::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<R>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
            out.push(&mut b.running_mean);
            out.push(&mut b.running_var);
        }
        out.push(&mut self.dense_weight);
        out.push(&mut self.dense_bias);
        out
    }

    /// Total reach of the conv stack to the right of an output position.
    pub fn right_halo(&self) -> usize {
        self.blocks.iter().map(ConvBlock::pad_right).sum()
    }

    fn dense(&self, pooled: &[f64]) -> Vec<f64> {
        let classes = self.arch.classes;
        (0..classes)
            .map(|c| {
                self.dense_bias[c].to_f64()
                    + pooled
                        .iter()
                        .enumerate()
                        .map(|(f, p)| p * self.dense_weight[f * classes + c].to_f64())
                        .sum::<f64>()
            })
            .collect()
    }

    /// Batch forward in training mode (batch statistics). `inputs` are
    /// channel-major `[in_channels][len]` buffers.
    pub fn forward_train(&self, inputs: &[Vec<R>], len: usize) -> BatchCache<R> {
        let batch = inputs.len();
        let count = (batch * len) as f64;
        let mut layers: Vec<LayerCache<R>> = Vec::with_capacity(self.blocks.len());

        for (l, block) in self.blocks.iter().enumerate() {
            let prev: &[Vec<R>] = if l == 0 { inputs } else { &layers[l - 1].act };
            let c_out = block.out_channels;
            let mut z: Vec<Vec<R>> = prev
                .par_iter()
                .map(|x| {
                    let mut out = vec![R::ZERO; c_out * len];
                    conv_span(block, x, 0..len, len, &mut out, 0..len);
                    out
                })
                .collect();

            let sums: Vec<Vec<f64>> = z
                .par_iter()
                .map(|zi| zi.chunks_exact(len).map(|r| r.iter().map(|v| v.to_f64()).sum()).collect())
                .collect();
            let mean: Vec<f64> = (0..c_out)
                .map(|c| sums.iter().map(|s| s[c]).sum::<f64>() / count)
                .collect();
            let sq: Vec<Vec<f64>> = z
                .par_iter()
                .map(|zi| {
                    zi.chunks_exact(len)
                        .zip(&mean)
                        .map(|(r, m)| r.iter().map(|v| (v.to_f64() - m).powi(2)).sum())
                        .collect()
                })
                .collect();
            let var: Vec<f64> = (0..c_out)
                .map(|c| sq.iter().map(|s| s[c]).sum::<f64>() / count)
                .collect();
            let inv_std: Vec<R> = var.iter().map(|v| R::from_f64(1.0 / (v + BN_EPS).sqrt())).collect();
            let mean_r: Vec<R> = mean.iter().map(|&m| R::from_f64(m)).collect();

            let act: Vec<Vec<R>> = z
                .par_iter_mut()
                .map(|zi| {
                    let mut a = vec![R::ZERO; zi.len()];
                    for c in 0..c_out {
                        let (m, s, g, b) = (mean_r[c], inv_std[c], block.gamma[c], block.beta[c]);
                        let rows = zi[c * len..(c + 1) * len].iter_mut().zip(&mut a[c * len..(c + 1) * len]);
                        for (x, y) in rows {
                            *x = (*x - m) * s;
                            let pre = g * *x + b;
                            *y = if pre > R::ZERO { pre } else { R::ZERO };
                        }
                    }
                    a
                })
                .collect();

            layers.push(LayerCache {
                xhat: z,
                act,
                mean,
                var,
                inv_std,
            });
        }

        let last = layers.last().expect("at least one conv block");
        let pooled: Vec<Vec<R>> = last
            .act
            .iter()
            .map(|a| global_average_pool(a, len).into_iter().map(R::from_f64).collect())
            .collect();
        let logits: Vec<Vec<f64>> = pooled
            .iter()
            .map(|p| self.dense(&p.iter().map(|v| v.to_f64()).collect::<Vec<_>>()))
            .collect();
        let log_probs = logits.iter().map(|l| log_softmax(l)).collect();
        BatchCache {
            len,
            layers,
            pooled,
            logits,
            log_probs,
        }
    }

    /// Mean cross-entropy against target distributions and its gradient
    /// with respect to the logits.
    pub fn loss_and_logit_grad(cache: &BatchCache<R>, targets: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let batch = cache.log_probs.len() as f64;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(targets.len());
        for (lp, t) in cache.log_probs.iter().zip(targets) {
            loss -= lp.iter().zip(t).map(|(l, y)| if *y == 0.0 { 0.0 } else { y * l }).sum::<f64>();
            grads.push(lp.iter().zip(t).map(|(l, y)| (l.exp() - y) / batch).collect());
        }
        (loss / batch, grads)
    }

    /// Backpropagates logit gradients through the batch cached by
    /// [`Network::forward_train`].
    pub fn backward(&self, inputs: &[Vec<R>], cache: &BatchCache<R>, dlogits: &[Vec<f64>]) -> Gradients<R> {
        let len = cache.len;
        let count = (inputs.len() * len) as f64;
        let (filters, classes) = (self.arch.filters, self.arch.classes);

        let mut dense_weight = vec![0.0f64; filters * classes];
        let mut dense_bias = vec![0.0f64; classes];
        for (p, dl) in cache.pooled.iter().zip(dlogits) {
            for f in 0..filters {
                let pf = p[f].to_f64();
                for c in 0..classes {
                    dense_weight[f * classes + c] += pf * dl[c];
                }
            }
            for c in 0..classes {
                dense_bias[c] += dl[c];
            }
        }
        let dpooled: Vec<Vec<R>> = dlogits
            .iter()
            .map(|dl| {
                (0..filters)
                    .map(|f| {
                        let g: f64 = (0..classes)
                            .map(|c| self.dense_weight[f * classes + c].to_f64() * dl[c])
                            .sum();
                        R::from_f64(g / len as f64)
                    })
                    .collect()
            })
            .collect();

        let mut block_grads: Vec<BlockGrads<R>> = Vec::with_capacity(self.blocks.len());
        // Gradient w.r.t. the current block's activations, when not pooled.
        let mut upstream: Option<Vec<Vec<R>>> = None;

        for l in (0..self.blocks.len()).rev() {
            let block = &self.blocks[l];
            let lc = &cache.layers[l];
            let c_out = block.out_channels;

            // dy = dact ⊙ relu'(gamma·xhat + beta)
            let mut dy: Vec<Vec<R>> = lc
                .xhat
                .par_iter()
                .enumerate()
                .map(|(b, xh)| {
                    let mut out = vec![R::ZERO; xh.len()];
                    for c in 0..c_out {
                        let (g, be) = (block.gamma[c], block.beta[c]);
                        for t in 0..len {
                            let i = c * len + t;
                            if g * xh[i] + be > R::ZERO {
                                out[i] = match &upstream {
                                    None => dpooled[b][c],
                                    Some(up) => up[b][i],
                                };
                            }
                        }
                    }
                    out
                })
                .collect();

            let partial: Vec<(Vec<f64>, Vec<f64>)> = dy
                .par_iter()
                .zip(&lc.xhat)
                .map(|(d, xh)| {
                    let mut s = vec![0.0; c_out];
                    let mut sx = vec![0.0; c_out];
                    for c in 0..c_out {
                        for t in c * len..(c + 1) * len {
                            s[c] += d[t].to_f64();
                            sx[c] += d[t].to_f64() * xh[t].to_f64();
                        }
                    }
                    (s, sx)
                })
                .collect();
            let dbeta: Vec<f64> = (0..c_out).map(|c| partial.iter().map(|p| p.0[c]).sum()).collect();
            let dgamma: Vec<f64> = (0..c_out).map(|c| partial.iter().map(|p| p.1[c]).sum()).collect();

            // dz = gamma·inv_std/N · (N·dy − Σdy − xhat·Σ(dy·xhat)), in place
            let coef: Vec<(R, R, R)> = (0..c_out)
                .map(|c| {
                    let k = block.gamma[c].to_f64() * lc.inv_std[c].to_f64() / count;
                    (R::from_f64(k * count), R::from_f64(k * dbeta[c]), R::from_f64(k * dgamma[c]))
                })
                .collect();
            dy.par_iter_mut().zip(&lc.xhat).for_each(|(d, xh)| {
                for c in 0..c_out {
                    let (a, b, g) = coef[c];
                    for t in c * len..(c + 1) * len {
                        d[t] = a * d[t] - b - g * xh[t];
                    }
                }
            });

            let prev: &[Vec<R>] = if l == 0 { inputs } else { &cache.layers[l - 1].act };
            let want_input = l > 0;
            let parts: Vec<(Vec<R>, Vec<R>, Option<Vec<R>>)> = dy
                .par_iter()
                .zip(prev)
                .map(|(dz, x)| conv_backward(block, x, dz, len, want_input))
                .collect();

            let mut weight = vec![R::ZERO; block.weight.len()];
            let mut bias = vec![R::ZERO; c_out];
            let mut next_up = Vec::with_capacity(parts.len());
            for (dw, db, din) in parts {
                for (acc, v) in weight.iter_mut().zip(dw) {
                    *acc += v;
                }
                for (acc, v) in bias.iter_mut().zip(db) {
                    *acc += v;
                }
                if let Some(din) = din {
                    next_up.push(din);
                }
            }
            upstream = want_input.then_some(next_up);

            block_grads.push(BlockGrads {
                weight,
                bias,
                gamma: dgamma.into_iter().map(R::from_f64).collect(),
                beta: dbeta.into_iter().map(R::from_f64).collect(),
            });
        }
        block_grads.reverse();

        Gradients {
            blocks: block_grads,
            dense_weight: dense_weight.into_iter().map(R::from_f64).collect(),
            dense_bias: dense_bias.into_iter().map(R::from_f64).collect(),
        }
    }

    /// Folds the batch statistics of `cache` into the running estimates
    /// (momentum [`BN_MOMENTUM`], unbiased variance).
    pub fn update_running_stats(&mut self, cache: &BatchCache<R>, batch: usize) {
        let n = (batch * cache.len) as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (block, lc) in self.blocks.iter_mut().zip(&cache.layers) {
            for c in 0..block.out_channels {
                let rm = block.running_mean[c].to_f64();
                let rv = block.running_var[c].to_f64();
                block.running_mean[c] = R::from_f64((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * lc.mean[c]);
                block.running_var[c] = R::from_f64((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * lc.var[c] * unbias);
            }
        }
    }

    /// Inference-mode sums of the final activations over `span`, for a
    /// sequence of length `len` whose channel-major input is `input`
    /// (`[in_channels][len]`). Only input positions within the span's
    /// receptive field are read.
    pub fn infer_span_sums(&self, input: &[R], len: usize, span: Range<usize>) -> Vec<f64> {
        let blocks = self.blocks.len();
        let mut spans = vec![0..0; blocks];
        let (mut lo, mut hi) = (span.start, span.end);
        spans[blocks - 1] = span.clone();
        for l in (0..blocks - 1).rev() {
            let next = &self.blocks[l + 1];
            lo = lo.saturating_sub(next.pad_left());
            hi = (hi + next.pad_right()).min(len);
            spans[l] = lo..hi;
        }

        let mut prev_buf: Vec<R> = Vec::new();
        let mut prev_span = 0..len;
        for (l, block) in self.blocks.iter().enumerate() {
            let out_span = spans[l].clone();
            let mut out = vec![R::ZERO; block.out_channels * out_span.len()];
            let src: &[R] = if l == 0 { input } else { &prev_buf };
            conv_span(block, src, prev_span.clone(), len, &mut out, out_span.clone());
            let (scale, shift) = block.folded_norm();
            let n = out_span.len();
            for c in 0..block.out_channels {
                for v in &mut out[c * n..(c + 1) * n] {
                    let y = scale[c] * *v + shift[c];
                    *v = if y > R::ZERO { y } else { R::ZERO };
                }
            }
            prev_buf = out;
            prev_span = out_span;
        }
        let n = prev_span.len();
        prev_buf
            .chunks_exact(n.max(1))
            .take(self.arch.filters)
            .map(|r| r.iter().map(|v| v.to_f64()).sum())
            .collect()
    }

    /// Class probabilities from pooled activation sums over `len` positions.
    pub fn head(&self, sums: &[f64], len: usize) -> Vec<f64> {
        let pooled: Vec<f64> = sums.iter().map(|s| s / len as f64).collect();
        softmax(&self.dense(&pooled))
    }

    /// Inference-mode class probabilities for one channel-major input.
    pub fn infer(&self, input: &[R], len: usize) -> Vec<f64> {
        let sums = self.infer_span_sums(input, len, 0..len);
        self.head(&sums, len)
    }
}
