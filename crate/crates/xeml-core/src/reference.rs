//! Test-support reference implementations (`oracle` feature).
//!
//! Everything here is written in f64 with plain loops, independent of the
//! tape, GEMM, and im2col machinery in the main path, so tests can compare
//! the engine against a second, simpler route. The direct six-loop
//! convolution is the canonical check for the GEMM-based forward; the
//! full-episode forward supports central-difference gradient checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{EncoderConfig, ParamStore};
use crate::sampler::Episode;

/// Direct six-loop 3x3 convolution, stride 1, zero padding 1.
pub fn conv2d_direct(
    x: &[f64],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    bias: &[f64],
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; batch * cout * plane];
    for b in 0..batch {
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * cin + ci) * h + sy as usize) * w + sx as usize];
                                let wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b * cout + co) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

/// Train-mode batch normalization with biased batch variance, epsilon 1e-5.
pub fn batchnorm_train(
    x: &[f64],
    batch: usize,
    channels: usize,
    plane: usize,
    gamma: &[f64],
    beta: &[f64],
) -> Vec<f64> {
    let m = (batch * plane) as f64;
    let mut out = vec![0.0; x.len()];
    for c in 0..channels {
        let mut sum = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for v in &x[base..base + plane] {
                sum += v;
            }
        }
        let mean = sum / m;
        let mut sq = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for v in &x[base..base + plane] {
                sq += (v - mean) * (v - mean);
            }
        }
        let inv_std = 1.0 / libm::sqrt(sq / m + 1e-5);
        for b in 0..batch {
            let base = (b * channels + c) * plane;
            for (o, v) in out[base..base + plane].iter_mut().zip(&x[base..base + plane]) {
                *o = gamma[c] * (v - mean) * inv_std + beta[c];
            }
        }
    }
    out
}

pub fn relu_direct(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Ceil-mode 2x2/stride-2 sliding-window max; returns (data, oh, ow).
pub fn maxpool2x2_direct(
    x: &[f64],
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; batch * channels * oh * ow];
    let mut oi = 0;
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for y in (oy * 2)..(oy * 2 + 2).min(h) {
                        for xx in (ox * 2)..(ox * 2 + 2).min(w) {
                            let v = x[base + y * w + xx];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out[oi] = best;
                    oi += 1;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Per-class mean of support rows: [N*K, d] -> [N, d].
pub fn class_mean_direct(x: &[f64], labels: &[usize], n_way: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_way * d];
    let mut counts = vec![0usize; n_way];
    for (row, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for i in 0..d {
            out[l * d + i] += x[row * d + i];
        }
    }
    for l in 0..n_way {
        for i in 0..d {
            out[l * d + i] /= counts[l] as f64;
        }
    }
    out
}

/// out[q][n] = sum_k (queries[q][k] - prototypes[n][k])^2.
pub fn pairwise_sq_dist_direct(q: &[f64], p: &[f64], n_q: usize, n_p: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_q * n_p];
    for qi in 0..n_q {
        for pi in 0..n_p {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = q[qi * d + k] - p[pi * d + k];
                acc += diff * diff;
            }
            out[qi * n_p + pi] = acc;
        }
    }
    out
}

pub fn log_softmax_direct(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
        let log_denom = libm::log(denom);
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = v - max - log_denom;
        }
    }
    out
}

pub fn cross_entropy_direct(log_probs: &[f64], labels: &[usize], cols: usize) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| log_probs[i * cols + l])
        .sum();
    -total / labels.len() as f64
}

/// f64 copies of an encoder's trainable parameters, addressable by a flat
/// coordinate over the store's parameter order.
pub struct F64Params {
    values: Vec<Vec<f64>>,
    names: Vec<alloc::string::String>,
}

impl F64Params {
    pub fn from_store(store: &ParamStore) -> F64Params {
        let mut values = Vec::new();
        let mut names = Vec::new();
        for p in store.params() {
            values.push(p.value().iter().map(|&v| v as f64).collect());
            names.push(alloc::string::String::from(p.path()));
        }
        F64Params { values, names }
    }

    pub fn total_len(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// (parameter path, offset within it) for a flat coordinate.
    pub fn locate(&self, flat: usize) -> (&str, usize) {
        let mut rest = flat;
        for (name, vals) in self.names.iter().zip(&self.values) {
            if rest < vals.len() {
                return (name, rest);
            }
            rest -= vals.len();
        }
        panic!("flat coordinate {flat} out of range");
    }

    pub fn nudge(&mut self, flat: usize, delta: f64) {
        let mut rest = flat;
        for vals in &mut self.values {
            if rest < vals.len() {
                vals[rest] += delta;
                return;
            }
            rest -= vals.len();
        }
        panic!("flat coordinate {flat} out of range");
    }

    fn block(&self, index: usize) -> [&[f64]; 4] {
        core::array::from_fn(|i| self.values[index * 4 + i].as_slice())
    }
}

/// Full episode forward in f64 (train-mode batchnorm, support and queries
/// embedded as one batch), mirroring the engine's loss definition but via
/// the direct-loop reference ops only.
pub fn episode_loss_direct(
    params: &F64Params,
    config: &EncoderConfig,
    episode: &Episode,
) -> f64 {
    let [c, h, w] = episode.image_shape;
    let batch = episode.support.len() + episode.query.len();
    let mut x: Vec<f64> = Vec::with_capacity(batch * c * h * w);
    for (img, _) in episode.support.iter().chain(episode.query.iter()) {
        x.extend(img.iter().map(|&v| v as f64));
    }

    let (mut cin, mut hh, mut ww) = (c, h, w);
    for block in 0..config.depth {
        let [weight, bias, gamma, beta] = params.block(block);
        let cout = config.channels;
        x = conv2d_direct(&x, batch, cin, hh, ww, weight, cout, bias);
        x = batchnorm_train(&x, batch, cout, hh * ww, gamma, beta);
        x = relu_direct(&x);
        let (pooled, oh, ow) = maxpool2x2_direct(&x, batch, cout, hh, ww);
        x = pooled;
        cin = cout;
        hh = oh;
        ww = ow;
    }
    let d = cin * hh * ww;

    let n_support = episode.support.len();
    let support = &x[..n_support * d];
    let queries = &x[n_support * d..];
    let n_way = episode.n_way();
    let protos = class_mean_direct(support, &episode.support_labels(), n_way, d);
    let dist = pairwise_sq_dist_direct(queries, &protos, episode.query.len(), n_way, d);
    let logits: Vec<f64> = dist.iter().map(|&v| -v).collect();
    let logp = log_softmax_direct(&logits, episode.query.len(), n_way);
    cross_entropy_direct(&logp, &episode.query_labels(), n_way)
}
