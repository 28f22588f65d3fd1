//! Per-channel batch normalization over (B,H,W), epsilon 1e-5.
//!
//! Train mode normalizes with batch statistics and, when given running
//! state, folds the batch statistics in with momentum 0.1 (unbiased variance
//! for the running estimate, biased for normalization). The two eval modes
//! normalize with the current batch's statistics (transductive) or with the
//! stored running statistics; neither is differentiable.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tape::{GradSink, Record, Tape};
use crate::tensor::Tensor;

pub(crate) const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Running mean/variance per channel, updated during training.
#[derive(Clone, Debug, PartialEq)]
pub struct BnRunning {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl BnRunning {
    /// Identity-normalization start: mean 0, variance 1.
    pub fn new(channels: usize) -> BnRunning {
        BnRunning {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// How the statistics are sourced for one batchnorm application.
pub enum BnApply<'a> {
    /// Batch statistics; differentiable; updates `running` when present.
    Train { running: Option<&'a mut BnRunning> },
    /// Batch statistics of the evaluation batch (transductive), no update.
    EvalBatch,
    /// Stored running statistics.
    EvalRunning(&'a BnRunning),
}

pub(crate) struct BnRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub gamma_node: Option<u32>,
    pub beta_node: Option<u32>,
    pub x: Arc<Vec<f32>>,
    pub gamma: Arc<Vec<f32>>,
    pub channels: usize,
    pub batch: usize,
    pub plane: usize,
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

pub fn batchnorm2d(
    tape: &mut Tape,
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mode: BnApply<'_>,
) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() != 4 {
        return Err(CoreError::dim(
            "batchnorm2d",
            format!("input must be [B,C,H,W], got {shape:?}"),
        ));
    }
    let (batch, channels, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    if gamma.shape() != [channels] || beta.shape() != [channels] {
        return Err(CoreError::dim(
            "batchnorm2d",
            format!(
                "gamma {:?} / beta {:?} must be [C={channels}]",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let m = batch * plane;

    let wants = tape.wants_grad(&[input, gamma, beta])?;
    let train = matches!(mode, BnApply::Train { .. });
    if wants && !train {
        return Err(CoreError::Contract(
            "batchnorm eval modes are not differentiable; use an inference tape".into(),
        ));
    }
    if train && m < 2 {
        return Err(CoreError::DegenerateBatch(m));
    }

    // Per-channel statistics to normalize with.
    let (mean, inv_std) = match &mode {
        BnApply::Train { .. } | BnApply::EvalBatch => batch_stats(input.data(), batch, channels, plane),
        BnApply::EvalRunning(running) => {
            if running.mean.len() != channels {
                return Err(CoreError::dim(
                    "batchnorm2d",
                    format!("running stats track {} channels, input has {channels}", running.mean.len()),
                ));
            }
            let inv_std = running
                .var
                .iter()
                .map(|&v| (1.0 / libm::sqrt(v as f64 + EPS)) as f32)
                .collect();
            (running.mean.clone(), inv_std)
        }
    };

    if let BnApply::Train { running: Some(running) } = mode {
        if running.mean.len() != channels {
            return Err(CoreError::dim(
                "batchnorm2d",
                format!("running stats track {} channels, input has {channels}", running.mean.len()),
            ));
        }
        // Unbiased batch variance for the running estimate.
        let bessel = m as f64 / (m as f64 - 1.0);
        for c in 0..channels {
            let var = variance_from_inv_std(inv_std[c]);
            running.mean[c] =
                ((1.0 - MOMENTUM) * running.mean[c] as f64 + MOMENTUM * mean[c] as f64) as f32;
            running.var[c] =
                ((1.0 - MOMENTUM) * running.var[c] as f64 + MOMENTUM * var * bessel) as f32;
        }
    }

    let x = input.data();
    let g = gamma.data();
    let b = beta.data();
    let mut out = vec![0.0f32; x.len()];
    for img in 0..batch {
        for c in 0..channels {
            let scale = g[c] * inv_std[c];
            let shift = b[c] - mean[c] * scale;
            let base = (img * channels + c) * plane;
            for (o, v) in out[base..base + plane].iter_mut().zip(&x[base..base + plane]) {
                *o = v * scale + shift;
            }
        }
    }

    let out_shape = shape.to_vec();
    if wants {
        let x_node = tape.node_index(input)?.filter(|_| input.requires_grad());
        let gamma_node = tape.node_index(gamma)?.filter(|_| gamma.requires_grad());
        let beta_node = tape.node_index(beta)?.filter(|_| beta.requires_grad());
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::BatchNorm(BnRecord {
            out: out_idx,
            x_node,
            gamma_node,
            beta_node,
            x: input.data_arc(),
            gamma: gamma.data_arc(),
            channels,
            batch,
            plane,
            mean,
            inv_std,
        }));
        Ok(Tensor::with_node(out_shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(out_shape, Arc::new(out), None, false))
    }
}

fn batch_stats(x: &[f32], batch: usize, channels: usize, plane: usize) -> (Vec<f32>, Vec<f32>) {
    let m = (batch * plane) as f64;
    let mut mean = vec![0.0f32; channels];
    let mut inv_std = vec![0.0f32; channels];
    for c in 0..channels {
        let mut sum = 0.0f64;
        for img in 0..batch {
            let base = (img * channels + c) * plane;
            for v in &x[base..base + plane] {
                sum += *v as f64;
            }
        }
        let mu = sum / m;
        let mut sq = 0.0f64;
        for img in 0..batch {
            let base = (img * channels + c) * plane;
            for v in &x[base..base + plane] {
                let d = *v as f64 - mu;
                sq += d * d;
            }
        }
        let var = sq / m; // biased, used for normalization
        mean[c] = mu as f32;
        inv_std[c] = (1.0 / libm::sqrt(var + EPS)) as f32;
    }
    (mean, inv_std)
}

fn variance_from_inv_std(inv_std: f32) -> f64 {
    1.0 / (inv_std as f64 * inv_std as f64) - EPS
}

pub(crate) fn backward(rec: &BnRecord, go: &[f32], sink: &mut GradSink<'_>) {
    let (batch, channels, plane) = (rec.batch, rec.channels, rec.plane);
    let m = (batch * plane) as f64;
    let x = &rec.x;

    // Channel sums of dy and dy*xhat drive every gradient.
    let mut sum_dy = vec![0.0f64; channels];
    let mut sum_dy_xhat = vec![0.0f64; channels];
    for img in 0..batch {
        for c in 0..channels {
            let base = (img * channels + c) * plane;
            let (mu, istd) = (rec.mean[c] as f64, rec.inv_std[c] as f64);
            let mut s = 0.0f64;
            let mut sx = 0.0f64;
            for (dy, v) in go[base..base + plane].iter().zip(&x[base..base + plane]) {
                let xhat = (*v as f64 - mu) * istd;
                s += *dy as f64;
                sx += *dy as f64 * xhat;
            }
            sum_dy[c] += s;
            sum_dy_xhat[c] += sx;
        }
    }

    if rec.beta_node.is_some() {
        sink.add(rec.beta_node, sum_dy.iter().map(|&v| v as f32).collect());
    }
    if rec.gamma_node.is_some() {
        sink.add(rec.gamma_node, sum_dy_xhat.iter().map(|&v| v as f32).collect());
    }
    if rec.x_node.is_some() {
        let mut dx = vec![0.0f32; x.len()];
        for img in 0..batch {
            for c in 0..channels {
                let base = (img * channels + c) * plane;
                let (mu, istd) = (rec.mean[c] as f64, rec.inv_std[c] as f64);
                let g = rec.gamma[c] as f64 * istd;
                let mean_dy = sum_dy[c] / m;
                let mean_dy_xhat = sum_dy_xhat[c] / m;
                for ((d, dy), v) in dx[base..base + plane]
                    .iter_mut()
                    .zip(&go[base..base + plane])
                    .zip(&x[base..base + plane])
                {
                    let xhat = (*v as f64 - mu) * istd;
                    *d = (g * (*dy as f64 - mean_dy - xhat * mean_dy_xhat)) as f32;
                }
            }
        }
        sink.add(rec.x_node, dx);
    }
}
