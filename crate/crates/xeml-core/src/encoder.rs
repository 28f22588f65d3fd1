//! Conv-n feature encoder.
//!
//! The encoder stacks `depth` ConvBlocks (3x3 conv, pad 1 -> batchnorm ->
//! ReLU -> 2x2 maxpool) with a uniform channel width and flattens the last
//! feature map into the embedding. Parameters live in a [`ParamStore`]
//! keyed by paths like `block2.conv.weight`; the store also carries the
//! batchnorm running statistics so a checkpoint is one self-contained set
//! of state entries.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::ops::{batchnorm2d, conv2d, flatten, maxpool2x2, relu, BnApply, BnRunning};
use crate::rng::{init_stream, stream_rng};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Batchnorm statistics source at meta-test time.
///
/// `Transductive` normalizes with the evaluation batch itself (the common
/// ProtoNet convention and the default); `Running` uses the statistics
/// accumulated during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalBnMode {
    Transductive,
    Running,
}

impl EvalBnMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalBnMode::Transductive => "transductive",
            EvalBnMode::Running => "running",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Number of ConvBlocks, 1 through 6.
    pub depth: usize,
    /// Channel width of every ConvBlock.
    pub channels: usize,
    /// Square input side in pixels.
    pub input_size: usize,
    /// Input channels (3 for RGB).
    pub input_channels: usize,
}

impl EncoderConfig {
    /// Desk-scale default: Conv-4 with 64 channels on 64x64 RGB.
    pub fn desk_default() -> EncoderConfig {
        EncoderConfig {
            depth: 4,
            channels: 64,
            input_size: 64,
            input_channels: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.depth) {
            return Err(CoreError::Config(format!(
                "encoder depth must be in [1, 6], got {}",
                self.depth
            )));
        }
        if self.channels == 0 || self.input_channels == 0 || self.input_size == 0 {
            return Err(CoreError::Config(
                "encoder channels, input_channels, and input_size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Spatial side after `blocks` ceil-mode 2x poolings.
    fn spatial_after(&self, blocks: usize) -> usize {
        let mut s = self.input_size;
        for _ in 0..blocks {
            s = s.div_ceil(2);
        }
        s
    }

    /// Embedding dimension: channels x (final spatial side)^2. Always
    /// computed, never stored.
    pub fn embedding_dim(&self) -> usize {
        let s = self.spatial_after(self.depth);
        self.channels * s * s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    RunningStat,
}

#[derive(Clone, Debug)]
pub struct Param {
    path: String,
    shape: Vec<usize>,
    value: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Param {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn value(&self) -> &[f32] {
        &self.value
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }
}

/// The trainable parameter set of one encoder, plus batchnorm running stats.
#[derive(Clone, Debug)]
pub struct ParamStore {
    params: Vec<Param>,
    bn_running: Vec<BnRunning>,
}

/// Builds and initializes a Conv-n encoder deterministically from `seed`:
/// conv weights are Kaiming-uniform (fan-in), conv biases and batchnorm
/// betas are 0, batchnorm gammas are 1.
pub fn build_encoder(config: &EncoderConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = stream_rng(seed, init_stream());
    let mut params = Vec::new();
    let mut bn_running = Vec::new();
    for block in 0..config.depth {
        let cin = if block == 0 {
            config.input_channels
        } else {
            config.channels
        };
        let cout = config.channels;
        let fan_in = (cin * 9) as f64;
        let bound = libm::sqrt(6.0 / fan_in) as f32;
        let weight: Vec<f32> = (0..cout * cin * 9)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        params.push(Param {
            path: format!("block{block}.conv.weight"),
            shape: vec![cout, cin, 3, 3],
            value: weight,
            grad: None,
        });
        params.push(Param {
            path: format!("block{block}.conv.bias"),
            shape: vec![cout],
            value: vec![0.0; cout],
            grad: None,
        });
        params.push(Param {
            path: format!("block{block}.bn.gamma"),
            shape: vec![cout],
            value: vec![1.0; cout],
            grad: None,
        });
        params.push(Param {
            path: format!("block{block}.bn.beta"),
            shape: vec![cout],
            value: vec![0.0; cout],
            grad: None,
        });
        bn_running.push(BnRunning::new(cout));
    }
    Ok(ParamStore { params, bn_running })
}

impl ParamStore {
    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, path: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.path == path)
    }

    pub fn bn_running(&self, block: usize) -> &BnRunning {
        &self.bn_running[block]
    }

    /// Total trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies leaf gradients off a backpropagated tape, accumulating into
    /// any gradients already present.
    pub fn absorb_grads(&mut self, tape: &Tape) -> Result<()> {
        for (tag, grad) in tape.tagged_grads() {
            let grad = grad.ok_or_else(|| {
                CoreError::Contract("tape gradients missing; run backward first".into())
            })?;
            let param = &mut self.params[tag as usize];
            match &mut param.grad {
                None => param.grad = Some(grad.to_vec()),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(grad) {
                        *a += g;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// p <- p - lr * grad for every parameter, then clears the gradients.
    /// Requires every gradient to be populated.
    pub fn sgd_step(&mut self, lr: f32) -> Result<()> {
        for p in &self.params {
            if p.grad.is_none() {
                return Err(CoreError::Contract(format!(
                    "sgd_step: gradient missing for '{}'",
                    p.path
                )));
            }
        }
        for p in &mut self.params {
            let grad = p.grad.take().expect("checked above");
            for (v, g) in p.value.iter_mut().zip(&grad) {
                *v -= lr * g;
            }
        }
        Ok(())
    }

    /// Mutates one parameter in place (finite-difference probes in tests).
    pub fn nudge(&mut self, path: &str, index: usize, delta: f32) -> Result<()> {
        let param = self
            .params
            .iter_mut()
            .find(|p| p.path == path)
            .ok_or_else(|| CoreError::Contract(format!("no parameter '{path}'")))?;
        param.value[index] += delta;
        Ok(())
    }

    /// Replaces one parameter's values.
    pub fn set_value(&mut self, path: &str, value: Vec<f32>) -> Result<()> {
        let param = self
            .params
            .iter_mut()
            .find(|p| p.path == path)
            .ok_or_else(|| CoreError::Contract(format!("no parameter '{path}'")))?;
        if value.len() != param.value.len() {
            return Err(CoreError::dim(
                "set_value",
                format!("{} values for '{path}' of {}", value.len(), param.value.len()),
            ));
        }
        param.value = value;
        Ok(())
    }

    /// Installs a gradient directly (optimizer tests drive sgd_step this way).
    pub fn set_grad(&mut self, path: &str, grad: Vec<f32>) -> Result<()> {
        let param = self
            .params
            .iter_mut()
            .find(|p| p.path == path)
            .ok_or_else(|| CoreError::Contract(format!("no parameter '{path}'")))?;
        if grad.len() != param.value.len() {
            return Err(CoreError::dim(
                "set_grad",
                format!("{} values for '{path}' of {}", grad.len(), param.value.len()),
            ));
        }
        param.grad = Some(grad);
        Ok(())
    }

    /// All state entries (parameters, then running stats) in checkpoint order.
    pub fn state_entries(&self) -> Vec<StateEntry<'_>> {
        let mut entries: Vec<StateEntry<'_>> = self
            .params
            .iter()
            .map(|p| StateEntry {
                path: p.path.clone(),
                kind: ParamKind::Trainable,
                shape: p.shape.clone(),
                data: &p.value,
            })
            .collect();
        for (block, running) in self.bn_running.iter().enumerate() {
            entries.push(StateEntry {
                path: format!("block{block}.bn.running_mean"),
                kind: ParamKind::RunningStat,
                shape: vec![running.mean.len()],
                data: &running.mean,
            });
            entries.push(StateEntry {
                path: format!("block{block}.bn.running_var"),
                kind: ParamKind::RunningStat,
                shape: vec![running.var.len()],
                data: &running.var,
            });
        }
        entries
    }

    /// Rebuilds a store from `(path, shape, data)` state entries, validating
    /// that the set matches `config` exactly.
    pub fn from_state(
        config: &EncoderConfig,
        entries: &[(String, Vec<usize>, Vec<f32>)],
    ) -> Result<ParamStore> {
        let mut store = build_encoder(config, 0)?;
        let expected: Vec<String> = store
            .state_entries()
            .iter()
            .map(|e| e.path.clone())
            .collect();
        if entries.len() != expected.len() {
            return Err(CoreError::Config(format!(
                "checkpoint has {} state entries, config implies {}",
                entries.len(),
                expected.len()
            )));
        }
        for ((path, shape, data), want) in entries.iter().zip(&expected) {
            if path != want {
                return Err(CoreError::Config(format!(
                    "checkpoint entry '{path}' where '{want}' was expected"
                )));
            }
            store.set_entry(path, shape, data)?;
        }
        Ok(store)
    }

    fn set_entry(&mut self, path: &str, shape: &[usize], data: &[f32]) -> Result<()> {
        if let Some(param) = self.params.iter_mut().find(|p| p.path == path) {
            if param.shape != shape || param.value.len() != data.len() {
                return Err(CoreError::Config(format!(
                    "checkpoint entry '{path}' has shape {shape:?}, expected {:?}",
                    param.shape
                )));
            }
            param.value.copy_from_slice(data);
            return Ok(());
        }
        for (block, running) in self.bn_running.iter_mut().enumerate() {
            let target = if path == format!("block{block}.bn.running_mean") {
                Some(&mut running.mean)
            } else if path == format!("block{block}.bn.running_var") {
                Some(&mut running.var)
            } else {
                None
            };
            if let Some(buf) = target {
                if data.len() != buf.len() {
                    return Err(CoreError::Config(format!(
                        "checkpoint entry '{path}' has {} values, expected {}",
                        data.len(),
                        buf.len()
                    )));
                }
                buf.copy_from_slice(data);
                return Ok(());
            }
        }
        Err(CoreError::Config(format!("unexpected checkpoint entry '{path}'")))
    }

    /// FNV-1a fingerprint over every state entry; identifies a parameter
    /// snapshot in reports and determinism checks (not cryptographic).
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for e in self.state_entries() {
            eat(e.path.as_bytes());
            for &d in &e.shape {
                eat(&(d as u64).to_le_bytes());
            }
            for &v in e.data {
                eat(&v.to_le_bytes());
            }
        }
        h
    }
}

/// One serializable piece of encoder state.
pub struct StateEntry<'a> {
    pub path: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
}

/// Applies every ConvBlock and flattens, recording on the tape and updating
/// batchnorm running statistics (train mode).
pub fn embed_train(
    tape: &mut Tape,
    store: &mut ParamStore,
    config: &EncoderConfig,
    images: &Tensor,
) -> Result<Tensor> {
    check_images(config, images)?;
    let ParamStore { params, bn_running } = store;
    let mut x = images.clone();
    for (block, running) in bn_running.iter_mut().enumerate() {
        let base = block * 4;
        let bind = |tape: &mut Tape, i: usize| -> Result<Tensor> {
            let p = &params[base + i];
            let t = Tensor::with_node(p.shape.clone(), Arc::new(p.value.clone()), None, false);
            Ok(tape.var_tagged((base + i) as u32, &t))
        };
        let weight = bind(tape, 0)?;
        let bias = bind(tape, 1)?;
        let gamma = bind(tape, 2)?;
        let beta = bind(tape, 3)?;
        x = conv2d(tape, &x, &weight, &bias)?;
        x = batchnorm2d(tape, &x, &gamma, &beta, BnApply::Train { running: Some(running) })?;
        x = relu(tape, &x)?;
        x = maxpool2x2(tape, &x)?;
    }
    flatten(tape, &x)
}

/// Forward-only embedding on frozen parameters.
pub fn embed_eval(
    store: &ParamStore,
    config: &EncoderConfig,
    images: &Tensor,
    bn_mode: EvalBnMode,
) -> Result<Tensor> {
    check_images(config, images)?;
    let mut tape = Tape::inference();
    let mut x = images.clone();
    for block in 0..config.depth {
        let base = block * 4;
        let tensor_of = |i: usize| -> Tensor {
            let p = &store.params[base + i];
            Tensor::with_node(p.shape.clone(), Arc::new(p.value.clone()), None, false)
        };
        let (weight, bias, gamma, beta) = (tensor_of(0), tensor_of(1), tensor_of(2), tensor_of(3));
        x = conv2d(&mut tape, &x, &weight, &bias)?;
        let apply = match bn_mode {
            EvalBnMode::Transductive => BnApply::EvalBatch,
            EvalBnMode::Running => BnApply::EvalRunning(&store.bn_running[block]),
        };
        x = batchnorm2d(&mut tape, &x, &gamma, &beta, apply)?;
        x = relu(&mut tape, &x)?;
        x = maxpool2x2(&mut tape, &x)?;
    }
    flatten(&mut tape, &x)
}

fn check_images(config: &EncoderConfig, images: &Tensor) -> Result<()> {
    config.validate()?;
    let s = images.shape();
    if s.len() != 4 || s[1] != config.input_channels || s[2] != config.input_size || s[3] != config.input_size {
        return Err(CoreError::dim(
            "embed",
            format!(
                "images must be [B, {}, {}, {}], got {s:?}",
                config.input_channels, config.input_size, config.input_size
            ),
        ));
    }
    Ok(())
}
