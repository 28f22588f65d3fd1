//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records the operations of one forward pass in topological
//! order; [`Tape::backward`] replays them in reverse, accumulating gradients
//! per recorded node. Tapes are single-use: after a backward pass the tape is
//! consumed, and a second backward is an error. [`Tape::reset`] clears the
//! recording and invalidates every node handle created before the reset.
//!
//! A tape and its tensors are confined to one logical thread; distinct tapes
//! on distinct threads are independent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use crate::error::{CoreError, Result};
use crate::ops::batchnorm::BnRecord;
use crate::ops::conv::ConvRecord;
use crate::ops::elementwise::{ReluRecord, ScaleRecord, SumRecord};
use crate::ops::metric::{ClassMeanRecord, CrossEntropyRecord, LogSoftmaxRecord, PairwiseRecord};
use crate::ops::pool::PoolRecord;
use crate::ops::shape_ops::{FlattenRecord, SliceRowsRecord};
use crate::tensor::{NodeId, Tensor};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

pub(crate) enum Record {
    Conv(ConvRecord),
    BatchNorm(BnRecord),
    Relu(ReluRecord),
    Scale(ScaleRecord),
    Sum(SumRecord),
    MaxPool(PoolRecord),
    Flatten(FlattenRecord),
    SliceRows(SliceRowsRecord),
    ClassMean(ClassMeanRecord),
    Pairwise(PairwiseRecord),
    LogSoftmax(LogSoftmaxRecord),
    CrossEntropy(CrossEntropyRecord),
}

struct NodeInfo {
    len: usize,
    requires_grad: bool,
}

/// Gradient accumulator handed to the per-op backward rules.
pub(crate) struct GradSink<'a> {
    grads: &'a mut Vec<Option<Vec<f32>>>,
}

impl GradSink<'_> {
    /// Adds `contrib` to the gradient of `node`; `None` nodes are constants.
    pub(crate) fn add(&mut self, node: Option<u32>, contrib: Vec<f32>) {
        let Some(idx) = node else { return };
        let slot = &mut self.grads[idx as usize];
        match slot {
            None => *slot = Some(contrib),
            Some(acc) => {
                debug_assert_eq!(acc.len(), contrib.len());
                for (a, c) in acc.iter_mut().zip(contrib.iter()) {
                    *a += c;
                }
            }
        }
    }
}

pub struct Tape {
    id: u32,
    generation: u32,
    recording: bool,
    consumed: bool,
    nodes: Vec<NodeInfo>,
    records: Vec<Record>,
    grads: Vec<Option<Vec<f32>>>,
    /// (caller tag, node index) pairs registered through [`Tape::var_tagged`].
    tagged: Vec<(u32, u32)>,
}

impl Tape {
    /// Tape that records operations for a later backward pass.
    pub fn train() -> Tape {
        Tape::new(true)
    }

    /// Tape that runs forward passes only; nothing is recorded.
    pub fn inference() -> Tape {
        Tape::new(false)
    }

    fn new(recording: bool) -> Tape {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
            recording,
            consumed: false,
            nodes: Vec::new(),
            records: Vec::new(),
            grads: Vec::new(),
            tagged: Vec::new(),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Clears every recording. Node handles from before the reset become
    /// invalid and any use of them is an error.
    pub fn reset(&mut self) {
        self.generation += 1;
        self.consumed = false;
        self.nodes.clear();
        self.records.clear();
        self.grads.clear();
        self.tagged.clear();
    }

    /// Registers a differentiable leaf; the returned tensor shares `t`'s data.
    ///
    /// On an inference tape this is a no-op view of the input.
    pub fn var(&mut self, t: &Tensor) -> Tensor {
        self.var_internal(t, None)
    }

    /// As [`Tape::var`], tagging the leaf so callers can fetch its gradient
    /// by tag after backward (used for parameter stores).
    pub(crate) fn var_tagged(&mut self, tag: u32, t: &Tensor) -> Tensor {
        self.var_internal(t, Some(tag))
    }

    fn var_internal(&mut self, t: &Tensor, tag: Option<u32>) -> Tensor {
        if !self.recording {
            return Tensor::with_node(t.shape().to_vec(), t.data_arc(), None, false);
        }
        let idx = self.push_node(t.len(), true);
        if let Some(tag) = tag {
            self.tagged.push((tag, idx));
        }
        Tensor::with_node(
            t.shape().to_vec(),
            t.data_arc(),
            Some(self.node_id(idx)),
            true,
        )
    }

    pub(crate) fn node_id(&self, index: u32) -> NodeId {
        NodeId {
            tape: self.id,
            generation: self.generation,
            index,
        }
    }

    pub(crate) fn push_node(&mut self, len: usize, requires_grad: bool) -> u32 {
        let idx = self.nodes.len() as u32;
        self.nodes.push(NodeInfo { len, requires_grad });
        self.grads.push(None);
        idx
    }

    pub(crate) fn push_record(&mut self, record: Record) {
        self.records.push(record);
    }

    /// Node index of `t` on this tape, if it has one. A handle minted by a
    /// different tape or an earlier generation is a tape error.
    pub(crate) fn node_index(&self, t: &Tensor) -> Result<Option<u32>> {
        match t.node() {
            None => Ok(None),
            Some(id) => {
                if id.tape != self.id {
                    return Err(CoreError::Tape(format!(
                        "tensor belongs to tape {}, not tape {}",
                        id.tape, self.id
                    )));
                }
                if id.generation != self.generation {
                    return Err(CoreError::Tape(
                        "node handle predates a tape reset".into(),
                    ));
                }
                Ok(Some(id.index))
            }
        }
    }

    /// True when the op consuming `inputs` must be recorded. Recording onto
    /// an already-consumed tape is an error rather than a silent skip.
    pub(crate) fn wants_grad(&self, inputs: &[&Tensor]) -> Result<bool> {
        if !self.recording {
            return Ok(false);
        }
        let any = inputs.iter().any(|t| t.requires_grad());
        if any && self.consumed {
            return Err(CoreError::Tape(
                "cannot record an op on a consumed tape; reset it first".into(),
            ));
        }
        Ok(any)
    }

    /// Propagates gradients from a scalar loss back to every recorded node.
    ///
    /// Afterwards the gradient of each `requires_grad` node is fully
    /// populated (zeros where the loss does not depend on it) and the tape
    /// is consumed.
    pub fn backward(&mut self, loss: &Tensor) -> Result<()> {
        if self.consumed {
            return Err(CoreError::Tape(
                "backward already ran; the tape is consumed".into(),
            ));
        }
        if !loss.is_scalar() {
            return Err(CoreError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let Some(loss_idx) = self.node_index(loss)? else {
            return Err(CoreError::Tape("loss is not recorded on this tape".into()));
        };
        self.consumed = true;
        self.grads[loss_idx as usize] = Some(vec![1.0]);

        let records = core::mem::take(&mut self.records);
        for record in records.iter().rev() {
            let out = record_output(record);
            // Every consumer of `out` has already run, so its gradient is final.
            let Some(go) = self.grads[out as usize].take() else {
                continue;
            };
            {
                let mut sink = GradSink {
                    grads: &mut self.grads,
                };
                match record {
                    Record::Conv(r) => crate::ops::conv::backward(r, &go, &mut sink),
                    Record::BatchNorm(r) => crate::ops::batchnorm::backward(r, &go, &mut sink),
                    Record::Relu(r) => crate::ops::elementwise::relu_backward(r, &go, &mut sink),
                    Record::Scale(r) => crate::ops::elementwise::scale_backward(r, &go, &mut sink),
                    Record::Sum(r) => crate::ops::elementwise::sum_backward(r, &go, &mut sink),
                    Record::MaxPool(r) => crate::ops::pool::backward(r, &go, &mut sink),
                    Record::Flatten(r) => crate::ops::shape_ops::flatten_backward(r, go.clone(), &mut sink),
                    Record::SliceRows(r) => crate::ops::shape_ops::slice_rows_backward(r, &go, &mut sink),
                    Record::ClassMean(r) => crate::ops::metric::class_mean_backward(r, &go, &mut sink),
                    Record::Pairwise(r) => crate::ops::metric::pairwise_backward(r, &go, &mut sink),
                    Record::LogSoftmax(r) => crate::ops::metric::log_softmax_backward(r, &go, &mut sink),
                    Record::CrossEntropy(r) => crate::ops::metric::cross_entropy_backward(r, &go, &mut sink),
                }
            }
            self.grads[out as usize] = Some(go);
        }

        for (info, grad) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if info.requires_grad && grad.is_none() {
                *grad = Some(vec![0.0; info.len]);
            }
        }
        Ok(())
    }

    /// Gradient of `t`, if populated by [`Tape::backward`].
    pub fn grad(&self, t: &Tensor) -> Result<Option<&[f32]>> {
        match self.node_index(t)? {
            None => Ok(None),
            Some(idx) => Ok(self.grads[idx as usize].as_deref()),
        }
    }

    /// Gradients of tagged leaves, in registration order.
    pub(crate) fn tagged_grads(&self) -> impl Iterator<Item = (u32, Option<&[f32]>)> {
        self.tagged
            .iter()
            .map(move |&(tag, idx)| (tag, self.grads[idx as usize].as_deref()))
    }
}

fn record_output(record: &Record) -> u32 {
    match record {
        Record::Conv(r) => r.out,
        Record::BatchNorm(r) => r.out,
        Record::Relu(r) => r.out,
        Record::Scale(r) => r.out,
        Record::Sum(r) => r.out,
        Record::MaxPool(r) => r.out,
        Record::Flatten(r) => r.out,
        Record::SliceRows(r) => r.out,
        Record::ClassMean(r) => r.out,
        Record::Pairwise(r) => r.out,
        Record::LogSoftmax(r) => r.out,
        Record::CrossEntropy(r) => r.out,
    }
}
