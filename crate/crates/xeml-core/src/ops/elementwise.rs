//! Elementwise and reduction ops: ReLU, scalar scaling, full sum.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::tape::{GradSink, Record, Tape};
use crate::tensor::Tensor;

pub(crate) struct ReluRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub x: Arc<Vec<f32>>,
}

/// max(0, x); the subgradient at exactly 0 is 0.
pub fn relu(tape: &mut Tape, input: &Tensor) -> Result<Tensor> {
    let out: Vec<f32> = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let shape = input.shape().to_vec();
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::Relu(ReluRecord {
            out: out_idx,
            x_node,
            x: input.data_arc(),
        }));
        Ok(Tensor::with_node(shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(shape, Arc::new(out), None, false))
    }
}

pub(crate) fn relu_backward(rec: &ReluRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    let dx = go
        .iter()
        .zip(rec.x.iter())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    sink.add(rec.x_node, dx);
}

pub(crate) struct ScaleRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub factor: f32,
}

/// factor * x.
pub fn scale(tape: &mut Tape, input: &Tensor, factor: f32) -> Result<Tensor> {
    let out: Vec<f32> = input.data().iter().map(|&v| v * factor).collect();
    let shape = input.shape().to_vec();
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::Scale(ScaleRecord {
            out: out_idx,
            x_node,
            factor,
        }));
        Ok(Tensor::with_node(shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(shape, Arc::new(out), None, false))
    }
}

pub(crate) fn scale_backward(rec: &ScaleRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    sink.add(rec.x_node, go.iter().map(|&g| g * rec.factor).collect());
}

pub(crate) struct SumRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub n: usize,
}

/// Sum of all elements, as a scalar tensor.
pub fn sum(tape: &mut Tape, input: &Tensor) -> Result<Tensor> {
    let total: f64 = input.data().iter().map(|&v| v as f64).sum();
    let out = vec![total as f32];
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(1, true);
        let data = Arc::new(out);
        tape.push_record(Record::Sum(SumRecord {
            out: out_idx,
            x_node,
            n: input.len(),
        }));
        Ok(Tensor::with_node(Vec::new(), data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(Vec::new(), Arc::new(out), None, false))
    }
}

pub(crate) fn sum_backward(rec: &SumRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    sink.add(rec.x_node, vec![go[0]; rec.n]);
}
