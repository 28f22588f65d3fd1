//! Layout ops: flatten, reshape, row slicing.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tape::{GradSink, Record, Tape};
use crate::tensor::Tensor;

pub(crate) struct FlattenRecord {
    pub out: u32,
    pub x_node: Option<u32>,
}

/// [B, d1, d2, ...] -> [B, d1*d2*...]; row-major, so the data is shared,
/// and the gradient passes through unchanged.
pub fn flatten(tape: &mut Tape, input: &Tensor) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() < 2 {
        return Err(CoreError::dim(
            "flatten",
            format!("input must have a leading batch dim, got {shape:?}"),
        ));
    }
    let out_shape = vec![shape[0], shape[1..].iter().product()];
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(input.len(), true);
        tape.push_record(Record::Flatten(FlattenRecord {
            out: out_idx,
            x_node,
        }));
        Ok(Tensor::with_node(
            out_shape,
            input.data_arc(),
            Some(tape.node_id(out_idx)),
            true,
        ))
    } else {
        Ok(Tensor::with_node(out_shape, input.data_arc(), None, false))
    }
}

pub(crate) fn flatten_backward(rec: &FlattenRecord, go: Vec<f32>, sink: &mut GradSink<'_>) {
    sink.add(rec.x_node, go);
}

/// Non-differentiable reshape for plain tensors (inverse of [`flatten`] in
/// tests and data plumbing). Rejects tape-recorded inputs so a gradient path
/// can never be silently dropped.
pub fn reshape(input: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if input.node().is_some() {
        return Err(CoreError::Contract(
            "reshape is not differentiable; use flatten for recorded tensors".into(),
        ));
    }
    let expected: usize = shape.iter().product();
    if expected != input.len() {
        return Err(CoreError::dim(
            "reshape",
            format!("cannot view {:?} as {shape:?}", input.shape()),
        ));
    }
    Ok(Tensor::with_node(shape.to_vec(), input.data_arc(), None, false))
}

pub(crate) struct SliceRowsRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub start_elem: usize,
    pub x_len: usize,
}

/// Copies rows [start, start+count) of a [R, d] matrix.
pub fn slice_rows(tape: &mut Tape, input: &Tensor, start: usize, count: usize) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() != 2 {
        return Err(CoreError::dim(
            "slice_rows",
            format!("input must be [R,d], got {shape:?}"),
        ));
    }
    let (rows, d) = (shape[0], shape[1]);
    if start + count > rows {
        return Err(CoreError::dim(
            "slice_rows",
            format!("rows [{start}, {}) out of range for R={rows}", start + count),
        ));
    }
    let out: Vec<f32> = input.data()[start * d..(start + count) * d].to_vec();
    let out_shape = vec![count, d];
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::SliceRows(SliceRowsRecord {
            out: out_idx,
            x_node,
            start_elem: start * d,
            x_len: input.len(),
        }));
        Ok(Tensor::with_node(out_shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(out_shape, Arc::new(out), None, false))
    }
}

pub(crate) fn slice_rows_backward(rec: &SliceRowsRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    let mut dx = vec![0.0f32; rec.x_len];
    dx[rec.start_elem..rec.start_elem + go.len()].copy_from_slice(go);
    sink.add(rec.x_node, dx);
}
