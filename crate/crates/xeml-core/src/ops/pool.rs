//! 2x2 max pooling, stride 2, ceil-mode on odd extents.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tape::{GradSink, Record, Tape};
use crate::tensor::Tensor;

pub(crate) struct PoolRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    /// Flat input index of each window's maximum (first occurrence on ties).
    pub argmax: Vec<u32>,
    pub x_len: usize,
}

/// Window maximum over 2x2 blocks; odd trailing rows/columns form 1-wide
/// windows (equivalent to padding with negative infinity). The gradient
/// routes to the first maximal element in row-major window order.
pub fn maxpool2x2(tape: &mut Tape, input: &Tensor) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() != 4 {
        return Err(CoreError::dim(
            "maxpool2x2",
            format!("input must be [B,C,H,W], got {shape:?}"),
        ));
    }
    let (batch, channels, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if h == 0 || w == 0 {
        return Err(CoreError::dim("maxpool2x2", format!("empty spatial dims in {shape:?}")));
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let x = input.data();

    let mut out = vec![0.0f32; batch * channels * oh * ow];
    let mut argmax = vec![0u32; out.len()];
    let mut oi = 0usize;
    for img in 0..batch {
        for c in 0..channels {
            let base = (img * channels + c) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0u32;
                    for y in (oy * 2)..(oy * 2 + 2).min(h) {
                        for xx in (ox * 2)..(ox * 2 + 2).min(w) {
                            let idx = base + y * w + xx;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx as u32;
                            }
                        }
                    }
                    out[oi] = best;
                    argmax[oi] = best_idx;
                    oi += 1;
                }
            }
        }
    }

    let out_shape = vec![batch, channels, oh, ow];
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::MaxPool(PoolRecord {
            out: out_idx,
            x_node,
            argmax,
            x_len: x.len(),
        }));
        Ok(Tensor::with_node(out_shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(out_shape, Arc::new(out), None, false))
    }
}

pub(crate) fn backward(rec: &PoolRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    let mut dx = vec![0.0f32; rec.x_len];
    for (g, &idx) in go.iter().zip(rec.argmax.iter()) {
        dx[idx as usize] += g;
    }
    sink.add(rec.x_node, dx);
}
