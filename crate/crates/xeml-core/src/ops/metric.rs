//! Ops behind the metric head: per-class means, squared distances,
//! log-softmax, and cross-entropy.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tape::{GradSink, Record, Tape};
use crate::tensor::Tensor;

pub(crate) struct ClassMeanRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub labels: Vec<u32>,
    pub k: usize,
    pub dim: usize,
}

/// Mean of the rows sharing each label: [N*K, d] -> [N, d]. Every label in
/// [0, n_way) must appear exactly K times.
pub fn class_mean(tape: &mut Tape, input: &Tensor, labels: &[usize], n_way: usize) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() != 2 {
        return Err(CoreError::dim(
            "class_mean",
            format!("input must be [N*K,d], got {shape:?}"),
        ));
    }
    let (rows, d) = (shape[0], shape[1]);
    if labels.len() != rows {
        return Err(CoreError::dim(
            "class_mean",
            format!("{} labels for {rows} rows", labels.len()),
        ));
    }
    if n_way == 0 || rows % n_way != 0 {
        return Err(CoreError::EpisodeShape(format!(
            "{rows} support rows cannot split into {n_way} equal classes"
        )));
    }
    let k = rows / n_way;
    let mut counts = vec![0usize; n_way];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_way {
            return Err(CoreError::Label {
                index: i,
                label: l,
                n_way,
            });
        }
        counts[l] += 1;
    }
    if let Some(bad) = counts.iter().position(|&c| c != k) {
        return Err(CoreError::EpisodeShape(format!(
            "class {bad} has {} support examples, expected {k}",
            counts[bad]
        )));
    }

    let x = input.data();
    let mut out = vec![0.0f32; n_way * d];
    for (row, &l) in labels.iter().enumerate() {
        let dst = &mut out[l * d..(l + 1) * d];
        for (o, v) in dst.iter_mut().zip(&x[row * d..(row + 1) * d]) {
            *o += v;
        }
    }
    let inv_k = 1.0 / k as f32;
    for o in &mut out {
        *o *= inv_k;
    }

    let out_shape = vec![n_way, d];
    if tape.wants_grad(&[input])? {
        let x_node = tape.node_index(input)?;
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::ClassMean(ClassMeanRecord {
            out: out_idx,
            x_node,
            labels: labels.iter().map(|&l| l as u32).collect(),
            k,
            dim: d,
        }));
        Ok(Tensor::with_node(out_shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(out_shape, Arc::new(out), None, false))
    }
}

pub(crate) fn class_mean_backward(rec: &ClassMeanRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    let d = rec.dim;
    let inv_k = 1.0 / rec.k as f32;
    let mut dx = vec![0.0f32; rec.labels.len() * d];
    for (row, &l) in rec.labels.iter().enumerate() {
        let src = &go[l as usize * d..(l as usize + 1) * d];
        for (o, g) in dx[row * d..(row + 1) * d].iter_mut().zip(src) {
            *o = g * inv_k;
        }
    }
    sink.add(rec.x_node, dx);
}

pub(crate) struct PairwiseRecord {
    pub out: u32,
    pub q_node: Option<u32>,
    pub p_node: Option<u32>,
    pub q: Arc<Vec<f32>>,
    pub p: Arc<Vec<f32>>,
    pub n_q: usize,
    pub n_p: usize,
    pub dim: usize,
}

/// out[q,n] = sum_k (queries[q,k] - prototypes[n,k])^2.
pub fn pairwise_sq_dist(tape: &mut Tape, queries: &Tensor, prototypes: &Tensor) -> Result<Tensor> {
    let (qs, ps) = (queries.shape(), prototypes.shape());
    if qs.len() != 2 || ps.len() != 2 || qs[1] != ps[1] {
        return Err(CoreError::dim(
            "pairwise_sq_dist",
            format!("expected [Q,d] and [N,d] with matching d, got {qs:?} and {ps:?}"),
        ));
    }
    let (n_q, n_p, d) = (qs[0], ps[0], qs[1]);
    let q = queries.data();
    let p = prototypes.data();

    let mut out = vec![0.0f32; n_q * n_p];
    for qi in 0..n_q {
        let qrow = &q[qi * d..(qi + 1) * d];
        for pi in 0..n_p {
            let prow = &p[pi * d..(pi + 1) * d];
            let mut acc = 0.0f32;
            for (a, b) in qrow.iter().zip(prow) {
                let diff = a - b;
                acc += diff * diff;
            }
            out[qi * n_p + pi] = acc;
        }
    }

    let out_shape = vec![n_q, n_p];
    if tape.wants_grad(&[queries, prototypes])? {
        let q_node = tape.node_index(queries)?.filter(|_| queries.requires_grad());
        let p_node = tape.node_index(prototypes)?.filter(|_| prototypes.requires_grad());
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::Pairwise(PairwiseRecord {
            out: out_idx,
            q_node,
            p_node,
            q: queries.data_arc(),
            p: prototypes.data_arc(),
            n_q,
            n_p,
            dim: d,
        }));
        Ok(Tensor::with_node(out_shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(out_shape, Arc::new(out), None, false))
    }
}

pub(crate) fn pairwise_backward(rec: &PairwiseRecord, go: &[f32], sink: &mut GradSink<'_>) {
    let (n_q, n_p, d) = (rec.n_q, rec.n_p, rec.dim);
    if rec.q_node.is_some() {
        let mut dq = vec![0.0f32; n_q * d];
        for qi in 0..n_q {
            let qrow = &rec.q[qi * d..(qi + 1) * d];
            let drow = &mut dq[qi * d..(qi + 1) * d];
            for pi in 0..n_p {
                let g2 = 2.0 * go[qi * n_p + pi];
                let prow = &rec.p[pi * d..(pi + 1) * d];
                for ((o, a), b) in drow.iter_mut().zip(qrow).zip(prow) {
                    *o += g2 * (a - b);
                }
            }
        }
        sink.add(rec.q_node, dq);
    }
    if rec.p_node.is_some() {
        let mut dp = vec![0.0f32; n_p * d];
        for qi in 0..n_q {
            let qrow = &rec.q[qi * d..(qi + 1) * d];
            for pi in 0..n_p {
                let g2 = 2.0 * go[qi * n_p + pi];
                let prow = &rec.p[pi * d..(pi + 1) * d];
                for ((o, a), b) in dp[pi * d..(pi + 1) * d].iter_mut().zip(qrow).zip(prow) {
                    *o -= g2 * (a - b);
                }
            }
        }
        sink.add(rec.p_node, dp);
    }
}

pub(crate) struct LogSoftmaxRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub out_data: Arc<Vec<f32>>,
    pub rows: usize,
    pub cols: usize,
}

/// Row-wise log-softmax, stabilized by subtracting the row maximum.
pub fn log_softmax(tape: &mut Tape, logits: &Tensor) -> Result<Tensor> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] == 0 {
        return Err(CoreError::dim(
            "log_softmax",
            format!("input must be [Q,N] with N >= 1, got {shape:?}"),
        ));
    }
    let (rows, cols) = (shape[0], shape[1]);
    let x = logits.data();
    let mut out = vec![0.0f32; x.len()];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| if v > m { v } else { m });
        let mut denom = 0.0f64;
        for &v in row {
            denom += libm::exp((v - max) as f64);
        }
        let log_denom = libm::log(denom) as f32;
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = v - max - log_denom;
        }
    }

    let out_shape = shape.to_vec();
    if tape.wants_grad(&[logits])? {
        let x_node = tape.node_index(logits)?;
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::LogSoftmax(LogSoftmaxRecord {
            out: out_idx,
            x_node,
            out_data: Arc::clone(&data),
            rows,
            cols,
        }));
        Ok(Tensor::with_node(out_shape, data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(out_shape, Arc::new(out), None, false))
    }
}

pub(crate) fn log_softmax_backward(rec: &LogSoftmaxRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    let (rows, cols) = (rec.rows, rec.cols);
    let mut dx = vec![0.0f32; go.len()];
    for r in 0..rows {
        let g_row = &go[r * cols..(r + 1) * cols];
        let o_row = &rec.out_data[r * cols..(r + 1) * cols];
        let g_sum: f64 = g_row.iter().map(|&g| g as f64).sum();
        for ((d, &g), &o) in dx[r * cols..(r + 1) * cols].iter_mut().zip(g_row).zip(o_row) {
            *d = (g as f64 - libm::exp(o as f64) * g_sum) as f32;
        }
    }
    sink.add(rec.x_node, dx);
}

pub(crate) struct CrossEntropyRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub labels: Vec<u32>,
    pub cols: usize,
}

/// -mean over rows of log_probs[q, labels[q]], as a scalar tensor.
pub fn cross_entropy(tape: &mut Tape, log_probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let shape = log_probs.shape();
    if shape.len() != 2 {
        return Err(CoreError::dim(
            "cross_entropy",
            format!("log_probs must be [Q,N], got {shape:?}"),
        ));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if labels.len() != rows {
        return Err(CoreError::dim(
            "cross_entropy",
            format!("{} labels for {rows} rows", labels.len()),
        ));
    }
    let lp = log_probs.data();
    let mut total = 0.0f64;
    for (i, &l) in labels.iter().enumerate() {
        if l >= cols {
            return Err(CoreError::Label {
                index: i,
                label: l,
                n_way: cols,
            });
        }
        total += lp[i * cols + l] as f64;
    }
    let loss = vec![(-total / rows as f64) as f32];

    if tape.wants_grad(&[log_probs])? {
        let x_node = tape.node_index(log_probs)?;
        let out_idx = tape.push_node(1, true);
        let data = Arc::new(loss);
        tape.push_record(Record::CrossEntropy(CrossEntropyRecord {
            out: out_idx,
            x_node,
            labels: labels.iter().map(|&l| l as u32).collect(),
            cols,
        }));
        Ok(Tensor::with_node(Vec::new(), data, Some(tape.node_id(out_idx)), true))
    } else {
        Ok(Tensor::with_node(Vec::new(), Arc::new(loss), None, false))
    }
}

pub(crate) fn cross_entropy_backward(rec: &CrossEntropyRecord, go: &[f32], sink: &mut GradSink<'_>) {
    if rec.x_node.is_none() {
        return;
    }
    let rows = rec.labels.len();
    let scale = -go[0] / rows as f32;
    let mut dx = vec![0.0f32; rows * rec.cols];
    for (i, &l) in rec.labels.iter().enumerate() {
        dx[i * rec.cols + l as usize] = scale;
    }
    sink.add(rec.x_node, dx);
}
