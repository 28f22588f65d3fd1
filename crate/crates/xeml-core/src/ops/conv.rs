//! 3x3 convolution, stride 1, zero padding 1.
//!
//! Forward and both gradient passes are expressed as per-image GEMMs over an
//! im2col layout. Images are processed in parallel; the weight gradient is
//! reduced over per-image partials in index order, so results do not depend
//! on thread scheduling.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::gemm::{sgemm, sgemm_strided};
use crate::parallel::{for_each_chunk_mut, map_indexed};
use crate::tape::{GradSink, Record, Tape};
use crate::tensor::Tensor;

const K: usize = 3;
const TAPS: usize = K * K;

#[derive(Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
}

pub(crate) struct ConvRecord {
    pub out: u32,
    pub x_node: Option<u32>,
    pub w_node: Option<u32>,
    pub b_node: Option<u32>,
    pub x: Arc<Vec<f32>>,
    pub weight: Arc<Vec<f32>>,
    pub dims: ConvDims,
}

/// out[b,co,y,x] = bias[co] + sum over (ci,ky,kx) of
/// weight[co,ci,ky,kx] * input[b,ci,y+ky-1,x+kx-1], zero outside the image.
pub fn conv2d(tape: &mut Tape, input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let dims = check_shapes(input, weight, bias)?;
    let ConvDims {
        batch,
        cin,
        h,
        w,
        cout,
    } = dims;
    let plane = h * w;
    let x = input.data();
    let wt = weight.data();
    let b = bias.data();

    let mut out = vec![0.0f32; batch * cout * plane];
    for_each_chunk_mut(&mut out, cout * plane, |img, out_img| {
        let cols = im2col(&x[img * cin * plane..][..cin * plane], cin, h, w);
        sgemm(cout, cin * TAPS, plane, 1.0, wt, &cols, 0.0, out_img);
        for (co, bias_v) in b.iter().enumerate() {
            for v in &mut out_img[co * plane..(co + 1) * plane] {
                *v += bias_v;
            }
        }
    });

    let shape = vec![batch, cout, h, w];
    if tape.wants_grad(&[input, weight, bias])? {
        let x_node = tape.node_index(input)?.filter(|_| input.requires_grad());
        let w_node = tape.node_index(weight)?.filter(|_| weight.requires_grad());
        let b_node = tape.node_index(bias)?.filter(|_| bias.requires_grad());
        let out_idx = tape.push_node(out.len(), true);
        let data = Arc::new(out);
        tape.push_record(Record::Conv(ConvRecord {
            out: out_idx,
            x_node,
            w_node,
            b_node,
            x: input.data_arc(),
            weight: weight.data_arc(),
            dims,
        }));
        Ok(Tensor::with_node(
            shape,
            data,
            Some(tape.node_id(out_idx)),
            true,
        ))
    } else {
        Ok(Tensor::with_node(shape, Arc::new(out), None, false))
    }
}

fn check_shapes(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<ConvDims> {
    let (is, ws, bs) = (input.shape(), weight.shape(), bias.shape());
    if is.len() != 4 {
        return Err(CoreError::dim("conv2d", format!("input must be [B,Cin,H,W], got {is:?}")));
    }
    if ws.len() != 4 || ws[2] != K || ws[3] != K {
        return Err(CoreError::dim(
            "conv2d",
            format!("weight must be [Cout,Cin,3,3], got {ws:?}"),
        ));
    }
    if bs.len() != 1 || bs[0] != ws[0] {
        return Err(CoreError::dim(
            "conv2d",
            format!("bias must be [Cout={}], got {bs:?}", ws[0]),
        ));
    }
    if is[1] != ws[1] {
        return Err(CoreError::dim(
            "conv2d",
            format!("input channels disagree: input {is:?} vs weight {ws:?}"),
        ));
    }
    if is[2] == 0 || is[3] == 0 {
        return Err(CoreError::dim("conv2d", format!("empty spatial dims in {is:?}")));
    }
    Ok(ConvDims {
        batch: is[0],
        cin: is[1],
        h: is[2],
        w: is[3],
        cout: ws[0],
    })
}

/// Unrolls one [Cin,H,W] image into a [Cin*9, H*W] matrix whose row
/// (ci,ky,kx) holds input[ci, y+ky-1, x+kx-1] per output position (y,x).
fn im2col(x: &[f32], cin: usize, h: usize, w: usize) -> Vec<f32> {
    let plane = h * w;
    let mut cols = vec![0.0f32; cin * TAPS * plane];
    for ci in 0..cin {
        let src_plane = &x[ci * plane..][..plane];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cols[(ci * TAPS + ky * K + kx) * plane..][..plane];
                for y in 0..h {
                    let dst = &mut row[y * w..][..w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue; // already zero
                    }
                    let src = &src_plane[sy as usize * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    cols
}

/// Scatters a [Cin*9, H*W] column-gradient matrix back onto one image.
fn col2im_acc(dcols: &[f32], dx: &mut [f32], cin: usize, h: usize, w: usize) {
    let plane = h * w;
    for ci in 0..cin {
        let dst_plane = &mut dx[ci * plane..][..plane];
        for ky in 0..K {
            for kx in 0..K {
                let row = &dcols[(ci * TAPS + ky * K + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..][..w];
                    let dst = &mut dst_plane[sy as usize * w..][..w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] += src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] += src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] += src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn backward(rec: &ConvRecord, go: &[f32], sink: &mut GradSink<'_>) {
    let ConvDims {
        batch,
        cin,
        h,
        w,
        cout,
    } = rec.dims;
    let plane = h * w;
    let ktaps = cin * TAPS;

    if rec.b_node.is_some() {
        let mut db = vec![0.0f32; cout];
        for img in 0..batch {
            let go_img = &go[img * cout * plane..][..cout * plane];
            for (co, acc) in db.iter_mut().enumerate() {
                let mut s = 0.0f64;
                for v in &go_img[co * plane..(co + 1) * plane] {
                    s += *v as f64;
                }
                *acc += s as f32;
            }
        }
        sink.add(rec.b_node, db);
    }

    if rec.w_node.is_some() {
        // Per-image partials, then an index-ordered reduction.
        let partials = map_indexed(batch, |img| {
            let cols = im2col(&rec.x[img * cin * plane..][..cin * plane], cin, h, w);
            let go_img = &go[img * cout * plane..][..cout * plane];
            let mut dw = vec![0.0f32; cout * ktaps];
            // dW = dY [cout, plane] x colsᵀ [plane, ktaps]
            sgemm_strided(
                cout, plane, ktaps, 1.0, go_img, plane as isize, 1, &cols, 1, plane as isize,
                0.0, &mut dw,
            );
            dw
        });
        let mut dw = vec![0.0f32; cout * ktaps];
        for partial in &partials {
            for (a, p) in dw.iter_mut().zip(partial.iter()) {
                *a += p;
            }
        }
        sink.add(rec.w_node, dw);
    }

    if rec.x_node.is_some() {
        let mut dx = vec![0.0f32; batch * cin * plane];
        let weight = &rec.weight;
        for_each_chunk_mut(&mut dx, cin * plane, |img, dx_img| {
            let go_img = &go[img * cout * plane..][..cout * plane];
            let mut dcols = vec![0.0f32; ktaps * plane];
            // dcols = Wᵀ [ktaps, cout] x dY [cout, plane]
            sgemm_strided(
                ktaps, cout, plane, 1.0, weight, 1, ktaps as isize, go_img, plane as isize, 1,
                0.0, &mut dcols,
            );
            col2im_acc(&dcols, dx_img, cin, h, w);
        });
        sink.add(rec.x_node, dx);
    }
}
