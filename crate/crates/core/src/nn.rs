//! CNN building blocks.
//!
//! Every kernel here is rank-polymorphic and shape-total: its output shape
//! follows from the input shapes alone (see the `*_shape` functions), and is
//! checked before any data is touched. Summations run in row-major order over
//! the kernel index so each output element has one fixed evaluation order.

use crate::tensor::{step_index, Result, Shape, Tensor, TensorError};

/// Inline scratch size for per-element index arithmetic.
const INLINE_RANK: usize = 8;

fn mismatch(op: &'static str, left: &Shape, right: &Shape) -> TensorError {
    TensorError::Mismatch {
        op,
        left: left.clone(),
        right: right.clone(),
    }
}

/// `shape(input) - shape(kernel) + 1`.
pub fn conv_shape(input: &Shape, kernel: &Shape) -> Result<Shape> {
    if input.rank() != kernel.rank()
        || input
            .extents()
            .iter()
            .zip(kernel.extents())
            .any(|(&i, &k)| k > i)
    {
        return Err(mismatch("conv", input, kernel));
    }
    Ok(Shape::new(
        input
            .extents()
            .iter()
            .zip(kernel.extents())
            .map(|(&i, &k)| i - k + 1)
            .collect::<Vec<_>>(),
    ))
}

/// Flat input offsets visited by the kernel window anchored at index 0,
/// in row-major kernel order.
fn window_offsets(input: &Shape, kernel: &Shape) -> Vec<usize> {
    let strides = input.strides();
    let mut offsets = Vec::with_capacity(kernel.numel());
    if kernel.numel() == 0 {
        return offsets;
    }
    let mut ov = vec![0; kernel.rank()];
    loop {
        offsets.push(ov.iter().zip(&strides).map(|(&o, &s)| o * s).sum());
        if !step_index(&mut ov, kernel.extents()) {
            break;
        }
    }
    offsets
}

#[inline]
fn dot_window(input: &[f32], base: usize, offsets: &[usize], kernel: &[f32]) -> f32 {
    offsets
        .iter()
        .zip(kernel)
        .fold(0.0f32, |acc, (&o, &w)| acc + input[base + o] * w)
}

/// Valid convolution: `{ iv -> sum({ ov -> I[iv+ov] * k[ov] | ov < shape(k) })
/// | iv < shape(I) - shape(k) + 1 }`.
pub fn conv(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let out = conv_shape(input.shape(), kernel.shape())?;
    let offsets = window_offsets(input.shape(), kernel.shape());
    let strides = input.shape().strides();
    let (data, k) = (input.data(), kernel.data());
    Ok(Tensor::comprehend_cells(
        out,
        Shape::scalar(),
        |iv, cell| {
            let base: usize = iv.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
            cell[0] = dot_window(data, base, &offsets, k);
        },
    ))
}

/// `shape(b) ++ (shape(I) - shape(k[i]) + 1)`.
pub fn mconv_shape(input: &Shape, kernels: &Shape, bias: &Shape) -> Result<Shape> {
    if bias.rank() != 1 || kernels.rank() == 0 || kernels.extents()[0] != bias.extents()[0] {
        return Err(mismatch("mconv", kernels, bias));
    }
    Ok(bias.concat(&conv_shape(input, &kernels.drop_front(1))?))
}

/// Multi-kernel convolution with bias: `{ i -> conv(I, k[i]) + b[i] | i < shape(b) }`.
pub fn mconv(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let out = mconv_shape(input.shape(), kernels.shape(), bias.shape())?;
    let kshape = kernels.shape().drop_front(1);
    let cell = out.drop_front(1);
    let offsets = window_offsets(input.shape(), &kshape);
    let strides = input.shape().strides();
    let klen = kshape.numel();
    let (data, k, b) = (input.data(), kernels.data(), bias.data());
    let cell_extents = cell.extents().to_vec();
    Ok(Tensor::comprehend_cells(
        bias.shape().clone(),
        cell,
        |i, out| {
            let ki = &k[i[0] * klen..(i[0] + 1) * klen];
            let bi = b[i[0]];
            let mut iv = vec![0; cell_extents.len()];
            for o in out.iter_mut() {
                let base: usize = iv.iter().zip(&strides).map(|(&x, &s)| x * s).sum();
                *o = dot_window(data, base, &offsets, ki) + bi;
                step_index(&mut iv, &cell_extents);
            }
        },
    ))
}

#[inline]
pub fn sigmoid_scalar(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic function.
pub fn sigmoid(t: &Tensor) -> Tensor {
    t.map(sigmoid_scalar)
}

/// `d_out * out * (1 - out)`, where `out` is the stored sigmoid output.
pub fn backsigmoid(d_out: &Tensor, out: &Tensor) -> Result<Tensor> {
    d_out.zip_with(out, "backsigmoid", |d, y| d * y * (1.0 - y))
}

/// Trailing two extents halved.
pub fn avgpool_shape(input: &Shape) -> Result<Shape> {
    let r = input.rank();
    if r < 2 {
        return Err(TensorError::Unsupported {
            op: "avgpool",
            shape: input.clone(),
            reason: "rank must be at least 2",
        });
    }
    let (h, w) = (input.extents()[r - 2], input.extents()[r - 1]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::Unsupported {
            op: "avgpool",
            shape: input.clone(),
            reason: "trailing extents must be even",
        });
    }
    Ok(input.drop_back(2).concat(&Shape::from([h / 2, w / 2])))
}

/// 2x2 average pooling over the two innermost axes; leading axes form the frame.
pub fn avgpool(input: &Tensor) -> Result<Tensor> {
    let out = avgpool_shape(input.shape())?;
    let r = out.rank();
    let (oh, ow) = (out.extents()[r - 2], out.extents()[r - 1]);
    let iw = ow * 2;
    let plane = 4 * oh * ow;
    let data = input.data();
    let frame = out.drop_back(2);
    let lead = frame.clone();
    Ok(Tensor::comprehend_cells(
        frame,
        Shape::from([oh, ow]),
        |iv, cell| {
            let src = &data[lead.offset(iv) * plane..][..plane];
            for y in 0..oh {
                for x in 0..ow {
                    let top = 2 * y * iw + 2 * x;
                    let bot = top + iw;
                    let s = src[top] + src[top + 1] + src[bot] + src[bot + 1];
                    cell[y * ow + x] = s / 4.0;
                }
            }
        },
    ))
}

/// Trailing two extents doubled.
pub fn backavgpool_shape(d_out: &Shape) -> Result<Shape> {
    let r = d_out.rank();
    if r < 2 {
        return Err(TensorError::Unsupported {
            op: "backavgpool",
            shape: d_out.clone(),
            reason: "rank must be at least 2",
        });
    }
    let (h, w) = (d_out.extents()[r - 2], d_out.extents()[r - 1]);
    Ok(d_out.drop_back(2).concat(&Shape::from([2 * h, 2 * w])))
}

/// Spreads each error value evenly over its 2x2 block: `d_out[iv/2] / 4`.
pub fn backavgpool(d_out: &Tensor) -> Result<Tensor> {
    let out = backavgpool_shape(d_out.shape())?;
    let r = out.rank();
    let (h, w) = (out.extents()[r - 2], out.extents()[r - 1]);
    let (dh, dw) = (h / 2, w / 2);
    let data = d_out.data();
    let frame = out.drop_back(2);
    let lead = frame.clone();
    Ok(Tensor::comprehend_cells(
        frame,
        Shape::from([h, w]),
        |iv, cell| {
            let src = &data[lead.offset(iv) * dh * dw..][..dh * dw];
            for y in 0..h {
                for x in 0..w {
                    cell[y * w + x] = src[(y / 2) * dw + x / 2] / 4.0;
                }
            }
        },
    ))
}

/// Weight gradient of a convolution: `conv(in, d_out)`.
pub fn backweights(d_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    conv(input, d_out)
}

/// Bias gradient: the sum of the error.
pub fn backbias(d_out: &Tensor) -> f32 {
    d_out.sum_all()
}

/// Checks `shape(d_out) == shape(in) - shape(k) + 1` and returns `shape(in)`.
pub fn backin_shape(d_out: &Shape, kernel: &Shape, input: &Shape) -> Result<Shape> {
    let expected = conv_shape(input, kernel)?;
    if &expected != d_out {
        return Err(mismatch("backin", d_out, &expected));
    }
    Ok(input.clone())
}

/// Error propagated to the input of a convolution.
///
/// `out[iv] = sum k[u] * d_out[iv - u]` over kernel positions `u` with
/// `0 <= iv - u < shape(d_out)`. Per axis, `off = iv < d ? 0 : iv - d + 1`
/// is the first contributing kernel position and `min(k, iv + 1) - off` the
/// number of positions, so only in-range products are formed.
pub fn backin(d_out: &Tensor, kernel: &Tensor, input: &Tensor) -> Result<Tensor> {
    let out = backin_shape(d_out.shape(), kernel.shape(), input.shape())?;
    let r = out.rank();
    let (d, k) = (d_out.data(), kernel.data());
    if r == 0 {
        return Ok(Tensor::scalar(k[0] * d[0]));
    }
    let dext = d_out.shape().extents().to_vec();
    let kext = kernel.shape().extents().to_vec();
    let dstr = d_out.shape().strides();
    let kstr = kernel.shape().strides();
    Ok(Tensor::comprehend_cells(
        out,
        Shape::scalar(),
        |iv, cell| {
            let mut inline = [0usize; 3 * INLINE_RANK];
            let mut heap;
            let scratch: &mut [usize] = if r <= INLINE_RANK {
                &mut inline[..3 * r]
            } else {
                heap = vec![0usize; 3 * r];
                &mut heap
            };
            let (off, rest) = scratch.split_at_mut(r);
            let (cnt, ov) = rest.split_at_mut(r);
            for a in 0..r {
                off[a] = if iv[a] < dext[a] {
                    0
                } else {
                    iv[a] - dext[a] + 1
                };
                cnt[a] = kext[a].min(iv[a] + 1) - off[a];
            }
            if cnt.contains(&0) {
                cell[0] = 0.0;
                return;
            }
            let last = r - 1;
            let mut acc = 0.0f32;
            loop {
                let mut kbase = 0;
                let mut dbase = 0;
                for a in 0..last {
                    let u = ov[a] + off[a];
                    kbase += u * kstr[a];
                    dbase += (iv[a] - u) * dstr[a];
                }
                for j in 0..cnt[last] {
                    let u = j + off[last];
                    acc += k[kbase + u] * d[dbase + iv[last] - u];
                }
                if !step_index(&mut ov[..last], &cnt[..last]) {
                    break;
                }
            }
            cell[0] = acc;
        },
    ))
}

/// Per-kernel weight gradients: `{ i -> backweights(d_out[i], in) }`.
pub fn mbackweights(d_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    if d_out.rank() == 0 {
        return Err(mismatch("mbackweights", d_out.shape(), input.shape()));
    }
    let n = d_out.shape().extents()[0];
    let cell = conv_shape(input.shape(), &d_out.shape().drop_front(1))?;
    let slice_len = d_out.shape().drop_front(1).numel();
    let offsets = window_offsets(input.shape(), &d_out.shape().drop_front(1));
    let strides = input.shape().strides();
    let cell_extents = cell.extents().to_vec();
    let (data, d) = (input.data(), d_out.data());
    Ok(Tensor::comprehend_cells([n], cell, |i, out| {
        let di = &d[i[0] * slice_len..(i[0] + 1) * slice_len];
        let mut iv = vec![0; cell_extents.len()];
        for o in out.iter_mut() {
            let base: usize = iv.iter().zip(&strides).map(|(&x, &s)| x * s).sum();
            *o = dot_window(data, base, &offsets, di);
            step_index(&mut iv, &cell_extents);
        }
    }))
}

/// Per-kernel bias gradients: `{ i -> backbias(d_out[i]) }`.
pub fn mbackbias(d_out: &Tensor) -> Result<Tensor> {
    if d_out.rank() == 0 {
        return Err(TensorError::Unsupported {
            op: "mbackbias",
            shape: d_out.shape().clone(),
            reason: "needs a leading kernel axis",
        });
    }
    let n = d_out.shape().extents()[0];
    Tensor::try_comprehend([n], |i| Ok(Tensor::scalar(backbias(&d_out.select(i)?))))
}

/// Input error of a multi-kernel convolution: `sum_i backin(d_out[i], k[i], in)`,
/// accumulated in increasing `i`.
pub fn mbackin(d_out: &Tensor, kernels: &Tensor, input: &Tensor) -> Result<Tensor> {
    if d_out.rank() == 0 || kernels.rank() == 0 {
        return Err(mismatch("mbackin", d_out.shape(), kernels.shape()));
    }
    let n = d_out.shape().extents()[0];
    if kernels.shape().extents()[0] != n {
        return Err(mismatch("mbackin", d_out.shape(), kernels.shape()));
    }
    let mut acc = Tensor::zeros(input.shape().clone());
    for i in 0..n {
        let part = backin(&d_out.select(&[i])?, &kernels.select(&[i])?, input)?;
        acc = acc.add(&part)?;
    }
    Ok(acc)
}
