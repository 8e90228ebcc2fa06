use super::Tensor;
use crate::error::{ensure, Result};

/// Floor added inside the logarithm of the cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Gradients produced by a layer's backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub d_input: Tensor,
    /// `(parameter role, gradient)`, e.g. `("weight", ..)`, `("bias", ..)`.
    pub d_params: Vec<(String, Tensor)>,
}

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kernel_h: usize,
    kernel_w: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn check(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        ensure!(
            input.rank() == 3,
            "conv2d input must be CxHxW, got {:?}",
            input.shape()
        );
        ensure!(
            kernels.rank() == 4,
            "conv2d kernels must be KxCxkHxkW, got {:?}",
            kernels.shape()
        );
        ensure!(stride >= 1, "conv2d stride must be >= 1");
        let (channels, height, width) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (filters, kc, kernel_h, kernel_w) = (
            kernels.shape()[0],
            kernels.shape()[1],
            kernels.shape()[2],
            kernels.shape()[3],
        );
        ensure!(
            kc == channels,
            "conv2d channel mismatch: input has {channels}, kernels expect {kc}"
        );
        ensure!(
            kernel_h <= height + 2 * padding && kernel_w <= width + 2 * padding,
            "conv2d kernel {kernel_h}x{kernel_w} larger than padded input {}x{}",
            height + 2 * padding,
            width + 2 * padding
        );
        Ok(ConvGeometry {
            channels,
            height,
            width,
            filters,
            kernel_h,
            kernel_w,
            out_h: (height + 2 * padding - kernel_h) / stride + 1,
            out_w: (width + 2 * padding - kernel_w) / stride + 1,
            stride,
            padding,
        })
    }

    /// Output positions `o` along one axis with `o*stride + k - padding` inside `[0, len)`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let k = k as isize;
        let lo = (p - k).max(0);
        let lo = (lo + s - 1) / s;
        let hi = (len as isize - 1 + p - k).div_euclid(s);
        let hi = hi.min(out_len as isize - 1);
        if hi < lo {
            0..0
        } else {
            lo as usize..hi as usize + 1
        }
    }
}

/// Cross-correlation of a CxHxW input with K kernels of shape CxkHxkW.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = ConvGeometry::check(input, kernels, stride, padding)?;
    ensure!(
        bias.len() == g.filters,
        "conv2d bias has {} entries, expected {}",
        bias.len(),
        g.filters
    );
    let x = input.data();
    let w = kernels.data();
    let plane = g.out_h * g.out_w;
    let mut out = vec![0.0; g.filters * plane];
    for k in 0..g.filters {
        let out_k = &mut out[k * plane..(k + 1) * plane];
        out_k.fill(bias.data()[k]);
        for c in 0..g.channels {
            let x_c = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
            for ky in 0..g.kernel_h {
                let rows = g.valid_range(ky, g.height, g.out_h);
                for kx in 0..g.kernel_w {
                    let cols = g.valid_range(kx, g.width, g.out_w);
                    let wv = w[((k * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
                    for oy in rows.clone() {
                        let iy = oy * g.stride + ky - g.padding;
                        let row_in = &x_c[iy * g.width..(iy + 1) * g.width];
                        let row_out = &mut out_k[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let base = kx as isize - g.padding as isize;
                            for ox in cols.clone() {
                                row_out[ox] += wv * row_in[(ox as isize + base) as usize];
                            }
                        } else {
                            for ox in cols.clone() {
                                row_out[ox] += wv * row_in[ox * g.stride + kx - g.padding];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.filters, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d_forward`] for input, kernels (`"weight"`) and bias (`"bias"`).
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    upstream: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<LayerGrad> {
    let g = ConvGeometry::check(input, kernels, stride, padding)?;
    ensure!(
        upstream.shape() == [g.filters, g.out_h, g.out_w],
        "conv2d upstream shape {:?} does not match output {:?}",
        upstream.shape(),
        [g.filters, g.out_h, g.out_w]
    );
    let x = input.data();
    let w = kernels.data();
    let up = upstream.data();
    let plane = g.out_h * g.out_w;
    let mut d_x = vec![0.0; x.len()];
    let mut d_w = vec![0.0; w.len()];
    let mut d_b = vec![0.0; g.filters];
    for k in 0..g.filters {
        let up_k = &up[k * plane..(k + 1) * plane];
        d_b[k] = up_k.iter().sum();
        for c in 0..g.channels {
            let off = c * g.height * g.width;
            for ky in 0..g.kernel_h {
                let rows = g.valid_range(ky, g.height, g.out_h);
                for kx in 0..g.kernel_w {
                    let cols = g.valid_range(kx, g.width, g.out_w);
                    let wi = ((k * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
                    let wv = w[wi];
                    let mut acc = 0.0;
                    for oy in rows.clone() {
                        let iy = oy * g.stride + ky - g.padding;
                        let row = off + iy * g.width;
                        let up_row = &up_k[oy * g.out_w..(oy + 1) * g.out_w];
                        for ox in cols.clone() {
                            let ix = row + ox * g.stride + kx - g.padding;
                            let u = up_row[ox];
                            acc += u * x[ix];
                            d_x[ix] += u * wv;
                        }
                    }
                    d_w[wi] += acc;
                }
            }
        }
    }
    Ok(LayerGrad {
        d_input: Tensor::new(input.shape().to_vec(), d_x)?,
        d_params: vec![
            ("weight".into(), Tensor::new(kernels.shape().to_vec(), d_w)?),
            ("bias".into(), Tensor::from_vec(d_b)),
        ],
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes the upstream value where the input was strictly positive.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    ensure!(
        input.shape() == upstream.shape(),
        "relu upstream shape {:?} does not match input {:?}",
        upstream.shape(),
        input.shape()
    );
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| if x > 0.0 { u } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

fn pool_geometry(input: &Tensor) -> Result<(usize, usize, usize)> {
    ensure!(
        input.rank() == 3,
        "maxpool input must be CxHxW, got {:?}",
        input.shape()
    );
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    ensure!(
        h % 2 == 0 && w % 2 == 0,
        "maxpool2x2 needs even height and width, got {h}x{w}"
    );
    Ok((c, h, w))
}

/// Row-major index of the window maximum; the first maximum wins ties.
fn window_argmax(x: &[f64], base: usize, width: usize) -> usize {
    let candidates = [base, base + 1, base + width, base + width + 1];
    let mut best = candidates[0];
    for &i in &candidates[1..] {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

pub fn maxpool2x2(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = pool_geometry(input)?;
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                out.push(x[window_argmax(x, base, w)]);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Routes each upstream value to its window's argmax.
pub fn maxpool2x2_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (c, h, w) = pool_geometry(input)?;
    let (oh, ow) = (h / 2, w / 2);
    ensure!(
        upstream.shape() == [c, oh, ow],
        "maxpool upstream shape {:?} does not match output {:?}",
        upstream.shape(),
        [c, oh, ow]
    );
    let x = input.data();
    let up = upstream.data();
    let mut d_x = vec![0.0; x.len()];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                d_x[window_argmax(x, base, w)] += up[(ch * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), d_x)
}

fn dense_check(input: &Tensor, weights: &Tensor) -> Result<(usize, usize)> {
    ensure!(
        weights.rank() == 2,
        "dense weights must be MxN, got {:?}",
        weights.shape()
    );
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    ensure!(
        input.rank() == 1 && input.len() == n,
        "dense input {:?} does not match weights {:?}",
        input.shape(),
        weights.shape()
    );
    Ok((m, n))
}

/// `weights · input + bias`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_check(input, weights)?;
    ensure!(
        bias.len() == m,
        "dense bias has {} entries, expected {m}",
        bias.len()
    );
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    Ok(Tensor::from_vec(out))
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<LayerGrad> {
    let (m, n) = dense_check(input, weights)?;
    ensure!(
        upstream.rank() == 1 && upstream.len() == m,
        "dense upstream {:?} does not match output length {m}",
        upstream.shape()
    );
    let x = input.data();
    let up = upstream.data();
    let mut d_x = vec![0.0; n];
    let mut d_w = vec![0.0; m * n];
    for (i, (row, d_row)) in weights
        .data()
        .chunks_exact(n)
        .zip(d_w.chunks_exact_mut(n))
        .enumerate()
    {
        let u = up[i];
        if u == 0.0 {
            continue;
        }
        for j in 0..n {
            d_row[j] = u * x[j];
            d_x[j] += u * row[j];
        }
    }
    Ok(LayerGrad {
        d_input: Tensor::from_vec(d_x),
        d_params: vec![
            ("weight".into(), Tensor::new(vec![m, n], d_w)?),
            ("bias".into(), upstream.clone()),
        ],
    })
}

/// Numerically stable softmax (the maximum logit is subtracted first).
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut out = logits.clone();
    for (o, e) in out.data_mut().iter_mut().zip(exps) {
        *o = e / total;
    }
    out
}

/// `-ln(probs[target] + LOG_FLOOR)`.
pub fn cross_entropy(probs: &Tensor, target_class: usize) -> Result<f64> {
    ensure!(
        target_class < probs.len(),
        "target class {target_class} out of range for {} classes",
        probs.len()
    );
    Ok(-(probs.data()[target_class] + LOG_FLOOR).ln())
}

/// Gradient of softmax followed by cross-entropy, taken w.r.t. the logits.
pub fn cross_entropy_grad(probs: &Tensor, target_class: usize) -> Result<Tensor> {
    ensure!(
        target_class < probs.len(),
        "target class {target_class} out of range for {} classes",
        probs.len()
    );
    let mut grad = probs.clone();
    grad.data_mut()[target_class] -= 1.0;
    Ok(grad)
}
