//! 2-d convolution and its adjoint (transposed convolution).
//!
//! Tensors are `[channels, rows, cols]`. Kernels are stored as
//! `[out_channels, in_channels, rows, cols]` for convolution; a transposed
//! convolution reuses the same layout read as `[in_channels, out_channels, ..]`
//! so that, for a shared weight tensor, the transposed map is exactly the
//! adjoint of the forward map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::{NnError, Tensor};

/// Zero padding per border. Symmetric padding `P` is `Padding::uniform(P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// Stride-1 padding that keeps the spatial extent unchanged. Even kernels
    /// put the extra row/column at the bottom/right.
    pub fn same(kernel_rows: usize, kernel_cols: usize) -> Self {
        let top = (kernel_rows - 1) / 2;
        let left = (kernel_cols - 1) / 2;
        Self {
            top,
            bottom: kernel_rows - 1 - top,
            left,
            right: kernel_cols - 1 - left,
        }
    }
}

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    /// Output channels (`N_f`).
    pub filters: usize,
    pub stride_rows: usize,
    pub stride_cols: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn new(
        kernel_rows: usize,
        kernel_cols: usize,
        filters: usize,
        stride_rows: usize,
        stride_cols: usize,
        padding: usize,
    ) -> Result<Self, NnError> {
        let spec = Self {
            kernel_rows,
            kernel_cols,
            filters,
            stride_rows,
            stride_cols,
            padding: Padding::uniform(padding),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn same(kernel: usize, filters: usize) -> Result<Self, NnError> {
        let spec = Self {
            kernel_rows: kernel,
            kernel_cols: kernel,
            filters,
            stride_rows: 1,
            stride_cols: 1,
            padding: Padding::same(kernel, kernel),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.kernel_rows == 0
            || self.kernel_cols == 0
            || self.filters == 0
            || self.stride_rows == 0
            || self.stride_cols == 0
        {
            return Err(NnError::Config(format!(
                "kernel, filter count and strides must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Output extents of the forward convolution on an `rows x cols` input.
    pub fn output_extent(&self, rows: usize, cols: usize) -> Result<(usize, usize), NnError> {
        let r = conv_extent(
            rows,
            self.kernel_rows,
            self.padding.top + self.padding.bottom,
            self.stride_rows,
        )?;
        let c = conv_extent(
            cols,
            self.kernel_cols,
            self.padding.left + self.padding.right,
            self.stride_cols,
        )?;
        Ok((r, c))
    }

    /// Output extents of the transposed convolution on an `rows x cols` input.
    pub fn transposed_extent(&self, rows: usize, cols: usize) -> Result<(usize, usize), NnError> {
        let r = transposed_extent(
            rows,
            self.kernel_rows,
            self.padding.top + self.padding.bottom,
            self.stride_rows,
        )?;
        let c = transposed_extent(
            cols,
            self.kernel_cols,
            self.padding.left + self.padding.right,
            self.stride_cols,
        )?;
        Ok((r, c))
    }
}

/// `(n - k + pad_total) / stride + 1` with floor division.
pub fn conv_extent(n: usize, k: usize, pad_total: usize, stride: usize) -> Result<usize, NnError> {
    if n + pad_total < k {
        return Err(NnError::Shape(format!(
            "kernel {k} larger than padded input {}",
            n + pad_total
        )));
    }
    Ok((n + pad_total - k) / stride + 1)
}

/// `(n - 1) * stride + k - pad_total`.
pub fn transposed_extent(
    n: usize,
    k: usize,
    pad_total: usize,
    stride: usize,
) -> Result<usize, NnError> {
    let full = (n - 1) * stride + k;
    if n == 0 || full <= pad_total {
        return Err(NnError::Shape(format!(
            "transposed extent non-positive: ({n} - 1) * {stride} + {k} - {pad_total}"
        )));
    }
    Ok(full - pad_total)
}

/// Gradients of one convolution-like layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check_input(input: &Tensor, in_channels: usize, what: &str) -> Result<(), NnError> {
    if input.shape().len() != 3 || input.shape()[0] != in_channels {
        return Err(NnError::Shape(format!(
            "{what}: expected [{in_channels}, rows, cols], got {:?}",
            input.shape()
        )));
    }
    Ok(())
}

#[inline]
fn source_index(out: usize, stride: usize, k: usize, pad_before: usize, extent: usize) -> Option<usize> {
    let pos = out * stride + k;
    if pos < pad_before || pos - pad_before >= extent {
        None
    } else {
        Some(pos - pad_before)
    }
}

/// Forward convolution. `weights` is `[filters, in_channels, a, b]`.
pub fn conv2d_forward(
    input: &Tensor,
    spec: &ConvSpec,
    weights: &Tensor,
    bias: &Tensor,
) -> Result<Tensor, NnError> {
    spec.validate()?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != spec.filters || ws[2] != spec.kernel_rows || ws[3] != spec.kernel_cols {
        return Err(NnError::Shape(format!("conv weights {ws:?} do not match {spec:?}")));
    }
    let in_ch = ws[1];
    check_input(input, in_ch, "conv2d input")?;
    bias.expect_shape(&[spec.filters], "conv2d bias")?;
    let (rows, cols) = (input.shape()[1], input.shape()[2]);
    let (out_rows, out_cols) = spec.output_extent(rows, cols)?;

    let mut out = Tensor::zeros(&[spec.filters, out_rows, out_cols]);
    let x = input.data();
    let w = weights.data();
    let (a, b) = (spec.kernel_rows, spec.kernel_cols);
    let o = out.data_mut();
    for f in 0..spec.filters {
        let plane = &mut o[f * out_rows * out_cols..(f + 1) * out_rows * out_cols];
        plane.fill(bias.data()[f]);
        for c in 0..in_ch {
            let xin = &x[c * rows * cols..(c + 1) * rows * cols];
            for p in 0..a {
                for q in 0..b {
                    let wv = w[((f * in_ch + c) * a + p) * b + q];
                    for i in 0..out_rows {
                        let Some(r) = source_index(i, spec.stride_rows, p, spec.padding.top, rows) else {
                            continue;
                        };
                        for j in 0..out_cols {
                            if let Some(s) = source_index(j, spec.stride_cols, q, spec.padding.left, cols) {
                                plane[i * out_cols + j] += wv * xin[r * cols + s];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`conv2d_forward`] given the upstream gradient.
pub fn conv2d_backward(
    upstream: &Tensor,
    input: &Tensor,
    spec: &ConvSpec,
    weights: &Tensor,
) -> Result<ConvGrads, NnError> {
    let ws = weights.shape();
    let in_ch = ws[1];
    check_input(input, in_ch, "conv2d cached input")?;
    let (rows, cols) = (input.shape()[1], input.shape()[2]);
    let (out_rows, out_cols) = spec.output_extent(rows, cols)?;
    upstream.expect_shape(&[spec.filters, out_rows, out_cols], "conv2d upstream gradient")?;

    let mut gi = input.zeros_like();
    let mut gw = weights.zeros_like();
    let mut gb = Tensor::zeros(&[spec.filters]);
    let (a, b) = (spec.kernel_rows, spec.kernel_cols);
    let x = input.data();
    let w = weights.data();
    let g = upstream.data();
    for f in 0..spec.filters {
        let gplane = &g[f * out_rows * out_cols..(f + 1) * out_rows * out_cols];
        gb.data_mut()[f] = gplane.iter().sum();
        for c in 0..in_ch {
            let base = c * rows * cols;
            for p in 0..a {
                for q in 0..b {
                    let widx = ((f * in_ch + c) * a + p) * b + q;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    for i in 0..out_rows {
                        let Some(r) = source_index(i, spec.stride_rows, p, spec.padding.top, rows) else {
                            continue;
                        };
                        for j in 0..out_cols {
                            if let Some(s) = source_index(j, spec.stride_cols, q, spec.padding.left, cols) {
                                let gv = gplane[i * out_cols + j];
                                acc += gv * x[base + r * cols + s];
                                gi.data_mut()[base + r * cols + s] += wv * gv;
                            }
                        }
                    }
                    gw.data_mut()[widx] += acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}

/// Transposed convolution. `weights` is `[in_channels, spec.filters, a, b]`;
/// `bias` has one entry per output channel (`spec.filters`).
pub fn transposed_conv2d_forward(
    input: &Tensor,
    spec: &ConvSpec,
    weights: &Tensor,
    bias: &Tensor,
) -> Result<Tensor, NnError> {
    spec.validate()?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[1] != spec.filters || ws[2] != spec.kernel_rows || ws[3] != spec.kernel_cols {
        return Err(NnError::Shape(format!(
            "transposed conv weights {ws:?} do not match {spec:?}"
        )));
    }
    let in_ch = ws[0];
    check_input(input, in_ch, "transposed conv input")?;
    bias.expect_shape(&[spec.filters], "transposed conv bias")?;
    let (in_rows, in_cols) = (input.shape()[1], input.shape()[2]);
    let (rows, cols) = spec.transposed_extent(in_rows, in_cols)?;

    let out_ch = spec.filters;
    let mut out = Tensor::zeros(&[out_ch, rows, cols]);
    let (a, b) = (spec.kernel_rows, spec.kernel_cols);
    let y = input.data();
    let w = weights.data();
    {
        let o = out.data_mut();
        for c in 0..out_ch {
            o[c * rows * cols..(c + 1) * rows * cols].fill(bias.data()[c]);
        }
        for f in 0..in_ch {
            let yin = &y[f * in_rows * in_cols..(f + 1) * in_rows * in_cols];
            for c in 0..out_ch {
                let base = c * rows * cols;
                for p in 0..a {
                    for q in 0..b {
                        let wv = w[((f * out_ch + c) * a + p) * b + q];
                        for i in 0..in_rows {
                            let Some(r) = source_index(i, spec.stride_rows, p, spec.padding.top, rows) else {
                                continue;
                            };
                            for j in 0..in_cols {
                                if let Some(s) = source_index(j, spec.stride_cols, q, spec.padding.left, cols) {
                                    o[base + r * cols + s] += wv * yin[i * in_cols + j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`transposed_conv2d_forward`].
pub fn transposed_conv2d_backward(
    upstream: &Tensor,
    input: &Tensor,
    spec: &ConvSpec,
    weights: &Tensor,
) -> Result<ConvGrads, NnError> {
    let ws = weights.shape();
    let in_ch = ws[0];
    let out_ch = spec.filters;
    check_input(input, in_ch, "transposed conv cached input")?;
    let (in_rows, in_cols) = (input.shape()[1], input.shape()[2]);
    let (rows, cols) = spec.transposed_extent(in_rows, in_cols)?;
    upstream.expect_shape(&[out_ch, rows, cols], "transposed conv upstream gradient")?;

    let mut gi = input.zeros_like();
    let mut gw = weights.zeros_like();
    let mut gb = Tensor::zeros(&[out_ch]);
    let (a, b) = (spec.kernel_rows, spec.kernel_cols);
    let y = input.data();
    let w = weights.data();
    let g = upstream.data();
    for c in 0..out_ch {
        gb.data_mut()[c] = g[c * rows * cols..(c + 1) * rows * cols].iter().sum();
    }
    for f in 0..in_ch {
        let ybase = f * in_rows * in_cols;
        for c in 0..out_ch {
            let gbase = c * rows * cols;
            for p in 0..a {
                for q in 0..b {
                    let widx = ((f * out_ch + c) * a + p) * b + q;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    for i in 0..in_rows {
                        let Some(r) = source_index(i, spec.stride_rows, p, spec.padding.top, rows) else {
                            continue;
                        };
                        for j in 0..in_cols {
                            if let Some(s) = source_index(j, spec.stride_cols, q, spec.padding.left, cols) {
                                let gv = g[gbase + r * cols + s];
                                acc += gv * y[ybase + i * in_cols + j];
                                gi.data_mut()[ybase + i * in_cols + j] += wv * gv;
                            }
                        }
                    }
                    gw.data_mut()[widx] += acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}

/// Convolution layer with owned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub spec: ConvSpec,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new<R: Rng>(spec: ConvSpec, in_channels: usize, rng: &mut R) -> Self {
        let (a, b, f) = (spec.kernel_rows, spec.kernel_cols, spec.filters);
        let weights = glorot_uniform(&[f, in_channels, a, b], in_channels * a * b, f * a * b, rng);
        Self {
            spec,
            weights,
            bias: Tensor::zeros(&[f]),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        conv2d_forward(input, &self.spec, &self.weights, &self.bias)
    }

    pub fn backward(&self, upstream: &Tensor, input: &Tensor) -> Result<ConvGrads, NnError> {
        conv2d_backward(upstream, input, &self.spec, &self.weights)
    }
}

/// Transposed convolution layer with owned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransposedConv2d {
    pub spec: ConvSpec,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl TransposedConv2d {
    pub fn new<R: Rng>(spec: ConvSpec, in_channels: usize, rng: &mut R) -> Self {
        let (a, b, f) = (spec.kernel_rows, spec.kernel_cols, spec.filters);
        let weights = glorot_uniform(&[in_channels, f, a, b], in_channels * a * b, f * a * b, rng);
        Self {
            spec,
            weights,
            bias: Tensor::zeros(&[f]),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        transposed_conv2d_forward(input, &self.spec, &self.weights, &self.bias)
    }

    pub fn backward(&self, upstream: &Tensor, input: &Tensor) -> Result<ConvGrads, NnError> {
        transposed_conv2d_backward(upstream, input, &self.spec, &self.weights)
    }
}
