//! Dense and convolution kernels over row-major batches.
//!
//! Convolutions use the channels-last layout: a batch row holds `H * W * C`
//! values with the channel index fastest. Weights are `(out, k * k * in)`
//! with patch order `(ky, kx, c)`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

/// `x W^T + b` with `W` of shape `(out, in)`.
pub fn linear_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = Array2::zeros((x.nrows(), w.nrows()));
    general_mat_mul(1.0, &x, &w.t(), 0.0, &mut y);
    y += &b;
    y
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// requested.
pub fn linear_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    mut dw: ArrayViewMut2<f64>,
    mut db: ArrayViewMut1<f64>,
    want_dx: bool,
) -> Option<Array2<f64>> {
    general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut dw);
    db += &dy.sum_axis(Axis(0));
    want_dx.then(|| dy.dot(&w))
}

pub fn tanh_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(f64::tanh);
}

/// Gradient through `y = tanh(z)` given the activations `y`.
pub fn tanh_backward(y: &Array2<f64>, mut dy: Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut dy).and(y).for_each(|g, &y| *g *= 1.0 - y * y);
    dy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Shapes of one valid (unpadded) strided convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
}

impl ConvGeometry {
    pub fn new(in_h: usize, in_w: usize, in_c: usize, spec: ConvSpec) -> Option<Self> {
        if spec.kernel == 0 || spec.stride == 0 || spec.kernel > in_h || spec.kernel > in_w {
            return None;
        }
        Some(Self {
            in_h,
            in_w,
            in_c,
            kernel: spec.kernel,
            stride: spec.stride,
            out_h: (in_h - spec.kernel) / spec.stride + 1,
            out_w: (in_w - spec.kernel) / spec.stride + 1,
            out_c: spec.out_channels,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.positions() * self.out_c
    }
}

/// Unfolds `(B, H*W*C)` into `(B * positions, k*k*C)` patches.
pub fn im2col(input: ArrayView2<f64>, g: &ConvGeometry) -> Array2<f64> {
    let batch = input.nrows();
    let patch = g.patch_len();
    let row_len = g.kernel * g.in_c;
    let mut col = Array2::<f64>::zeros((batch * g.positions(), patch));
    for (b, x) in input.outer_iter().enumerate() {
        let x = x.as_slice().expect("contiguous batch row");
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let r = b * g.positions() + oy * g.out_w + ox;
                let mut dst = col.row_mut(r);
                let dst = dst.as_slice_mut().expect("contiguous patch row");
                for ky in 0..g.kernel {
                    let iy = oy * g.stride + ky;
                    let src = (iy * g.in_w + ox * g.stride) * g.in_c;
                    dst[ky * row_len..(ky + 1) * row_len].copy_from_slice(&x[src..src + row_len]);
                }
            }
        }
    }
    col
}

/// Scatters patch gradients back onto the input layout.
pub fn col2im(dcol: ArrayView2<f64>, g: &ConvGeometry, batch: usize) -> Array2<f64> {
    let row_len = g.kernel * g.in_c;
    let mut dx = Array2::<f64>::zeros((batch, g.in_len()));
    for (b, mut out) in dx.outer_iter_mut().enumerate() {
        let out = out.as_slice_mut().expect("contiguous batch row");
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let r = b * g.positions() + oy * g.out_w + ox;
                let src = dcol.row(r);
                let src = src.as_slice().expect("contiguous patch row");
                for ky in 0..g.kernel {
                    let iy = oy * g.stride + ky;
                    let dst = (iy * g.in_w + ox * g.stride) * g.in_c;
                    for (d, s) in out[dst..dst + row_len]
                        .iter_mut()
                        .zip(&src[ky * row_len..(ky + 1) * row_len])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
    dx
}
