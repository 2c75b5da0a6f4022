//! im2col / col2im re-indexing shared by convolution and transposed
//! convolution. Patch matrices have shape `[C*k*k, B*OH*OW]` with column
//! index `b*OH*OW + oy*OW + ox`, so a convolution is one GEMM against the
//! flattened kernel bank.

use super::Scalar;
use ndarray::Array2;

/// Output spatial size of a convolution (floor semantics).
pub fn conv_out(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

/// Output spatial size of a transposed convolution.
pub fn conv_transpose_out(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h - 1) * stride + k - 2 * pad
}

#[derive(Debug, Clone, Copy)]
pub struct PatchGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl PatchGeometry {
    pub fn conv(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            c,
            h,
            w,
            k,
            stride,
            pad,
            oh: conv_out(h, k, stride, pad),
            ow: conv_out(w, k, stride, pad),
        }
    }

    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self, batch: usize) -> usize {
        batch * self.oh * self.ow
    }
}

/// Gathers every kernel-sized patch of `x` (shape `[B, C*H*W]`) into the
/// patch matrix; out-of-image reads are zero.
pub fn im2col<F: Scalar>(x: &Array2<F>, g: &PatchGeometry) -> Array2<F> {
    let batch = x.nrows();
    debug_assert_eq!(x.ncols(), g.c * g.h * g.w);
    let mut cols = Array2::<F>::zeros((g.rows(), g.cols(batch)));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    let (ohw, hw) = (g.oh * g.ow, g.h * g.w);
    let ncols = batch * ohw;
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let out = &mut cs[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let xb = &xs[b * g.c * hw + c * hw..][..hw];
                    for oy in 0..g.oh {
                        let iy = oy * g.stride + ky;
                        if iy < g.pad || iy >= g.h + g.pad {
                            continue;
                        }
                        let iy = iy - g.pad;
                        let dst = &mut out[b * ohw + oy * g.ow..][..g.ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = ox * g.stride + kx;
                            if ix < g.pad || ix >= g.w + g.pad {
                                continue;
                            }
                            *d = xb[iy * g.w + (ix - g.pad)];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds a patch matrix back onto the image
/// grid, so `<im2col(x), c> = <x, col2im(c)>` for all `x`, `c`.
pub fn col2im<F: Scalar>(cols: &Array2<F>, g: &PatchGeometry, batch: usize) -> Array2<F> {
    debug_assert_eq!(cols.nrows(), g.rows());
    debug_assert_eq!(cols.ncols(), g.cols(batch));
    let mut x = Array2::<F>::zeros((batch, g.c * g.h * g.w));
    let cs = cols.as_slice().expect("standard layout");
    let xs = x.as_slice_mut().expect("standard layout");
    let (ohw, hw) = (g.oh * g.ow, g.h * g.w);
    let ncols = batch * ohw;
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cs[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let xb = &mut xs[b * g.c * hw + c * hw..][..hw];
                    for oy in 0..g.oh {
                        let iy = oy * g.stride + ky;
                        if iy < g.pad || iy >= g.h + g.pad {
                            continue;
                        }
                        let iy = iy - g.pad;
                        let s = &src[b * ohw + oy * g.ow..][..g.ow];
                        for (ox, &v) in s.iter().enumerate() {
                            let ix = ox * g.stride + kx;
                            if ix < g.pad || ix >= g.w + g.pad {
                                continue;
                            }
                            xb[iy * g.w + (ix - g.pad)] = xb[iy * g.w + (ix - g.pad)] + v;
                        }
                    }
                }
            }
        }
    }
    x
}
