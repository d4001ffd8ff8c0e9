//! Convolution and resampling kernels over `[N, C, H, W]` buffers.
//!
//! Convolutions lower to a matrix product through an im2col buffer; the
//! backward pass rebuilds the same buffer instead of caching it.

use serde::{Deserialize, Serialize};

use crate::tensor::{MatRef, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub const fn new(stride: usize, pad: usize, dilation: usize) -> Self {
        Self { stride, pad, dilation }
    }

    /// Output extent along one axis, or `None` when the dilated kernel does
    /// not fit in the padded input.
    pub fn out_len(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.pad;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    ho: usize,
    wo: usize,
    spec: ConvSpec,
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let plane = g.ho * g.wo;
    let (stride, pad, dil) = (g.spec.stride as isize, g.spec.pad as isize, g.spec.dilation as isize);
    for ci in 0..g.c {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = oy as isize * stride + ki as isize * dil - pad;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = ox as isize * stride + kj as isize * dil - pad;
                        *o = if ix < 0 || ix >= g.w as isize { T::zero() } else { src_row[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let plane = g.ho * g.wo;
    let (stride, pad, dil) = (g.spec.stride as isize, g.spec.pad as isize, g.spec.dilation as isize);
    for ci in 0..g.c {
        let dst = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = oy as isize * stride + ki as isize * dil - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = ox as isize * stride + kj as isize * dil - pad;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution. `w` is `[Cout, Cin, K, K]`; returns `(out, Ho, Wo)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Real>(
    x: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[T],
    cout: usize,
    k: usize,
    bias: Option<&[T]>,
    spec: ConvSpec,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let g = Geometry { c, h, w, k, ho, wo, spec };
    let ckk = c * k * k;
    let plane = ho * wo;
    let mut cols = vec![T::zero(); ckk * plane];
    let mut out = vec![T::zero(); n * cout * plane];
    for s in 0..n {
        im2col(&x[s * c * h * w..(s + 1) * c * h * w], &g, &mut cols);
        let dst = &mut out[s * cout * plane..(s + 1) * cout * plane];
        if let Some(b) = bias {
            for (co, chunk) in dst.chunks_mut(plane).enumerate() {
                chunk.fill(b[co]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(cout, ckk, plane, T::one(), MatRef::row_major(weight, ckk), MatRef::row_major(&cols, plane), beta, dst, plane as isize, 1);
    }
    out
}

/// Gradients of a convolution. Any of the three outputs may be skipped.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    x: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[T],
    cout: usize,
    k: usize,
    spec: ConvSpec,
    ho: usize,
    wo: usize,
    dout: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let g = Geometry { c, h, w, k, ho, wo, spec };
    let ckk = c * k * k;
    let plane = ho * wo;
    let mut cols = vec![T::zero(); ckk * plane];
    for s in 0..n {
        let dout_s = &dout[s * cout * plane..(s + 1) * cout * plane];
        if let Some(db) = db.as_deref_mut() {
            for (co, chunk) in dout_s.chunks(plane).enumerate() {
                db[co] += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            im2col(&x[s * c * h * w..(s + 1) * c * h * w], &g, &mut cols);
            T::gemm(cout, plane, ckk, T::one(), MatRef::row_major(dout_s, plane), MatRef::transposed(&cols, plane), T::one(), dw, ckk as isize, 1);
        }
        if let Some(dx) = dx.as_deref_mut() {
            T::gemm(ckk, cout, plane, T::one(), MatRef::transposed(weight, ckk), MatRef::row_major(dout_s, plane), T::zero(), &mut cols, plane as isize, 1);
            col2im(&cols, &g, &mut dx[s * c * h * w..(s + 1) * c * h * w]);
        }
    }
}

/// Nearest-neighbour 2x upsampling of `[N*C, H, W]` planes.
pub fn upsample2<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * h2 * w2];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for y in 0..h2 {
            for xx in 0..w2 {
                dst[y * w2 + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(dout: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let src = &dout[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h2 {
            for xx in 0..w2 {
                dst[(y / 2) * w + xx / 2] += src[y * w2 + xx];
            }
        }
    }
    dx
}

/// 2x2 mean pooling with stride 2; `h` and `w` must be even.
pub fn avgpool2<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut out = vec![T::zero(); planes * ho * wo];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for y in 0..ho {
            for xx in 0..wo {
                let s = src[2 * y * w + 2 * xx] + src[2 * y * w + 2 * xx + 1] + src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1];
                dst[y * wo + xx] = s * quarter;
            }
        }
    }
    out
}

pub fn avgpool2_backward<T: Real>(dout: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let src = &dout[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                dst[y * w + xx] = src[(y / 2) * wo + xx / 2] * quarter;
            }
        }
    }
    dx
}
