use crate::error::{invalid, Result, TensorError};
use crate::float::{gemm, Float, MatRef};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// 1x1, stride 1, no padding: the input plane is already the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Valid output columns `[lo, hi)` for kernel column `kj` when stride is 1.
fn valid_span(g: &Geometry, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).min(g.ow);
    let hi = (g.w + g.pad).saturating_sub(kj).min(g.ow).max(lo);
    (lo, hi)
}

/// Writes the patches of one sample into columns `offset..offset + oh*ow`
/// of a row-major matrix with row stride `ld`.
fn im2col<T: Float>(x: &[T], g: &Geometry, cols: &mut [T], ld: usize, offset: usize) {
    let opix = g.out_pixels();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ld + offset..row * ld + offset + opix];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        let (lo, hi) = valid_span(g, kj);
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        line[lo..hi].copy_from_slice(&src[lo + kj - g.pad..hi + kj - g.pad]);
                    } else {
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            *v = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back onto one sample's input.
fn col2im<T: Float>(cols: &[T], g: &Geometry, ld: usize, offset: usize, dx: &mut [T]) {
    let opix = g.out_pixels();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ld + offset..row * ld + offset + opix];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let (lo, hi) = valid_span(g, kj);
                        let d = &mut dst[lo + kj - g.pad..hi + kj - g.pad];
                        d.iter_mut().zip(&line[lo..hi]).for_each(|(a, &b)| *a += b);
                    } else {
                        for (ox, &v) in line.iter().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < g.w {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `[N, F, P]` <-> `[F, N*P]` layout change.
fn to_channel_major<T: Float>(x: &[T], n: usize, f: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for k in 0..f {
            out[k * n * p + s * p..k * n * p + (s + 1) * p].copy_from_slice(&x[(s * f + k) * p..(s * f + k + 1) * p]);
        }
    }
    out
}

fn to_sample_major<T: Float>(x: &[T], n: usize, f: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for k in 0..f {
            out[(s * f + k) * p..(s * f + k + 1) * p].copy_from_slice(&x[k * n * p + s * p..k * n * p + (s + 1) * p]);
        }
    }
    out
}

impl<T: Float> Tensor<T> {
    /// 2-D cross-correlation: `x [N,C,H,W]`, `weight [F,C,kh,kw]`, optional
    /// `bias [F]`, symmetric zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: xs.to_vec(), rhs: ws.to_vec() });
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be positive"));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (f, kh, kw) = (ws[0], ws[2], ws[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(invalid("conv2d", format!("kernel {kh}x{kw} must have odd extents")));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(invalid("conv2d", format!("kernel {kh}x{kw} exceeds padded input {h}x{w}")));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        if let Some(b) = bias {
            if b.shape() != [f] {
                return Err(TensorError::ShapeMismatch { op: "conv2d bias", lhs: vec![f], rhs: b.shape().to_vec() });
            }
        }
        let geo = Geometry { c, h, w, kh, kw, stride, pad: padding, oh, ow };
        let (patch, opix, in_size) = (geo.patch(), geo.out_pixels(), c * h * w);

        // Patches of the whole batch side by side: `[patch, N * opix]`.
        let ld = n * opix;
        let mut cols = vec![T::zero(); patch * ld];
        let mut out = {
            let xd = self.data();
            if geo.is_pointwise() {
                cols = to_channel_major(&xd, n, c, opix);
            } else {
                for s in 0..n {
                    im2col(&xd[s * in_size..(s + 1) * in_size], &geo, &mut cols, ld, s * opix);
                }
            }
            let wd = weight.data();
            let mut prod = vec![T::zero(); f * ld];
            gemm(MatRef::new(&wd, f, patch), MatRef::new(&cols, patch, ld), &mut prod, false);
            to_sample_major(&prod, n, f, opix)
        };
        if let Some(b) = bias {
            let bd = b.data();
            for (i, chunk) in out.chunks_mut(opix).enumerate() {
                let bv = bd[i % f];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let wt = weight.clone();
        let has_bias = bias.is_some();
        Ok(Tensor::from_op(
            "conv2d",
            vec![n, f, oh, ow],
            out,
            parents,
            Box::new(move |g, needs| {
                let gmat = to_channel_major(g, n, f, opix);
                let gw = needs[1].then(|| {
                    let mut gw = vec![T::zero(); f * patch];
                    gemm(MatRef::new(&gmat, f, ld), MatRef::new(&cols, patch, ld).t(), &mut gw, false);
                    gw
                });
                let gx = needs[0].then(|| {
                    let wd = wt.data();
                    let mut gcols = vec![T::zero(); patch * ld];
                    gemm(MatRef::new(&wd, f, patch).t(), MatRef::new(&gmat, f, ld), &mut gcols, false);
                    if geo.is_pointwise() {
                        return to_sample_major(&gcols, n, c, opix);
                    }
                    let mut gx = vec![T::zero(); n * in_size];
                    for s in 0..n {
                        col2im(&gcols, &geo, ld, s * opix, &mut gx[s * in_size..(s + 1) * in_size]);
                    }
                    gx
                });
                let mut result = vec![gx, gw];
                if has_bias {
                    let gb = needs[2].then(|| {
                        let mut gb = vec![T::zero(); f];
                        for (i, chunk) in g.chunks(opix).enumerate() {
                            gb[i % f] += chunk.iter().copied().sum();
                        }
                        gb
                    });
                    result.push(gb);
                }
                result
            }),
        ))
    }
}
