use crate::error::{invalid, Result};
use crate::float::Float;
use crate::tensor::Tensor;

fn spatial(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() != 4 {
        return Err(invalid(op, format!("expected [N,C,H,W], got {shape:?}")));
    }
    Ok((shape[0] * shape[1], shape[2], shape[3]))
}

impl<T: Float> Tensor<T> {
    /// 2x2 max pooling with stride 2. Ties go to the first element in
    /// row-major window order.
    pub fn maxpool2d(&self) -> Result<Tensor<T>> {
        let (planes, h, w) = spatial("maxpool2d", self.shape())?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid("maxpool2d", format!("odd spatial extent {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        {
            let xd = self.data();
            for p in 0..planes {
                let base = p * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = base + 2 * oy * w + 2 * ox;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let j = base + (2 * oy + dy) * w + 2 * ox + dx;
                            if xd[j] > xd[best] {
                                best = j;
                            }
                        }
                        out.push(xd[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        let n_in = self.numel();
        let mut shape = self.shape().to_vec();
        shape[2] = oh;
        shape[3] = ow;
        Ok(Tensor::from_op(
            "maxpool2d",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); n_in];
                for (&gi, &j) in g.iter().zip(&argmax) {
                    gx[j] += gi;
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Nearest-neighbour 2x upsampling: every pixel becomes a 2x2 block.
    pub fn upsample_nearest2x(&self) -> Result<Tensor<T>> {
        let (planes, h, w) = spatial("upsample_nearest2x", self.shape())?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); planes * oh * ow];
        {
            let xd = self.data();
            for p in 0..planes {
                for y in 0..oh {
                    let src = &xd[p * h * w + (y / 2) * w..p * h * w + (y / 2 + 1) * w];
                    let dst = &mut out[p * oh * ow + y * ow..p * oh * ow + (y + 1) * ow];
                    for (x, v) in dst.iter_mut().enumerate() {
                        *v = src[x / 2];
                    }
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[2] = oh;
        shape[3] = ow;
        Ok(Tensor::from_op(
            "upsample_nearest2x",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    for y in 0..oh {
                        for x in 0..ow {
                            gx[p * h * w + (y / 2) * w + x / 2] += g[p * oh * ow + y * ow + x];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}
