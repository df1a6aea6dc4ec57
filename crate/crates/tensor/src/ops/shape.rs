use crate::error::{invalid, Result, TensorError};
use crate::float::Float;
use crate::tensor::{numel, Tensor};

impl<T: Float> Tensor<T> {
    pub fn sum_all(&self) -> Tensor<T> {
        let total: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            "sum",
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = T::from_usize(self.numel()).unwrap();
        self.sum_all().mul_scalar(n.recip())
    }

    /// Flat gather of the listed elements into a 1-D tensor. Elements not
    /// listed receive no gradient.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let n = self.numel();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(invalid("gather", format!("index {bad} out of range {n}")));
        }
        let data: Vec<T> = {
            let d = self.data();
            indices.iter().map(|&i| d[i]).collect()
        };
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            "gather",
            vec![indices.len()],
            data,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); n];
                for (&gi, &i) in g.iter().zip(&idx) {
                    gx[i] += gi;
                }
                vec![Some(gx)]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Softmax along `axis`, stabilized by subtracting the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, rank: shape.len() });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut y = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut m = T::neg_infinity();
                for k in 0..len {
                    m = m.max(y[base + k * inner]);
                }
                let mut s = T::zero();
                for k in 0..len {
                    let e = (y[base + k * inner] - m).exp();
                    y[base + k * inner] = e;
                    s += e;
                }
                for k in 0..len {
                    y[base + k * inner] = y[base + k * inner] / s;
                }
            }
        }
        let saved = if self.requires_grad() { y.clone() } else { Vec::new() };
        Ok(Tensor::from_op(
            "softmax",
            shape,
            y,
            vec![self.clone()],
            Box::new(move |g, _| {
                // dx = y * (g - sum_k g_k y_k)
                let mut gx = vec![T::zero(); g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let mut dot = T::zero();
                        for k in 0..len {
                            let j = base + k * inner;
                            dot += g[j] * saved[j];
                        }
                        for k in 0..len {
                            let j = base + k * inner;
                            gx[j] = saved[j] * (g[j] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

/// Concatenates along `axis`; every other extent must agree.
pub fn concat<T: Float>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
    let rank = first.ndim();
    if axis >= rank {
        return Err(TensorError::InvalidAxis { axis, rank });
    }
    for p in &parts[1..] {
        let ok = p.ndim() == rank
            && (0..rank).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
    let row: usize = widths.iter().sum();
    let mut shape = first.shape().to_vec();
    shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * row);
    {
        let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for o in 0..outer {
            for (d, &w) in datas.iter().zip(&widths) {
                data.extend_from_slice(&d[o * w..(o + 1) * w]);
            }
        }
    }
    Ok(Tensor::from_op(
        "concat",
        shape,
        data,
        parts.iter().map(|&p| p.clone()).collect(),
        Box::new(move |g, needs| {
            let mut offset = 0;
            let mut out = Vec::with_capacity(widths.len());
            for (&w, &need) in widths.iter().zip(needs) {
                if need {
                    let mut gp = Vec::with_capacity(outer * w);
                    for o in 0..outer {
                        let start = o * row + offset;
                        gp.extend_from_slice(&g[start..start + w]);
                    }
                    out.push(Some(gp));
                } else {
                    out.push(None);
                }
                offset += w;
            }
            out
        }),
    ))
}
