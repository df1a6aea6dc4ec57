use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    Train,
    Eval,
}

/// Per-channel running mean and (unbiased) variance. Mutated in place by
/// train-mode batch norm; never part of the graph.
#[derive(Clone, Debug)]
pub struct RunningStats<T: Float> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Float> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: Tensor::zeros(&[channels]), var: Tensor::ones(&[channels]) }
    }
}

impl<T: Float> Tensor<T> {
    /// Batch normalization over `[N, C, H, W]` with per-channel affine terms.
    pub fn batch_norm2d(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        stats: &RunningStats<T>,
        mode: NormMode,
        eps: T,
        momentum: T,
    ) -> Result<Tensor<T>> {
        let xs = self.shape();
        if xs.len() != 4 {
            return Err(TensorError::ShapeMismatch { op: "batch_norm2d", lhs: xs.to_vec(), rhs: vec![] });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        for p in [gamma, beta, &stats.mean, &stats.var] {
            if p.shape() != [c] {
                return Err(TensorError::ShapeMismatch {
                    op: "batch_norm2d",
                    lhs: vec![c],
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let hw = h * w;
        let count = n * hw;
        if mode == NormMode::Train && count < 2 {
            return Err(TensorError::DegenerateBatch);
        }
        let m = T::from_usize(count).unwrap();

        let (mean, var): (Vec<T>, Vec<T>) = match mode {
            NormMode::Eval => (stats.mean.to_vec(), stats.var.to_vec()),
            NormMode::Train => {
                let xd = self.data();
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for s_i in 0..n {
                        let base = (s_i * c + ch) * hw;
                        s += xd[base..base + hw].iter().copied().sum();
                    }
                    let mu = s / m;
                    let mut v = T::zero();
                    for s_i in 0..n {
                        let base = (s_i * c + ch) * hw;
                        v += xd[base..base + hw].iter().map(|&x| (x - mu) * (x - mu)).sum();
                    }
                    mean[ch] = mu;
                    var[ch] = v / m;
                }
                let unbias = m / (m - T::one());
                let mut rm = stats.mean.data_mut();
                let mut rv = stats.var.data_mut();
                for ch in 0..c {
                    rm[ch] = (T::one() - momentum) * rm[ch] + momentum * mean[ch];
                    rv[ch] = (T::one() - momentum) * rv[ch] + momentum * var[ch] * unbias;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();

        let mut xhat = vec![T::zero(); self.numel()];
        let mut out = vec![T::zero(); self.numel()];
        {
            let xd = self.data();
            let (gd, bd) = (gamma.data(), beta.data());
            for s_i in 0..n {
                for ch in 0..c {
                    let base = (s_i * c + ch) * hw;
                    for i in base..base + hw {
                        let z = (xd[i] - mean[ch]) * inv_std[ch];
                        xhat[i] = z;
                        out[i] = gd[ch] * z + bd[ch];
                    }
                }
            }
        }
        let g_param = gamma.clone();
        Ok(Tensor::from_op(
            "batch_norm2d",
            xs.to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, needs| {
                let gd = g_param.data();
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for s_i in 0..n {
                    for ch in 0..c {
                        let base = (s_i * c + ch) * hw;
                        for i in base..base + hw {
                            sum_g[ch] += g[i];
                            sum_gx[ch] += g[i] * xhat[i];
                        }
                    }
                }
                let gx = needs[0].then(|| {
                    let mut gx = vec![T::zero(); g.len()];
                    for s_i in 0..n {
                        for ch in 0..c {
                            let base = (s_i * c + ch) * hw;
                            let k = gd[ch] * inv_std[ch];
                            for i in base..base + hw {
                                gx[i] = match mode {
                                    NormMode::Eval => k * g[i],
                                    NormMode::Train => {
                                        k * (g[i] - sum_g[ch] / m - xhat[i] * sum_gx[ch] / m)
                                    }
                                };
                            }
                        }
                    }
                    gx
                });
                vec![gx, needs[1].then_some(sum_gx), needs[2].then_some(sum_g)]
            }),
        ))
    }
}
