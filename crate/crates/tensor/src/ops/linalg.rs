use crate::error::{Result, TensorError};
use crate::float::{gemm, Float, MatRef};
use crate::tensor::Tensor;

impl<T: Float> Tensor<T> {
    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            MatRef::new(&self.data(), m, k),
            MatRef::new(&other.data(), k, n),
            &mut out,
            false,
        );
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            "matmul",
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let gm = MatRef::new(g, m, n);
                let ga = needs[0].then(|| {
                    let mut ga = vec![T::zero(); m * k];
                    gemm(gm, MatRef::new(&b.data(), k, n).t(), &mut ga, false);
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![T::zero(); k * n];
                    gemm(MatRef::new(&a.data(), m, k).t(), gm, &mut gb, false);
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }
}
