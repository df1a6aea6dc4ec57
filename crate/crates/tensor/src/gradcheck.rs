//! Central finite differences for validating analytic gradients.
//!
//! The numeric side only ever evaluates forward values, so it shares nothing
//! with the reverse sweep it is checking.

use crate::error::Result;
use crate::float::Float;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Error summary for one tensor. Errors are `|analytic - numeric| / max(1, |numeric|)`.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GradComparison {
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradComparison {
    assert_eq!(analytic.len(), numeric.len());
    let mut c = GradComparison { checked: analytic.len(), ..Default::default() };
    for (&a, &n) in analytic.iter().zip(numeric) {
        c.max_rel_err = c.max_rel_err.max(relative_error(a, n));
        c.max_abs_analytic = c.max_abs_analytic.max(a.abs());
        c.max_abs_numeric = c.max_abs_numeric.max(n.abs());
    }
    c
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for each listed element of `param`,
/// restoring the original value afterwards.
pub fn numeric_grad<T: Float>(
    param: &Tensor<T>,
    indices: &[usize],
    step: f64,
    mut f: impl FnMut() -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = param.data()[i];
        param.data_mut()[i] = T::from_f(orig.as_f64() + step);
        let plus = f();
        param.data_mut()[i] = T::from_f(orig.as_f64() - step);
        let minus = f();
        param.data_mut()[i] = orig;
        out.push((plus? - minus?) / (2.0 * step));
    }
    Ok(out)
}

/// Checks every element of every input of a scalar-valued function.
///
/// `inputs` must be parameter leaves; their stored gradients are reset.
pub fn check_function(
    inputs: &[Tensor<f64>],
    step: f64,
    f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
) -> Result<Vec<GradComparison>> {
    inputs.iter().for_each(|t| t.zero_grad());
    let loss = f(inputs)?;
    loss.backward()?;
    let mut results = Vec::with_capacity(inputs.len());
    for t in inputs {
        let analytic = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        let indices: Vec<usize> = (0..t.numel()).collect();
        let numeric = numeric_grad(t, &indices, step, || Ok(f(inputs)?.item()))?;
        results.push(compare(&analytic, &numeric));
    }
    Ok(results)
}
