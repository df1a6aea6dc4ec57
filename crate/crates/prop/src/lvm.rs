use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of the total probability mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LvmError {
    #[error("joint has {got} entries, supports imply {expected}")]
    Shape { expected: usize, got: usize },
    #[error("joint entry {index} is {value}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("joint sums to {0}")]
    NotNormalized(f64),
    #[error("support of {0} is empty")]
    EmptySupport(&'static str),
    #[error("support value {0} is not finite")]
    NonFiniteSupport(f64),
}

/// Finite joint distribution of `(X, Y, Z)`. `joint[(i * |Y| + j) * |Z| + k]`
/// is `P(X = xs[i], Y = ys[j], Z = zs[k])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLVM {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    joint: Vec<f64>,
}

impl DiscreteLVM {
    /// Validates the table and drops `x` values of zero marginal probability.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, zs: Vec<f64>, joint: Vec<f64>) -> Result<Self, LvmError> {
        for (name, s) in [("X", &xs), ("Y", &ys), ("Z", &zs)] {
            if s.is_empty() {
                return Err(LvmError::EmptySupport(name));
            }
            if let Some(&v) = s.iter().find(|v| !v.is_finite()) {
                return Err(LvmError::NonFiniteSupport(v));
            }
        }
        let expected = xs.len() * ys.len() * zs.len();
        if joint.len() != expected {
            return Err(LvmError::Shape { expected, got: joint.len() });
        }
        if let Some((index, &value)) = joint.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(LvmError::InvalidProbability { index, value });
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LvmError::NotNormalized(total));
        }
        let block = ys.len() * zs.len();
        let keep: Vec<usize> = (0..xs.len())
            .filter(|&i| joint[i * block..(i + 1) * block].iter().any(|&p| p > 0.0))
            .collect();
        let xs_kept = keep.iter().map(|&i| xs[i]).collect();
        let joint_kept = keep.iter().flat_map(|&i| joint[i * block..(i + 1) * block].iter().copied()).collect();
        Ok(DiscreteLVM { xs: xs_kept, ys, zs, joint: joint_kept })
    }

    /// Support sizes in `2..=max_support`, support values uniform on
    /// `[-1, 1]`, strictly positive probabilities normalized to one.
    pub fn random(rng: &mut impl Rng, max_support: usize) -> Self {
        let max_support = max_support.max(2);
        fn support(rng: &mut impl Rng, max_support: usize) -> Vec<f64> {
            let n = rng.gen_range(2..=max_support);
            (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        }
        let xs = support(rng, max_support);
        let ys = support(rng, max_support);
        let zs = support(rng, max_support);
        let raw: Vec<f64> = (0..xs.len() * ys.len() * zs.len()).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let joint = raw.iter().map(|p| p / total).collect();
        DiscreteLVM { xs, ys, zs, joint }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.xs.len(), self.ys.len(), self.zs.len()]
    }

    pub fn p(&self, i: usize, j: usize, k: usize) -> f64 {
        self.joint[(i * self.ys.len() + j) * self.zs.len() + k]
    }

    /// The same model with the roles of `Y` and `Z` exchanged.
    pub fn swapped(&self) -> Self {
        let [nx, ny, nz] = self.sizes();
        let mut joint = vec![0.0; self.joint.len()];
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    joint[(i * nz + k) * ny + j] = self.p(i, j, k);
                }
            }
        }
        DiscreteLVM { xs: self.xs.clone(), ys: self.zs.clone(), zs: self.ys.clone(), joint }
    }

    /// `Y` replaced by `c * Y`.
    pub fn with_scaled_y(&self, c: f64) -> Self {
        DiscreteLVM { ys: self.ys.iter().map(|y| c * y).collect(), ..self.clone() }
    }

    /// Reorders each support (and the table with it). `perm_x[i]` is the old
    /// index placed at new position `i`.
    pub fn permuted(&self, perm_x: &[usize], perm_y: &[usize], perm_z: &[usize]) -> Self {
        let [_, ny, nz] = self.sizes();
        let mut joint = Vec::with_capacity(self.joint.len());
        for &i in perm_x {
            for &j in perm_y {
                for &k in perm_z {
                    joint.push(self.p(i, j, k));
                }
            }
        }
        debug_assert_eq!(joint.len(), perm_x.len() * ny * nz);
        DiscreteLVM {
            xs: perm_x.iter().map(|&i| self.xs[i]).collect(),
            ys: perm_y.iter().map(|&j| self.ys[j]).collect(),
            zs: perm_z.iter().map(|&k| self.zs[k]).collect(),
            joint,
        }
    }

    /// `P(X = xs[i])`.
    pub fn marginal_x(&self) -> Vec<f64> {
        let block = self.ys.len() * self.zs.len();
        self.joint.chunks(block).map(|c| c.iter().sum()).collect()
    }
}
