use alloc::vec;
use alloc::vec::Vec;

use super::{check_eval_inputs, finish_grad, GradientOracle, QuadraticObjective};
use crate::error::{Error, Result};
use crate::param::{dot, DenseMatrix, ParamVector};

/// Least squares over a shard: mean of `½(aᵀx − y)²` plus `(l2/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquaresObjective {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    l2_weight: f64,
}

impl LeastSquaresObjective {
    /// `features` is row-major with `targets.len()` rows of length `dim`.
    pub fn new(dim: usize, features: Vec<f64>, targets: Vec<f64>, l2_weight: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::invalid("targets", "shard must be non-empty"));
        }
        if features.len() != dim * targets.len() {
            return Err(Error::Dimension {
                expected: dim * targets.len(),
                found: features.len(),
            });
        }
        if !(l2_weight >= 0.0) {
            return Err(Error::invalid("l2_weight", "must be non-negative"));
        }
        if !features.iter().chain(&targets).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("least-squares data"));
        }
        Ok(Self {
            dim,
            features,
            targets,
            l2_weight,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// The equivalent quadratic `½xᵀHx − cᵀx` over the full shard, with
    /// `H = XᵀX/n + l2·I` and `c = Xᵀy/n`.
    pub fn to_quadratic(&self) -> Result<QuadraticObjective> {
        let (h, c) = self.normal_equations();
        QuadraticObjective::new(DenseMatrix::from_rows(self.dim, h)?, ParamVector::from_vec(c)?)
    }

    /// Row-major `H` and `c` of the full-shard normal equations.
    pub fn normal_equations(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let n = self.targets.len() as f64;
        let mut h = vec![0.0; d * d];
        let mut c = vec![0.0; d];
        for (i, &y) in self.targets.iter().enumerate() {
            let a = self.row(i);
            for r in 0..d {
                c[r] += a[r] * y;
                for s in 0..d {
                    h[r * d + s] += a[r] * a[s];
                }
            }
        }
        h.iter_mut().for_each(|v| *v /= n);
        c.iter_mut().for_each(|v| *v /= n);
        for r in 0..d {
            h[r * d + r] += self.l2_weight;
        }
        (h, c)
    }
}

impl GradientOracle for LeastSquaresObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.targets.len()
    }

    fn eval(&self, params: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        check_eval_inputs(self.dim, self.num_samples(), params, batch)?;
        let x = params.as_slice();
        let mut grad = vec![0.0; self.dim];
        let mut loss = 0.0;
        for &i in batch {
            let a = self.row(i);
            let r = dot(a, x) - self.targets[i];
            loss += 0.5 * r * r;
            for (g, aj) in grad.iter_mut().zip(a) {
                *g += r * aj;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        loss *= inv;
        for (g, xj) in grad.iter_mut().zip(x) {
            *g = *g * inv + self.l2_weight * xj;
        }
        loss += 0.5 * self.l2_weight * dot(x, x);
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((loss, finish_grad(grad)?))
    }
}
