use alloc::vec;
use alloc::vec::Vec;

use super::{check_eval_inputs, finish_grad, GradientOracle};
use crate::error::{Error, Result};
use crate::param::{dot, ParamVector};

/// Binary logistic regression with labels in `{−1, +1}`:
/// mean of `log(1 + exp(−y·wᵀx))` plus `(l2/2)‖w‖²`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    l2_weight: f64,
}

impl LogisticObjective {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>, l2_weight: f64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("labels", "shard must be non-empty"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Dimension {
                expected: dim * labels.len(),
                found: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(
                "labels",
                alloc::format!("logistic labels must be -1 or +1, got {bad}"),
            ));
        }
        if !(l2_weight >= 0.0) {
            return Err(Error::invalid("l2_weight", "must be non-negative"));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("logistic features"));
        }
        Ok(Self {
            dim,
            features,
            labels,
            l2_weight,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + libm::log1p(libm::exp(-t.abs()))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

impl GradientOracle for LogisticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn eval(&self, params: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        check_eval_inputs(self.dim, self.num_samples(), params, batch)?;
        let w = params.as_slice();
        let mut grad = vec![0.0; self.dim];
        let mut loss = 0.0;
        for &i in batch {
            let x = self.row(i);
            let y = self.labels[i];
            let margin = -y * dot(w, x);
            loss += softplus(margin);
            let coeff = -y * sigmoid(margin);
            for (g, xj) in grad.iter_mut().zip(x) {
                *g += coeff * xj;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        loss = loss * inv + 0.5 * self.l2_weight * dot(w, w);
        for (g, wj) in grad.iter_mut().zip(w) {
            *g = *g * inv + self.l2_weight * wj;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((loss, finish_grad(grad)?))
    }

    fn correct_count(&self, params: &ParamVector) -> Option<usize> {
        let w = params.as_slice();
        Some(
            (0..self.num_samples())
                .filter(|&i| {
                    let score = dot(w, self.row(i));
                    (score >= 0.0) == (self.labels[i] > 0.0)
                })
                .count(),
        )
    }
}
