//! Differentiable client objectives with deterministic minibatch evaluation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::ParamVector;

mod least_squares;
mod logistic;
mod mlp;
mod quadratic;
mod sampler;

pub use least_squares::LeastSquaresObjective;
pub use logistic::LogisticObjective;
pub use mlp::{Activation, MlpObjective};
pub use quadratic::QuadraticObjective;
pub use sampler::MinibatchSampler;

/// A client objective `F_i` over its own shard of samples.
///
/// `eval` must be a pure function of `(params, batch)`: identical inputs give
/// bit-identical outputs, and concurrent calls are allowed.
pub trait GradientOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of samples in this client's shard; batches index into `0..n`.
    fn num_samples(&self) -> usize;

    /// Mean loss and gradient over `batch`.
    fn eval(&self, params: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)>;

    /// Exposes the quadratic form when the objective is one, for probes that
    /// need the Hessian.
    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        None
    }

    /// Number of correctly classified shard samples, for classifiers.
    fn correct_count(&self, _params: &ParamVector) -> Option<usize> {
        None
    }

    /// Loss and gradient over the whole shard.
    fn eval_full(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        let batch: Vec<usize> = (0..self.num_samples()).collect();
        self.eval(params, &batch)
    }
}

pub(crate) fn check_eval_inputs(dim: usize, samples: usize, params: &ParamVector, batch: &[usize]) -> Result<()> {
    if params.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: params.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::invalid("batch", "empty minibatch"));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= samples) {
        return Err(Error::invalid(
            "batch",
            alloc::format!("sample index {bad} out of range for shard of {samples}"),
        ));
    }
    Ok(())
}

pub(crate) fn finish_grad(grad: Vec<f64>) -> Result<ParamVector> {
    ParamVector::from_vec(grad).map_err(|_| Error::NonFinite("gradient"))
}

/// Central-difference gradient check.
///
/// Returns `max_j |fd_j − g_j| / max(‖g‖_∞, 1e-12)` where `fd_j` is the
/// central difference of the batch loss along coordinate `j`. Normalizing
/// by the largest gradient entry keeps near-zero coordinates from turning
/// harmless absolute error into a huge ratio.
pub fn finite_difference_check(
    oracle: &dyn GradientOracle,
    params: &ParamVector,
    batch: &[usize],
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::invalid("step", "finite-difference step must be positive"));
    }
    let (_, grad) = oracle.eval(params, batch)?;
    let mut probe = params.clone();
    let scale = grad.as_slice().iter().fold(1e-12_f64, |m, g| m.max(g.abs()));
    let mut worst: f64 = 0.0;
    for j in 0..params.len() {
        let base = params[j];
        probe.as_mut_slice()[j] = base + step;
        let (plus, _) = oracle.eval(&probe, batch)?;
        probe.as_mut_slice()[j] = base - step;
        let (minus, _) = oracle.eval(&probe, batch)?;
        probe.as_mut_slice()[j] = base;
        let fd = (plus - minus) / (2.0 * step);
        let err = (fd - grad[j]).abs() / scale;
        worst = worst.max(err);
    }
    Ok(worst)
}
