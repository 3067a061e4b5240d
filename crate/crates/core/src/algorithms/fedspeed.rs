//! The FedSpeed local step, prox-correction update and client payload.

use alloc::vec::Vec;

use super::{RhoMode, StepContext};
use crate::error::{Error, Result};
use crate::objectives::GradientOracle;
use crate::param::ParamVector;

/// Per-step settings of the FedSpeed local update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FedSpeedStep {
    pub eta_l: f64,
    pub lambda: f64,
    pub rho: f64,
    pub rho_mode: RhoMode,
    pub alpha: f64,
    /// Include `(1/λ)(x_k − x^t)` in the descent direction.
    pub prox: bool,
    /// Include `−ĝ_i^{t−1}` in the descent direction.
    pub correction: bool,
}

impl FedSpeedStep {
    /// All FedSpeed terms disabled; the step degenerates to plain SGD.
    pub fn sgd(eta_l: f64, lambda: f64) -> Self {
        Self {
            eta_l,
            lambda,
            rho: 0.0,
            rho_mode: RhoMode::Fixed,
            alpha: 0.0,
            prox: false,
            correction: false,
        }
    }
}

fn overflow(ctx: StepContext) -> Error {
    Error::NumericOverflow {
        client: ctx.client,
        round: ctx.round,
        step: ctx.step,
    }
}

pub(crate) fn gradient(
    oracle: &dyn GradientOracle,
    x: &ParamVector,
    batch: &[usize],
    ctx: StepContext,
) -> Result<ParamVector> {
    match oracle.eval(x, batch) {
        Ok((_, g)) => Ok(g),
        Err(Error::NonFinite(_)) => Err(overflow(ctx)),
        Err(e) => Err(e),
    }
}

/// Quasi-gradient `g̃ = (1−α)g₁ + α∇F(x + ρg₁)` on one minibatch.
fn quasi_gradient(
    oracle: &dyn GradientOracle,
    x: &ParamVector,
    batch: &[usize],
    step: &FedSpeedStep,
    ctx: StepContext,
) -> Result<ParamVector> {
    let g1 = gradient(oracle, x, batch, ctx)?;
    if step.alpha == 0.0 {
        return Ok(g1);
    }
    let radius = match step.rho_mode {
        RhoMode::Fixed => step.rho,
        RhoMode::Normalized => {
            let norm = g1.l2_norm();
            if norm < 1e-12 {
                return Ok(g1);
            }
            step.rho / norm
        }
    };
    let mut ascent = x.clone();
    ascent.add_scaled(radius, &g1);
    if !ascent.is_finite() {
        return Err(overflow(ctx));
    }
    let g2 = gradient(oracle, &ascent, batch, ctx)?;
    if step.alpha == 1.0 {
        return Ok(g2);
    }
    let (a, b) = (1.0 - step.alpha, step.alpha);
    let mixed: Vec<f64> = g1
        .as_slice()
        .iter()
        .zip(g2.as_slice())
        .map(|(p, q)| a * p + b * q)
        .collect();
    ParamVector::from_vec(mixed).map_err(|_| overflow(ctx))
}

/// One local step on the given minibatch. Returns `(x_{k+1}, g̃_k)`.
///
/// `x_{k+1} = x_k − η_l(g̃_k − ĝ_i^{t−1} + (1/λ)(x_k − x^t))`, with the
/// correction and prox terms dropped when switched off in `step`.
pub fn fedspeed_local_step(
    x_k: &ParamVector,
    anchor: &ParamVector,
    g_hat_prev: &ParamVector,
    oracle: &dyn GradientOracle,
    batch: &[usize],
    step: &FedSpeedStep,
    ctx: StepContext,
) -> Result<(ParamVector, ParamVector)> {
    x_k.check_dim(anchor)?;
    x_k.check_dim(g_hat_prev)?;
    let g_tilde = quasi_gradient(oracle, x_k, batch, step, ctx)?;
    let inv_lambda = 1.0 / step.lambda;
    let x = x_k.as_slice();
    let next: Vec<f64> = (0..x.len())
        .map(|j| {
            let mut dir = g_tilde[j];
            if step.correction {
                dir -= g_hat_prev[j];
            }
            if step.prox {
                dir += inv_lambda * (x[j] - anchor[j]);
            }
            x[j] - step.eta_l * dir
        })
        .collect();
    let next = ParamVector::from_vec(next).map_err(|_| overflow(ctx))?;
    Ok((next, g_tilde))
}

/// `ĝ_i^t = ĝ_i^{t−1} − (1/λ)(x_{i,K} − x^t)`.
pub fn update_prox_correction(
    g_hat_prev: &ParamVector,
    x_last: &ParamVector,
    anchor: &ParamVector,
    lambda: f64,
) -> Result<ParamVector> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    g_hat_prev.check_dim(x_last)?;
    x_last.check_dim(anchor)?;
    let values = (0..g_hat_prev.len())
        .map(|j| g_hat_prev[j] - (x_last[j] - anchor[j]) / lambda)
        .collect();
    ParamVector::from_vec(values)
}

/// `x̂_i = x_{i,K} − λ·ĝ_i^t`, the model a client sends back.
pub fn client_payload(x_last: &ParamVector, g_hat_new: &ParamVector, lambda: f64) -> Result<ParamVector> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    ParamVector::axpy(-lambda, g_hat_new, x_last)
}

/// Compares the quasi-gradient with the exact gradient of the
/// gradient-norm-penalized objective `F + (β/2)‖∇F‖²`, `β = αρ`.
///
/// Only defined for quadratic objectives, where `∇[(β/2)‖∇F‖²] = βA∇F`.
/// Returns `(quasi_grad, exact_penalized_grad)`.
pub fn penalized_gradient_probe(
    oracle: &dyn GradientOracle,
    x: &ParamVector,
    rho: f64,
    alpha: f64,
) -> Result<(ParamVector, ParamVector)> {
    let quad = oracle.as_quadratic().ok_or(Error::UnsupportedProbe(
        "penalized-gradient probe needs a quadratic objective",
    ))?;
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", "must be positive"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", "must lie in [0, 1]"));
    }
    // The quasi-gradient goes through the same code path as a local step.
    let step = FedSpeedStep {
        rho,
        rho_mode: RhoMode::Fixed,
        alpha,
        ..FedSpeedStep::sgd(1.0, 1.0)
    };
    let ctx = StepContext {
        client: 0,
        round: 0,
        step: 0,
    };
    let quasi = quasi_gradient(oracle, x, &[0], &step, ctx)?;
    let g = quad.gradient(x);
    let beta = alpha * rho;
    let mut exact = g.clone();
    exact.add_scaled(beta, &quad.hessian_times(&g));
    Ok((quasi, ParamVector::from_vec(exact.into_vec())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::QuadraticObjective;
    use crate::param::DenseMatrix;
    use alloc::vec;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec()).unwrap()
    }

    fn half_square() -> QuadraticObjective {
        QuadraticObjective::new(DenseMatrix::identity(1), ParamVector::zeros(1)).unwrap()
    }

    fn full(eta_l: f64, lambda: f64, rho: f64, alpha: f64) -> FedSpeedStep {
        FedSpeedStep {
            eta_l,
            lambda,
            rho,
            rho_mode: RhoMode::Fixed,
            alpha,
            prox: true,
            correction: true,
        }
    }

    fn ctx(step: usize) -> StepContext {
        StepContext {
            client: 0,
            round: 0,
            step,
        }
    }

    #[test]
    fn stationary_point_is_fixed() {
        let a = DenseMatrix::from_rows(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let q = QuadraticObjective::new(a, pv(&[1.0, 2.0])).unwrap();
        let x = q.minimizer().unwrap();
        let (next, _) = fedspeed_local_step(
            &x,
            &x,
            &ParamVector::zeros(2),
            &q,
            &[0],
            &full(0.1, 10.0, 0.2, 0.7),
            ctx(0),
        )
        .unwrap();
        for j in 0..2 {
            assert!((next[j] - x[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn one_dimensional_hand_run() {
        let q = half_square();
        let step = full(0.1, 10.0, 0.0, 0.0);
        let anchor = pv(&[1.0]);
        let zero = ParamVector::zeros(1);
        let (x1, _) = fedspeed_local_step(&anchor, &anchor, &zero, &q, &[0], &step, ctx(0)).unwrap();
        assert!((x1[0] - 0.9).abs() < 1e-15);
        let (x2, _) = fedspeed_local_step(&x1, &anchor, &zero, &q, &[0], &step, ctx(1)).unwrap();
        assert!((x2[0] - 0.811).abs() < 1e-15);

        let g_hat = update_prox_correction(&zero, &x2, &anchor, 10.0).unwrap();
        assert!((g_hat[0] - 0.0189).abs() < 1e-15);
        let payload = client_payload(&x2, &g_hat, 10.0).unwrap();
        assert!((payload[0] - 0.622).abs() < 1e-14);
        // First round: payload = 2·x_K − x^t.
        assert!((payload[0] - (2.0 * x2[0] - anchor[0])).abs() < 1e-15);
    }

    #[test]
    fn ascent_hand_run() {
        let q = half_square();
        let x = pv(&[1.0]);
        let (x1, g_tilde) = fedspeed_local_step(
            &x,
            &x,
            &ParamVector::zeros(1),
            &q,
            &[0],
            &full(0.1, 10.0, 0.5, 1.0),
            ctx(0),
        )
        .unwrap();
        assert_eq!(g_tilde[0], 1.5);
        assert!((x1[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn normalized_mode_skips_vanishing_gradient() {
        let q = half_square();
        let x = ParamVector::zeros(1);
        let step = FedSpeedStep {
            rho_mode: RhoMode::Normalized,
            ..full(0.1, 10.0, 0.1, 1.0)
        };
        let (next, g_tilde) = fedspeed_local_step(&x, &x, &x, &q, &[0], &step, ctx(0)).unwrap();
        assert_eq!(g_tilde[0], 0.0);
        assert_eq!(next[0], 0.0);
    }

    #[test]
    fn unchanged_iterate_keeps_correction() {
        let g = pv(&[0.3, -0.2]);
        let x = pv(&[1.0, 2.0]);
        assert_eq!(update_prox_correction(&g, &x, &x, 5.0).unwrap(), g);
        assert_eq!(client_payload(&x, &ParamVector::zeros(2), 5.0).unwrap(), x);
    }

    #[test]
    fn overflow_reports_context() {
        let q = QuadraticObjective::new(DenseMatrix::diagonal(&[1e308]), ParamVector::zeros(1)).unwrap();
        let x = pv(&[10.0]);
        let err = fedspeed_local_step(
            &x,
            &x,
            &ParamVector::zeros(1),
            &q,
            &[0],
            &full(0.1, 10.0, 0.0, 0.0),
            StepContext {
                client: 3,
                round: 7,
                step: 2,
            },
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::NumericOverflow {
                client: 3,
                round: 7,
                step: 2
            }
        );
    }

    #[test]
    fn penalized_gradient_examples() {
        let q = QuadraticObjective::new(DenseMatrix::diagonal(&[1.0, 2.0]), ParamVector::zeros(2)).unwrap();
        let x = pv(&[1.0, 1.0]);
        let (quasi, exact) = penalized_gradient_probe(&q, &x, 0.1, 1.0).unwrap();
        for (v, want) in [(&quasi, [1.1, 2.4]), (&exact, [1.1, 2.4])] {
            assert!((v[0] - want[0]).abs() < 1e-15 && (v[1] - want[1]).abs() < 1e-15);
        }
        let (quasi, _) = penalized_gradient_probe(&q, &x, 0.3, 0.0).unwrap();
        assert_eq!(quasi, q.gradient(&x));
        let (quasi, exact) = penalized_gradient_probe(&q, &ParamVector::zeros(2), 5.0, 0.5).unwrap();
        assert_eq!(quasi.l2_norm(), 0.0);
        assert_eq!(exact.l2_norm(), 0.0);
    }

    #[test]
    fn penalized_gradient_rejects_non_quadratic() {
        let logistic = crate::objectives::LogisticObjective::new(1, vec![1.0], vec![1.0], 0.0).unwrap();
        assert!(matches!(
            penalized_gradient_probe(&logistic, &ParamVector::zeros(1), 0.1, 0.5),
            Err(Error::UnsupportedProbe(_))
        ));
    }
}
