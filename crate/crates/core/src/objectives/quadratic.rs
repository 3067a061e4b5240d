use alloc::vec::Vec;

use super::{check_eval_inputs, finish_grad, GradientOracle};
use crate::error::{Error, Result};
use crate::param::{dot, DenseMatrix, ParamVector};

/// `F(x) = ½ xᵀAx − bᵀx` with symmetric PSD `A`.
///
/// The shard holds a single notional sample, so every batch evaluates the
/// exact gradient `Ax − b`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: DenseMatrix,
    b: ParamVector,
}

impl QuadraticObjective {
    pub fn new(a: DenseMatrix, b: ParamVector) -> Result<Self> {
        if a.dim() != b.len() {
            return Err(Error::Dimension {
                expected: a.dim(),
                found: b.len(),
            });
        }
        if !a.is_symmetric() {
            return Err(Error::invalid("A", "quadratic form must be symmetric"));
        }
        Ok(Self { a, b })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn linear_term(&self) -> &ParamVector {
        &self.b
    }

    /// Exact gradient `Ax − b`.
    pub fn gradient(&self, x: &ParamVector) -> ParamVector {
        let ax = self.a.mul_vec(x.as_slice());
        ParamVector::from_vec_unchecked(ax.iter().zip(self.b.as_slice()).map(|(p, q)| p - q).collect())
    }

    /// Hessian-vector product `Av`.
    pub fn hessian_times(&self, v: &ParamVector) -> ParamVector {
        ParamVector::from_vec_unchecked(self.a.mul_vec(v.as_slice()))
    }

    /// Smoothness constant `λ_max(A)`.
    pub fn smoothness(&self) -> f64 {
        self.a.max_eigenvalue()
    }

    /// The stationary point `A⁻¹b` when `A` is positive definite.
    pub fn minimizer(&self) -> Result<ParamVector> {
        ParamVector::from_vec(self.a.solve_spd(self.b.as_slice())?)
    }

    pub fn value(&self, x: &ParamVector) -> f64 {
        let ax = self.a.mul_vec(x.as_slice());
        0.5 * dot(x.as_slice(), &ax) - dot(self.b.as_slice(), x.as_slice())
    }
}

impl GradientOracle for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn num_samples(&self) -> usize {
        1
    }

    fn eval(&self, params: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        check_eval_inputs(self.dim(), 1, params, batch)?;
        let ax = self.a.mul_vec(params.as_slice());
        let loss = 0.5 * dot(params.as_slice(), &ax) - dot(self.b.as_slice(), params.as_slice());
        let grad: Vec<f64> = ax.iter().zip(self.b.as_slice()).map(|(p, q)| p - q).collect();
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((loss, finish_grad(grad)?))
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_quadratic() {
        let q = QuadraticObjective::new(DenseMatrix::identity(2), ParamVector::zeros(2)).unwrap();
        let (loss, grad) = q.eval(&pv(&[1.0, 2.0]), &[0]).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(grad, pv(&[1.0, 2.0]));
    }

    #[test]
    fn diagonal_quadratic() {
        let q = QuadraticObjective::new(DenseMatrix::diagonal(&[1.0, 2.0]), ParamVector::zeros(2)).unwrap();
        let (_, grad) = q.eval(&pv(&[1.0, 1.0]), &[0]).unwrap();
        assert_eq!(grad, pv(&[1.0, 2.0]));
    }

    #[test]
    fn gradient_vanishes_at_minimizer() {
        let a = DenseMatrix::from_rows(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let q = QuadraticObjective::new(a, pv(&[1.0, -1.0])).unwrap();
        let x = q.minimizer().unwrap();
        let (_, grad) = q.eval(&x, &[0]).unwrap();
        assert!(grad.l2_norm() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DenseMatrix::from_rows(2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(
            QuadraticObjective::new(a, ParamVector::zeros(2)),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn rejects_bad_batch() {
        let q = QuadraticObjective::new(DenseMatrix::identity(1), ParamVector::zeros(1)).unwrap();
        assert!(q.eval(&pv(&[0.0]), &[]).is_err());
        assert!(q.eval(&pv(&[0.0]), &[1]).is_err());
        assert!(q.eval(&pv(&[0.0, 1.0]), &[0]).is_err());
    }
}
