use alloc::vec;
use alloc::vec::Vec;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::objectives::LeastSquaresObjective;
use crate::param::{DenseMatrix, ParamVector};
use crate::rng::{Purpose, Stream};

/// One client's regression data; `features` is row-major `n × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqShard {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl LsqShard {
    pub fn objective(&self, dim: usize, l2_weight: f64) -> Result<LeastSquaresObjective> {
        LeastSquaresObjective::new(dim, self.features.clone(), self.targets.clone(), l2_weight)
    }
}

/// Heterogeneous least-squares federation with known structure.
#[derive(Debug, Clone)]
pub struct SyntheticLsq {
    pub dim: usize,
    pub shards: Vec<LsqShard>,
    /// Centre of the planted local optima; their mean equals this point.
    pub center: ParamVector,
    /// Planted optimum `center + drift·v_i` of each client (exact local
    /// minimizer when `noise == 0`).
    pub local_optima: Vec<ParamVector>,
    /// Minimizer of the averaged objective `(1/m)Σ F_i`, solved in closed form.
    pub global_optimum: ParamVector,
}

/// Builds `clients` least-squares shards whose planted optima are
/// `center + drift·v_i` with `Σ v_i = 0` and `E‖v_i‖² ≈ 1`.
///
/// Each client also scales its feature coordinates by its own factors drawn
/// from `[0.5, 1.5]`, so local curvatures differ and plain local SGD drifts
/// away from the global optimum.
pub fn synthetic_heterogeneous_lsq(
    clients: usize,
    dim: usize,
    samples_per_client: &[usize],
    drift: f64,
    noise: f64,
    seed: u64,
) -> Result<SyntheticLsq> {
    if clients == 0 || dim == 0 {
        return Err(Error::invalid("clients", "need at least one client and dimension"));
    }
    if samples_per_client.len() != clients {
        return Err(Error::Dimension {
            expected: clients,
            found: samples_per_client.len(),
        });
    }
    if samples_per_client.contains(&0) {
        return Err(Error::invalid("samples_per_client", "every shard must be non-empty"));
    }
    if !(drift >= 0.0) || !(noise >= 0.0) {
        return Err(Error::invalid("drift", "drift and noise must be non-negative"));
    }

    let mut s = Stream::new(seed, Purpose::SyntheticData, 0, 0);
    let center: Vec<f64> = (0..dim).map(|_| s.standard_normal()).collect();

    let scale = 1.0 / libm::sqrt(dim as f64);
    let mut offsets: Vec<Vec<f64>> = (0..clients)
        .map(|i| {
            let mut s = Stream::new(seed, Purpose::SyntheticData, 1, i as u64);
            (0..dim).map(|_| scale * s.standard_normal()).collect()
        })
        .collect();
    if clients > 1 {
        for j in 0..dim {
            let mean = offsets.iter().map(|v| v[j]).sum::<f64>() / clients as f64;
            offsets.iter_mut().for_each(|v| v[j] -= mean);
        }
    } else {
        offsets[0].iter_mut().for_each(|v| *v = 0.0);
    }

    let mut shards = Vec::with_capacity(clients);
    let mut local_optima = Vec::with_capacity(clients);
    let mut h_sum = vec![0.0; dim * dim];
    let mut c_sum = vec![0.0; dim];
    for (i, (v, &n)) in offsets.iter().zip(samples_per_client).enumerate() {
        let optimum: Vec<f64> = center.iter().zip(v).map(|(c, vj)| c + drift * vj).collect();
        let mut s = Stream::new(seed, Purpose::SyntheticData, 2, i as u64);
        let coord_scale: Vec<f64> = (0..dim).map(|_| s.uniform_range(0.5, 1.5)).collect();
        let mut features = Vec::with_capacity(n * dim);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = coord_scale.iter().map(|sc| sc * s.standard_normal()).collect();
            let y = row.iter().zip(&optimum).map(|(a, x)| a * x).sum::<f64>() + noise * s.standard_normal();
            features.extend_from_slice(&row);
            targets.push(y);
        }
        let shard = LsqShard { features, targets };
        let (h, c) = shard.objective(dim, 0.0)?.normal_equations();
        h_sum.iter_mut().zip(&h).for_each(|(a, b)| *a += b);
        c_sum.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
        shards.push(shard);
        local_optima.push(ParamVector::from_vec(optimum)?);
    }
    // Symmetrize against rounding before the Cholesky solve.
    for r in 0..dim {
        for c in 0..r {
            let avg = 0.5 * (h_sum[r * dim + c] + h_sum[c * dim + r]);
            h_sum[r * dim + c] = avg;
            h_sum[c * dim + r] = avg;
        }
    }
    let global = DenseMatrix::from_rows(dim, h_sum)?.solve_spd(&c_sum)?;

    Ok(SyntheticLsq {
        dim,
        shards,
        center: ParamVector::from_vec(center)?,
        local_optima,
        global_optimum: ParamVector::from_vec(global)?,
    })
}

/// Gaussian class clusters: sample `i` has label `i mod classes` and features
/// `separation·μ_label + N(0, I)` with `μ_c ~ N(0, I/dim)`.
pub fn synthetic_classification(
    samples: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || dim == 0 {
        return Err(Error::invalid("classes", "need at least one class and dimension"));
    }
    let scale = 1.0 / libm::sqrt(dim as f64);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut s = Stream::new(seed, Purpose::SyntheticData, 3, c as u64);
            (0..dim).map(|_| scale * s.standard_normal()).collect()
        })
        .collect();
    let mut s = Stream::new(seed, Purpose::SyntheticData, 4, 0);
    let mut features = Vec::with_capacity(samples * dim);
    let labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
    for &y in &labels {
        for mu in &means[y] {
            features.push(separation * mu + s.standard_normal());
        }
    }
    Dataset::new(features, dim, labels, classes, Provenance::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::GradientOracle;

    #[test]
    fn homogeneous_case_has_equal_optima() {
        let lsq = synthetic_heterogeneous_lsq(3, 4, &[10, 10, 10], 0.0, 0.0, 1).unwrap();
        for opt in &lsq.local_optima {
            assert_eq!(opt, &lsq.center);
        }
        let dist = lsq.global_optimum.sub(&lsq.center).unwrap().l2_norm();
        assert!(dist < 1e-10, "{dist}");
    }

    #[test]
    fn drift_keeps_mean_optimum_at_center() {
        let lsq = synthetic_heterogeneous_lsq(5, 6, &[12; 5], 1.0, 0.0, 2).unwrap();
        let mean = ParamVector::mean(lsq.local_optima.iter()).unwrap();
        assert!(mean.sub(&lsq.center).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn drifted_optima_are_distinct() {
        let lsq = synthetic_heterogeneous_lsq(4, 2, &[8; 4], 1.0, 0.0, 3).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                let d = lsq.local_optima[i].sub(&lsq.local_optima[j]).unwrap().l2_norm();
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn planted_optimum_is_local_minimizer_without_noise() {
        let lsq = synthetic_heterogeneous_lsq(2, 3, &[9, 9], 1.0, 0.0, 4).unwrap();
        for (shard, opt) in lsq.shards.iter().zip(&lsq.local_optima) {
            let (_, g) = shard.objective(3, 0.0).unwrap().eval_full(opt).unwrap();
            assert!(g.l2_norm() < 1e-12);
        }
    }

    #[test]
    fn global_optimum_zeroes_averaged_gradient() {
        let lsq = synthetic_heterogeneous_lsq(4, 5, &[10, 20, 7, 12], 1.0, 0.1, 5).unwrap();
        let mut total = ParamVector::zeros(5);
        for shard in &lsq.shards {
            let (_, g) = shard.objective(5, 0.0).unwrap().eval_full(&lsq.global_optimum).unwrap();
            total.add_scaled(0.25, &g);
        }
        assert!(total.l2_norm() < 1e-12, "{}", total.l2_norm());
    }

    #[test]
    fn classification_is_balanced() {
        let ds = synthetic_classification(30, 4, 3, 2.0, 0).unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.labels.iter().filter(|&&y| y == 2).count(), 10);
    }
}
