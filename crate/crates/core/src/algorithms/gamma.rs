use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Geometric weights of the local offset closed form:
/// `γ_k = r(1−r)^{K−1−k}` and `γ = Σ_k γ_k = 1 − (1−r)^K` with `r = η_l/λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSchedule {
    pub gamma: f64,
    pub gamma_k: Vec<f64>,
}

impl GammaSchedule {
    pub fn local_steps(&self) -> usize {
        self.gamma_k.len()
    }

    /// Normalized weights `γ_k/γ`. Fails when `γ` vanishes (`η_l = 2λ` with
    /// even `K`), where the normalized identities are undefined.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        if self.gamma == 0.0 {
            return Err(Error::Probe("gamma vanishes; normalized weights undefined".into()));
        }
        Ok(self.gamma_k.iter().map(|w| w / self.gamma).collect())
    }
}

pub fn gamma_weights(eta_l: f64, lambda: f64, local_steps: usize) -> Result<GammaSchedule> {
    if !(eta_l > 0.0) {
        return Err(Error::invalid("eta_l", "must be positive"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    if eta_l > 2.0 * lambda {
        return Err(Error::invalid("eta_l", "must not exceed 2·lambda"));
    }
    if local_steps == 0 {
        return Err(Error::invalid("local_steps", "need at least one local step"));
    }
    let ratio = eta_l / lambda;
    let keep = 1.0 - ratio;
    let mut gamma_k = alloc::vec![0.0; local_steps];
    let mut w = ratio;
    let mut decay = 1.0;
    for k in (0..local_steps).rev() {
        gamma_k[k] = w;
        w *= keep;
        decay *= keep;
    }
    Ok(GammaSchedule {
        gamma: 1.0 - decay,
        gamma_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_ratio_two_steps() {
        let s = gamma_weights(0.5, 1.0, 2).unwrap();
        assert_eq!(s.gamma, 0.75);
        assert_eq!(s.gamma_k, alloc::vec![0.25, 0.5]);
    }

    #[test]
    fn unit_ratio_keeps_only_last_step() {
        for k in 1..6 {
            let s = gamma_weights(2.0, 2.0, k).unwrap();
            assert_eq!(s.gamma, 1.0);
            assert_eq!(s.gamma_k[k - 1], 1.0);
            assert!(s.gamma_k[..k - 1].iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn matches_iterative_product_oracle() {
        // Oracle: γ_k as an explicit product of (1 − r) factors.
        let (eta, lambda, k) = (0.1, 10.0, 5);
        let r: f64 = eta / lambda;
        let oracle = |j: usize| (0..(k - 1 - j)).fold(r, |acc, _| acc * (1.0 - r));
        let s = gamma_weights(eta, lambda, k).unwrap();
        assert!((s.gamma - 0.0490099501).abs() < 1e-15);
        assert!((s.gamma_k[0] - 0.0096059601).abs() < 1e-15);
        assert!((s.gamma_k[4] - 0.01).abs() < 1e-15);
        for j in 0..k {
            assert!((s.gamma_k[j] - oracle(j)).abs() < 1e-17);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(gamma_weights(0.0, 1.0, 3).is_err());
        assert!(gamma_weights(0.1, 0.0, 3).is_err());
        assert!(gamma_weights(2.1, 1.0, 3).is_err());
        assert!(gamma_weights(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn vanishing_gamma_is_reported() {
        let s = gamma_weights(2.0, 1.0, 2).unwrap();
        assert_eq!(s.gamma, 0.0);
        assert!(s.normalized().is_err());
    }
}
