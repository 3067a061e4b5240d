//! Identity-probe suites on randomized small instances.
//!
//! Each suite builds its instances from the `Verify` random stream, so a
//! given seed always checks the same problems.

use std::fmt;
use std::str::FromStr;

use fedspeed_core::algorithms::{penalized_gradient_probe, LocalWork, RhoMode};
use fedspeed_core::objectives::{
    finite_difference_check, Activation, GradientOracle, LogisticObjective, MlpObjective, QuadraticObjective,
};
use fedspeed_core::param::{DenseMatrix, ParamVector};
use fedspeed_core::rng::{Purpose, Stream};
use fedspeed_core::simulator::{
    correction_residual, local_offset_residual, relative_residual, u_update_residuals, virtual_sequence_residuals,
    z_update_residuals, RoundTrace, Sequential, SimulationConfig,
};
use fedspeed_core::{Algorithm, HyperParams, Simulation};

use crate::error::Result;

pub const TOL_LOCAL_OFFSET: f64 = 1e-9;
pub const TOL_CORRECTION: f64 = 1e-10;
pub const TOL_U_UPDATE: f64 = 1e-9;
pub const TOL_VIRTUAL_SEQUENCE: f64 = 1e-10;
pub const TOL_Z_UPDATE: f64 = 1e-9;
pub const TOL_PENALIZED_GRADIENT: f64 = 1e-12;
pub const TOL_GRADCHECK_QUADRATIC: f64 = 1e-9;
pub const TOL_GRADCHECK_LOGISTIC: f64 = 1e-5;
pub const TOL_GRADCHECK_MLP: f64 = 1e-4;

/// Randomized local-round configs checked by the offset and correction suites.
pub const OFFSET_CONFIGS: usize = 20;
/// Consecutive rounds traced by the sequence suites.
pub const SEQUENCE_ROUNDS: usize = 10;
pub const PENALIZED_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Eq2,
    Eq3,
    Eq4,
    Eq5,
    Sam,
    Gradcheck,
    All,
}

impl Suite {
    pub const INDIVIDUAL: [Suite; 6] = [
        Suite::Eq2,
        Suite::Eq3,
        Suite::Eq4,
        Suite::Eq5,
        Suite::Sam,
        Suite::Gradcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Eq2 => "eq2",
            Suite::Eq3 => "eq3",
            Suite::Eq4 => "eq4",
            Suite::Eq5 => "eq5",
            Suite::Sam => "sam",
            Suite::Gradcheck => "gradcheck",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::INDIVIDUAL
            .iter()
            .chain(&[Suite::All])
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (eq2|eq3|eq4|eq5|sam|gradcheck|all)"))
    }
}

/// One identity's worst residual against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub identity: &'static str,
    pub max_residual: f64,
    pub tolerance: f64,
    pub instances: usize,
}

impl Check {
    /// NaN residuals fail.
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<9} {:<20} max_residual={:.3e} tol={:.0e} instances={} {}",
            self.suite,
            self.identity,
            self.max_residual,
            self.tolerance,
            self.instances,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn stream(seed: u64, suite: u64, instance: u64) -> Stream {
    Stream::new(seed, Purpose::Verify, suite, instance)
}

fn normal_vec(s: &mut Stream, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * s.standard_normal()).collect()
}

/// `A = BᵀB/d + shift·I` with Gaussian `B`.
pub fn random_psd(s: &mut Stream, d: usize, shift: f64) -> DenseMatrix {
    let b = normal_vec(s, d * d, 1.0);
    let mut a = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..=r {
            let v: f64 = (0..d).map(|k| b[k * d + r] * b[k * d + c]).sum::<f64>() / d as f64;
            a[r * d + c] = v;
            a[c * d + r] = v;
        }
        a[r * d + r] += shift;
    }
    DenseMatrix::from_rows(d, a).expect("square by construction")
}

pub fn random_quadratic(s: &mut Stream, d: usize) -> QuadraticObjective {
    let a = random_psd(s, d, 0.1);
    let b = ParamVector::from_vec(normal_vec(s, d, 1.0)).expect("finite");
    QuadraticObjective::new(a, b).expect("symmetric by construction")
}

pub fn random_logistic(s: &mut Stream, d: usize, n: usize) -> LogisticObjective {
    let x = normal_vec(s, n * d, 1.0);
    let y = (0..n).map(|_| if s.uniform() < 0.5 { -1.0 } else { 1.0 }).collect();
    LogisticObjective::new(d, x, y, 1e-3).expect("valid by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OracleKind {
    Quadratic,
    Logistic,
}

struct ProbeInstance {
    clients: usize,
    local_steps: usize,
    dim: usize,
    oracle: OracleKind,
    ratio: f64,
}

/// Runs FedSpeed with tracing on random client objectives.
fn traced_run(seed: u64, suite: u64, id: u64, inst: &ProbeInstance, rounds: usize) -> Result<Vec<RoundTrace>> {
    let mut s = stream(seed, suite, id);
    let oracles: Vec<Box<dyn GradientOracle>> = (0..inst.clients)
        .map(|_| -> Box<dyn GradientOracle> {
            match inst.oracle {
                OracleKind::Quadratic => Box::new(random_quadratic(&mut s, inst.dim)),
                OracleKind::Logistic => Box::new(random_logistic(&mut s, inst.dim, 8)),
            }
        })
        .collect();
    let eta_l = 0.05;
    let fixed = s.uniform() < 0.5;
    let hp = HyperParams {
        eta_l,
        lambda: eta_l / inst.ratio,
        rho: s.uniform_range(0.0, 0.2),
        rho_mode: if fixed { RhoMode::Fixed } else { RhoMode::Normalized },
        alpha: s.uniform(),
        local_work: LocalWork::Steps(inst.local_steps),
        rounds,
        participants: inst.clients,
        batch_size: None,
        lr_decay: 1.0,
        seed: seed ^ id,
    };
    let x0 = ParamVector::from_vec(normal_vec(&mut s, inst.dim, 1.0))?;
    let config = SimulationConfig {
        algorithm: Algorithm::fedspeed(),
        hp,
        probes: true,
        metrics_every: Some(rounds.max(1)),
    };
    let mut sim = Simulation::new(config, oracles, x0, None)?;
    Ok(sim.run(&Sequential)?.traces)
}

fn offset_instances() -> Vec<ProbeInstance> {
    const M: [usize; 2] = [2, 4];
    const K: [usize; 3] = [1, 3, 8];
    const D: [usize; 2] = [1, 10];
    const R: [f64; 3] = [0.01, 0.5, 1.0];
    (0..OFFSET_CONFIGS)
        .map(|i| ProbeInstance {
            clients: M[i % 2],
            local_steps: K[i % 3],
            dim: D[(i / 3) % 2],
            oracle: if (i / 2) % 2 == 0 {
                OracleKind::Quadratic
            } else {
                OracleKind::Logistic
            },
            ratio: R[(i / 6) % 3],
        })
        .collect()
}

fn sequence_instances() -> Vec<ProbeInstance> {
    let mk = |clients, local_steps, dim, oracle, ratio| ProbeInstance {
        clients,
        local_steps,
        dim,
        oracle,
        ratio,
    };
    vec![
        mk(3, 8, 10, OracleKind::Logistic, 0.01),
        mk(3, 1, 10, OracleKind::Logistic, 0.5),
        mk(4, 3, 10, OracleKind::Quadratic, 0.1),
        mk(2, 8, 1, OracleKind::Quadratic, 0.5),
        mk(4, 5, 10, OracleKind::Logistic, 1.0),
    ]
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    // f64::max would drop NaN; keep it so it fails the tolerance.
    values
        .into_iter()
        .fold(0.0, |m, v| if v.is_nan() || v > m { v } else { m })
}

fn offset_suite(seed: u64, suite: Suite) -> Result<Vec<Check>> {
    let insts = offset_instances();
    let mut offset = Vec::new();
    let mut correction = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        for t in traced_run(seed, 1, i as u64, inst, 3)? {
            offset.push(local_offset_residual(&t)?);
            correction.push(correction_residual(&t)?);
        }
    }
    Ok(match suite {
        Suite::Eq2 => vec![Check {
            suite: "eq2",
            identity: "local_offset",
            max_residual: worst(offset),
            tolerance: TOL_LOCAL_OFFSET,
            instances: insts.len(),
        }],
        _ => vec![Check {
            suite: "eq3",
            identity: "correction_average",
            max_residual: worst(correction),
            tolerance: TOL_CORRECTION,
            instances: insts.len(),
        }],
    })
}

fn sequence_suite(seed: u64, suite: Suite) -> Result<Vec<Check>> {
    let insts = sequence_instances();
    let (mut u, mut v, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for (i, inst) in insts.iter().enumerate() {
        let traces = traced_run(seed, 2, i as u64, inst, SEQUENCE_ROUNDS)?;
        u.extend(u_update_residuals(&traces)?);
        v.extend(virtual_sequence_residuals(&traces)?);
        z.extend(z_update_residuals(&traces)?);
    }
    let n = insts.len();
    Ok(match suite {
        Suite::Eq4 => vec![
            Check {
                suite: "eq4",
                identity: "u_momentum_update",
                max_residual: worst(u),
                tolerance: TOL_U_UPDATE,
                instances: n,
            },
            Check {
                suite: "eq4",
                identity: "virtual_sequence",
                max_residual: worst(v),
                tolerance: TOL_VIRTUAL_SEQUENCE,
                instances: n,
            },
        ],
        _ => vec![Check {
            suite: "eq5",
            identity: "z_sgd_update",
            max_residual: worst(z),
            tolerance: TOL_Z_UPDATE,
            instances: n,
        }],
    })
}

fn penalized_suite(seed: u64) -> Result<Vec<Check>> {
    let mut res = Vec::with_capacity(PENALIZED_TRIALS);
    for trial in 0..PENALIZED_TRIALS {
        let mut s = stream(seed, 3, trial as u64);
        let d = 1 + trial % 20;
        let q = QuadraticObjective::new(
            random_psd(&mut s, d, 0.0),
            ParamVector::from_vec(normal_vec(&mut s, d, 1.0))?,
        )?;
        let x = ParamVector::from_vec(normal_vec(&mut s, d, 1.0))?;
        let rho = s.uniform_range(1e-3, 0.5);
        let alpha = s.uniform();
        let (quasi, exact) = penalized_gradient_probe(&q, &x, rho, alpha)?;
        res.push(relative_residual(&quasi, &exact));
    }
    Ok(vec![Check {
        suite: "sam",
        identity: "penalized_gradient",
        max_residual: worst(res),
        tolerance: TOL_PENALIZED_GRADIENT,
        instances: PENALIZED_TRIALS,
    }])
}

fn gradcheck_suite(seed: u64) -> Result<Vec<Check>> {
    const TRIALS: usize = 5;
    let (mut quad, mut logistic, mut mlp) = (Vec::new(), Vec::new(), Vec::new());
    for trial in 0..TRIALS {
        let mut s = stream(seed, 4, trial as u64);
        let d = 2 + 3 * trial;
        let x = ParamVector::from_vec(normal_vec(&mut s, d, 1.0))?;
        let q = random_quadratic(&mut s, d);
        quad.push(finite_difference_check(&q, &x, &[0], 1e-4)?);

        let l = random_logistic(&mut s, d, 12);
        let batch: Vec<usize> = (0..12).collect();
        logistic.push(finite_difference_check(&l, &x, &batch, 1e-6)?);

        let sizes = vec![d, 4, 3];
        let n = 10;
        let feats = normal_vec(&mut s, n * d, 1.0);
        let labels = (0..n).map(|i| i % 3).collect();
        let net = MlpObjective::new(sizes.clone(), Activation::Tanh, feats, labels, 1e-3)?;
        let w = ParamVector::from_vec(normal_vec(&mut s, MlpObjective::parameter_count(&sizes), 0.5))?;
        let batch: Vec<usize> = (0..n).collect();
        mlp.push(finite_difference_check(&net, &w, &batch, 1e-5)?);
    }
    let mk = |identity, r: Vec<f64>, tolerance| Check {
        suite: "gradcheck",
        identity,
        max_residual: worst(r),
        tolerance,
        instances: TRIALS,
    };
    Ok(vec![
        mk("quadratic", quad, TOL_GRADCHECK_QUADRATIC),
        mk("logistic", logistic, TOL_GRADCHECK_LOGISTIC),
        mk("mlp_tanh", mlp, TOL_GRADCHECK_MLP),
    ])
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Eq2 | Suite::Eq3 => offset_suite(seed, suite),
        Suite::Eq4 | Suite::Eq5 => sequence_suite(seed, suite),
        Suite::Sam => penalized_suite(seed),
        Suite::Gradcheck => gradcheck_suite(seed),
        Suite::All => {
            let mut all = Vec::new();
            for s in Suite::INDIVIDUAL {
                all.extend(run_suite(s, seed)?);
            }
            Ok(all)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for s in Suite::INDIVIDUAL.iter().chain(&[Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), *s);
        }
        assert!("eq6".parse::<Suite>().is_err());
    }

    #[test]
    fn offset_grid_covers_every_setting() {
        let insts = offset_instances();
        for m in [2, 4] {
            assert!(insts.iter().any(|i| i.clients == m));
        }
        for k in [1, 3, 8] {
            assert!(insts.iter().any(|i| i.local_steps == k));
        }
        for d in [1, 10] {
            assert!(insts.iter().any(|i| i.dim == d));
        }
        for r in [0.01, 0.5, 1.0] {
            assert!(insts.iter().any(|i| i.ratio == r));
        }
        assert!(insts.iter().any(|i| i.oracle == OracleKind::Logistic));
        assert!(insts.iter().any(|i| i.oracle == OracleKind::Quadratic));
    }

    #[test]
    fn nan_fails() {
        let c = Check {
            suite: "x",
            identity: "y",
            max_residual: worst([0.0, f64::NAN, 1.0]),
            tolerance: 1.0,
            instances: 1,
        };
        assert!(!c.passed());
    }
}
