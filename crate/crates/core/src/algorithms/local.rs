use alloc::vec::Vec;

use super::fedspeed::{client_payload, fedspeed_local_step, gradient, update_prox_correction, FedSpeedStep};
use super::{Algorithm, ClientState, HyperParams, ServerExtras, ServerState};
use crate::error::{Error, Result};
use crate::objectives::{GradientOracle, MinibatchSampler};
use crate::param::ParamVector;

/// Identifies a local step in error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepContext {
    pub client: usize,
    pub round: usize,
    pub step: usize,
}

/// Everything a FedSpeed client did in one round, for the identity probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientTrace {
    pub client: usize,
    /// `g̃_{i,k}` for `k = 0..K`.
    pub g_tilde: Vec<ParamVector>,
    pub last_iterate: ParamVector,
    /// `Δ_i = x_{i,K} − x^t`.
    pub delta: ParamVector,
    pub g_hat_before: ParamVector,
    pub g_hat_after: ParamVector,
    pub payload: ParamVector,
}

/// Result of one client's local stage. State updates are returned rather
/// than applied so the simulator can commit them serially.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub client: usize,
    pub payload: ParamVector,
    pub last_iterate: ParamVector,
    pub local_steps: usize,
    /// New `ĝ_i` (FedSpeed) or dual state (FedDyn).
    pub g_hat: Option<ParamVector>,
    /// New SCAFFOLD control variate and its change.
    pub control: Option<(ParamVector, ParamVector)>,
    /// `(x^t − x_{i,K})/(η_l K)` for FedCM's global momentum.
    pub normalized_update: Option<ParamVector>,
    pub trace: Option<ClientTrace>,
}

fn overflow(client: usize, round: usize, step: usize) -> Error {
    Error::NumericOverflow { client, round, step }
}

/// Runs `K` local steps of `algorithm` from the server model `x^t`.
///
/// Pure with respect to shared state: reads `client` and `server`, returns
/// the payload and proposed state. `record_trace` stores the FedSpeed
/// quasi-gradients for the identity probes.
pub fn run_local_round(
    client: &ClientState,
    oracle: &dyn GradientOracle,
    server: &ServerState,
    hp: &HyperParams,
    algorithm: &Algorithm,
    record_trace: bool,
) -> Result<LocalOutcome> {
    let samples = oracle.num_samples();
    if samples == 0 {
        return Err(Error::invalid("shard", "client shard is empty"));
    }
    let anchor = &server.x;
    let steps = hp.local_steps(samples);
    let eta = server.eta_l;
    let mut sampler = MinibatchSampler::new(samples, hp.batch_size, hp.seed, server.round, client.id);
    let ctx = |step| StepContext {
        client: client.id,
        round: server.round,
        step,
    };

    if let Algorithm::FedSpeed { fedavg_compat } = *algorithm {
        let step = if fedavg_compat {
            FedSpeedStep::sgd(eta, hp.lambda)
        } else {
            FedSpeedStep {
                eta_l: eta,
                lambda: hp.lambda,
                rho: hp.rho,
                rho_mode: hp.rho_mode,
                alpha: hp.alpha,
                prox: true,
                correction: true,
            }
        };
        let mut x = anchor.clone();
        let mut g_tildes = Vec::new();
        for k in 0..steps {
            let batch = sampler.batch(k);
            let (next, g_tilde) = fedspeed_local_step(&x, anchor, &client.g_hat, oracle, &batch, &step, ctx(k))?;
            x = next;
            if record_trace {
                g_tildes.push(g_tilde);
            }
        }
        if fedavg_compat {
            return Ok(LocalOutcome {
                client: client.id,
                payload: x.clone(),
                last_iterate: x,
                local_steps: steps,
                g_hat: None,
                control: None,
                normalized_update: None,
                trace: None,
            });
        }
        let g_hat = update_prox_correction(&client.g_hat, &x, anchor, hp.lambda)
            .map_err(|_| overflow(client.id, server.round, steps))?;
        let payload = client_payload(&x, &g_hat, hp.lambda).map_err(|_| overflow(client.id, server.round, steps))?;
        let trace = record_trace.then(|| ClientTrace {
            client: client.id,
            g_tilde: g_tildes,
            last_iterate: x.clone(),
            delta: ParamVector::from_vec_unchecked(
                x.as_slice().iter().zip(anchor.as_slice()).map(|(a, b)| a - b).collect(),
            ),
            g_hat_before: client.g_hat.clone(),
            g_hat_after: g_hat.clone(),
            payload: payload.clone(),
        });
        return Ok(LocalOutcome {
            client: client.id,
            payload,
            last_iterate: x,
            local_steps: steps,
            g_hat: Some(g_hat),
            control: None,
            normalized_update: None,
            trace,
        });
    }

    let inv_lambda = 1.0 / hp.lambda;
    let server_control = match &server.extras {
        ServerExtras::Scaffold { control } => Some(control),
        _ => None,
    };
    let momentum = match (&server.extras, algorithm) {
        (ServerExtras::Momentum { delta }, Algorithm::FedCm { momentum }) => Some((delta, *momentum)),
        _ => None,
    };

    let mut x = anchor.clone();
    for k in 0..steps {
        let batch = sampler.batch(k);
        let g = gradient(oracle, &x, &batch, ctx(k))?;
        let xs = x.as_slice();
        let next: Vec<f64> = (0..xs.len())
            .map(|j| {
                let dir = match algorithm {
                    Algorithm::FedProx => g[j] + inv_lambda * (xs[j] - anchor[j]),
                    Algorithm::FedDyn => g[j] - client.g_hat[j] + inv_lambda * (xs[j] - anchor[j]),
                    Algorithm::Scaffold => {
                        let c = server_control.map_or(0.0, |c| c[j]);
                        g[j] - client.control[j] + c
                    }
                    Algorithm::FedCm { .. } => match momentum {
                        Some((delta, a)) => (1.0 - a) * g[j] + a * delta[j],
                        None => g[j],
                    },
                    _ => g[j],
                };
                xs[j] - eta * dir
            })
            .collect();
        x = ParamVector::from_vec(next).map_err(|_| overflow(client.id, server.round, k))?;
    }

    let fail = |_| overflow(client.id, server.round, steps);
    let mut outcome = LocalOutcome {
        client: client.id,
        payload: x.clone(),
        last_iterate: x.clone(),
        local_steps: steps,
        g_hat: None,
        control: None,
        normalized_update: None,
        trace: None,
    };
    let scale = 1.0 / (steps as f64 * eta);
    match algorithm {
        Algorithm::Scaffold => {
            let c = server_control.cloned().unwrap_or_else(|| ParamVector::zeros(x.len()));
            let new_control = ParamVector::from_vec(
                (0..x.len())
                    .map(|j| client.control[j] - c[j] + scale * (anchor[j] - x[j]))
                    .collect(),
            )
            .map_err(fail)?;
            let change = new_control.sub(&client.control).map_err(fail)?;
            outcome.control = Some((new_control, change));
        }
        Algorithm::FedCm { .. } => {
            outcome.normalized_update =
                Some(ParamVector::from_vec((0..x.len()).map(|j| scale * (anchor[j] - x[j])).collect()).map_err(fail)?);
        }
        Algorithm::FedDyn => {
            outcome.g_hat = Some(update_prox_correction(&client.g_hat, &x, anchor, hp.lambda).map_err(fail)?);
        }
        _ => {}
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{LocalWork, RhoMode};
    use crate::objectives::QuadraticObjective;
    use crate::param::DenseMatrix;
    use alloc::vec;

    fn setup() -> (QuadraticObjective, HyperParams) {
        let a = DenseMatrix::from_rows(2, vec![1.5, 0.2, 0.2, 0.8]).unwrap();
        let q = QuadraticObjective::new(a, ParamVector::from_vec(vec![0.5, -1.0]).unwrap()).unwrap();
        let hp = HyperParams {
            eta_l: 0.1,
            lambda: 10.0,
            rho: 0.0,
            rho_mode: RhoMode::Fixed,
            alpha: 0.0,
            local_work: LocalWork::Steps(1),
            participants: 1,
            ..HyperParams::default()
        };
        (q, hp)
    }

    #[test]
    fn single_fedavg_step_is_sgd() {
        let (q, hp) = setup();
        let x0 = ParamVector::from_vec(vec![1.0, 1.0]).unwrap();
        let server = ServerState::new(x0.clone(), &Algorithm::FedAvg, &hp);
        let out = run_local_round(&ClientState::new(0, 2), &q, &server, &hp, &Algorithm::FedAvg, false).unwrap();
        let g = q.gradient(&x0);
        let expected = ParamVector::axpy(-0.1, &g, &x0).unwrap();
        assert_eq!(out.payload, expected);
    }

    #[test]
    fn fedspeed_one_dimensional_payload() {
        let q = QuadraticObjective::new(DenseMatrix::identity(1), ParamVector::zeros(1)).unwrap();
        let hp = HyperParams {
            eta_l: 0.1,
            lambda: 10.0,
            rho: 0.0,
            rho_mode: RhoMode::Fixed,
            alpha: 0.0,
            local_work: LocalWork::Steps(2),
            participants: 1,
            ..HyperParams::default()
        };
        let server = ServerState::new(ParamVector::from_vec(vec![1.0]).unwrap(), &Algorithm::fedspeed(), &hp);
        let out = run_local_round(&ClientState::new(0, 1), &q, &server, &hp, &Algorithm::fedspeed(), true).unwrap();
        assert!((out.payload[0] - 0.622).abs() < 1e-14);
        assert!((out.g_hat.as_ref().unwrap()[0] - 0.0189).abs() < 1e-15);
        let trace = out.trace.unwrap();
        assert_eq!(trace.g_tilde.len(), 2);
        assert!((trace.delta[0] + 0.189).abs() < 1e-15);
    }

    #[test]
    fn compat_matches_fedavg_bitwise() {
        let (q, mut hp) = setup();
        hp.local_work = LocalWork::Steps(7);
        hp.alpha = 0.9;
        hp.rho = 0.3;
        let x0 = ParamVector::from_vec(vec![-2.0, 3.0]).unwrap();
        let compat = Algorithm::FedSpeed { fedavg_compat: true };
        let s = ServerState::new(x0, &compat, &hp);
        let client = ClientState::new(0, 2);
        let a = run_local_round(&client, &q, &s, &hp, &compat, false).unwrap();
        let b = run_local_round(&client, &q, &s, &hp, &Algorithm::FedAvg, false).unwrap();
        assert_eq!(a.payload, b.payload);
    }

    #[test]
    fn scaffold_control_update() {
        let (q, mut hp) = setup();
        hp.local_work = LocalWork::Steps(3);
        let x0 = ParamVector::from_vec(vec![1.0, 0.0]).unwrap();
        let s = ServerState::new(x0.clone(), &Algorithm::Scaffold, &hp);
        let out = run_local_round(&ClientState::new(0, 2), &q, &s, &hp, &Algorithm::Scaffold, false).unwrap();
        let (c_new, change) = out.control.unwrap();
        // With zero controls, c_i⁺ = (x^t − x_K)/(Kη) and the change equals it.
        for j in 0..2 {
            let want = (x0[j] - out.last_iterate[j]) / (3.0 * 0.1);
            assert!((c_new[j] - want).abs() < 1e-14);
            assert_eq!(change[j], c_new[j]);
        }
    }
}
