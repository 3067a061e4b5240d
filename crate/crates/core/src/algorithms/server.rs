use alloc::vec::Vec;

use super::{Algorithm, HyperParams, LocalOutcome, ServerExtras, ServerState};
use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Mean of client payloads, summed in ascending client-id order regardless
/// of input order.
pub fn aggregate(payloads: &[(usize, ParamVector)]) -> Result<ParamVector> {
    if payloads.is_empty() {
        return Err(Error::invalid("payloads", "cannot aggregate zero payloads"));
    }
    let mut order: Vec<&(usize, ParamVector)> = payloads.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    ParamVector::mean(order.into_iter().map(|(_, p)| p))
}

fn mean_of<F>(outcomes: &[LocalOutcome], pick: F) -> Result<ParamVector>
where
    F: Fn(&LocalOutcome) -> &ParamVector,
{
    let pairs: Vec<(usize, ParamVector)> = outcomes.iter().map(|o| (o.client, pick(o).clone())).collect();
    aggregate(&pairs)
}

/// Server step for one round: aggregates the participants' payloads into
/// `x^{t+1}`, updates strategy-owned server state, advances the round and
/// decays the local step size.
pub fn apply_server_update(
    server: &mut ServerState,
    algorithm: &Algorithm,
    outcomes: &[LocalOutcome],
    total_clients: usize,
    hp: &HyperParams,
) -> Result<()> {
    let numeric = |_| Error::NonFinite("server update");
    let mean_payload = mean_of(outcomes, |o| &o.payload)?;
    let d = server.x.len();
    let x_old = server.x.clone();
    let next = match (algorithm, &mut server.extras) {
        (Algorithm::FedAdam(adam), ServerExtras::Adam { m, v }) => {
            let mut next = Vec::with_capacity(d);
            let (mv, vv) = (m.as_mut_slice(), v.as_mut_slice());
            for j in 0..d {
                let delta = mean_payload[j] - x_old[j];
                mv[j] = adam.beta1 * mv[j] + (1.0 - adam.beta1) * delta;
                vv[j] = adam.beta2 * vv[j] + (1.0 - adam.beta2) * delta * delta;
                next.push(x_old[j] + adam.server_lr * mv[j] / (libm::sqrt(vv[j]) + adam.tau));
            }
            ParamVector::from_vec(next).map_err(numeric)?
        }
        (Algorithm::Scaffold, ServerExtras::Scaffold { control }) => {
            let scale = 1.0 / total_clients as f64;
            for o in outcomes {
                if let Some((_, change)) = &o.control {
                    control.add_scaled(scale, change);
                }
            }
            if !control.is_finite() {
                return Err(Error::NonFinite("server control"));
            }
            mean_payload
        }
        (Algorithm::FedCm { .. }, ServerExtras::Momentum { delta }) => {
            let updates: Vec<(usize, ParamVector)> = outcomes
                .iter()
                .filter_map(|o| o.normalized_update.clone().map(|u| (o.client, u)))
                .collect();
            *delta = aggregate(&updates)?;
            mean_payload
        }
        (Algorithm::FedDyn, ServerExtras::Dyn { h }) => {
            let scale = 1.0 / (hp.lambda * total_clients as f64);
            for o in outcomes {
                for j in 0..d {
                    h.as_mut_slice()[j] -= scale * (o.last_iterate[j] - x_old[j]);
                }
            }
            if !h.is_finite() {
                return Err(Error::NonFinite("server dual state"));
            }
            ParamVector::axpy(-hp.lambda, h, &mean_payload).map_err(numeric)?
        }
        _ => mean_payload,
    };
    server.x = next;
    server.round += 1;
    server.eta_l *= hp.lr_decay;
    Ok(())
}
