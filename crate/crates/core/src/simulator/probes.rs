//! Closed-form identity checks over recorded FedSpeed rounds.
//!
//! Each check rebuilds a quantity from the recorded quasi-gradients using a
//! closed form (geometric weights, momentum recursions, auxiliary sequences)
//! and compares it with what the recursive algorithm actually produced.

use alloc::vec::Vec;

use crate::algorithms::{ClientTrace, GammaSchedule};
use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Everything recorded about one FedSpeed round under full participation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    /// Server model `x^t` at the start of the round.
    pub anchor: ParamVector,
    pub lambda: f64,
    pub gamma: GammaSchedule,
    /// One entry per client, ascending id.
    pub clients: Vec<ClientTrace>,
    /// Aggregated model `x^{t+1}`.
    pub next_x: ParamVector,
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_residual(a: &ParamVector, b: &ParamVector) -> f64 {
    let diff = crate::param::l2_norm(
        &a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x - y)
            .collect::<Vec<_>>(),
    );
    let scale = a.l2_norm().max(b.l2_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn weighted_sum(weights: &[f64], vectors: &[ParamVector], dim: usize) -> ParamVector {
    let mut acc = ParamVector::zeros(dim);
    for (w, v) in weights.iter().zip(vectors) {
        acc.add_scaled(*w, v);
    }
    acc
}

fn check_steps(trace: &RoundTrace, client: &ClientTrace) -> Result<()> {
    if client.g_tilde.len() != trace.gamma.local_steps() {
        return Err(Error::Probe(alloc::format!(
            "client {} recorded {} quasi-gradients, expected K = {}",
            client.client,
            client.g_tilde.len(),
            trace.gamma.local_steps()
        )));
    }
    Ok(())
}

/// Local offset closed form:
/// `Δ_i = −λ Σ_k γ_k g̃_{i,k} + γλ ĝ_i^{t−1}`. Returns the worst relative
/// residual over clients.
pub fn local_offset_residual(trace: &RoundTrace) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let d = trace.anchor.len();
    for c in &trace.clients {
        check_steps(trace, c)?;
        let mut predicted = weighted_sum(&trace.gamma.gamma_k, &c.g_tilde, d).scale(-trace.lambda)?;
        predicted.add_scaled(trace.gamma.gamma * trace.lambda, &c.g_hat_before);
        worst = worst.max(relative_residual(&c.delta, &predicted));
    }
    Ok(worst)
}

/// Exponential-average form of the correction update:
/// `ĝ_i^t = (1−γ) ĝ_i^{t−1} + Σ_k γ_k g̃_{i,k}`.
pub fn correction_residual(trace: &RoundTrace) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let d = trace.anchor.len();
    for c in &trace.clients {
        check_steps(trace, c)?;
        let mut predicted = weighted_sum(&trace.gamma.gamma_k, &c.g_tilde, d);
        predicted.add_scaled(1.0 - trace.gamma.gamma, &c.g_hat_before);
        worst = worst.max(relative_residual(&c.g_hat_after, &predicted));
    }
    Ok(worst)
}

fn check_sequence(traces: &[RoundTrace], min_len: usize) -> Result<()> {
    if traces.len() < min_len {
        return Err(Error::Probe(alloc::format!(
            "need at least {min_len} consecutive traced rounds, got {}",
            traces.len()
        )));
    }
    let first = &traces[0];
    for pair in traces.windows(2) {
        if pair[1].round != pair[0].round + 1 {
            return Err(Error::Probe(alloc::format!(
                "missing trace between rounds {} and {}",
                pair[0].round,
                pair[1].round
            )));
        }
    }
    for t in traces {
        if t.clients.is_empty() {
            return Err(Error::Probe("trace without clients".into()));
        }
        let same_clients = t.clients.len() == first.clients.len()
            && t.clients.iter().zip(&first.clients).all(|(a, b)| a.client == b.client);
        if !same_clients {
            return Err(Error::Probe(alloc::format!(
                "round {} does not have full participation",
                t.round
            )));
        }
        if t.gamma != first.gamma || t.lambda != first.lambda {
            return Err(Error::Probe(alloc::format!(
                "round {} changes gamma or lambda; disable learning-rate decay",
                t.round
            )));
        }
    }
    Ok(())
}

fn mean_of<'a>(vs: impl IntoIterator<Item = &'a ParamVector>) -> Result<ParamVector> {
    ParamVector::mean(vs)
}

/// `u^{t₀} … u^{t₀+T}`: `u^{t+1}` is the mean last local iterate of round `t`;
/// the first entry is `x^{t₀} + λ·mean ĝ^{t₀−1}` (which is `x^0` at the
/// start of training).
pub fn u_sequence(traces: &[RoundTrace]) -> Result<Vec<ParamVector>> {
    check_sequence(traces, 1)?;
    let first = &traces[0];
    let mut u0 = first.anchor.clone();
    u0.add_scaled(first.lambda, &mean_of(first.clients.iter().map(|c| &c.g_hat_before))?);
    let mut seq = Vec::with_capacity(traces.len() + 1);
    seq.push(u0);
    for t in traces {
        seq.push(mean_of(t.clients.iter().map(|c| &c.last_iterate))?);
    }
    Ok(seq)
}

/// `(1/m) Σ_i Σ_k (γ_k/γ) g̃_{i,k}` for one round.
fn mean_normalized_quasi_gradient(trace: &RoundTrace) -> Result<ParamVector> {
    let weights = trace.gamma.normalized()?;
    let d = trace.anchor.len();
    let per_client: Vec<ParamVector> = trace
        .clients
        .iter()
        .map(|c| {
            check_steps(trace, c)?;
            Ok(weighted_sum(&weights, &c.g_tilde, d))
        })
        .collect::<Result<_>>()?;
    mean_of(per_client.iter())
}

/// Momentum form of the virtual-sequence update:
/// `u^{t+1} = u^t − λ(1/m)Σ_i Σ_k (γ_k/γ)(γ g̃_{i,k} + (1−γ) ĝ_i^{t−1})`.
/// Residuals are normalized by `1 + ‖u^t‖`; one entry per round.
pub fn u_update_residuals(traces: &[RoundTrace]) -> Result<Vec<f64>> {
    let u = u_sequence(traces)?;
    let mut out = Vec::with_capacity(traces.len());
    for (t, trace) in traces.iter().enumerate() {
        let gamma = trace.gamma.gamma;
        let weights = trace.gamma.normalized()?;
        let d = trace.anchor.len();
        let mut step = ParamVector::zeros(d);
        for c in &trace.clients {
            check_steps(trace, c)?;
            for (w, g) in weights.iter().zip(&c.g_tilde) {
                step.add_scaled(w * gamma, g);
                step.add_scaled(w * (1.0 - gamma), &c.g_hat_before);
            }
        }
        let inv_m = 1.0 / trace.clients.len() as f64;
        let mut resid = u[t + 1].sub(&u[t])?;
        resid.add_scaled(trace.lambda * inv_m, &step);
        out.push(resid.l2_norm() / (1.0 + u[t].l2_norm()));
    }
    Ok(out)
}

/// Virtual local states `u_{i,k+1} = u_{i,k} − λ(γ_k/γ)(γ g̃_{i,k} + (1−γ)ĝ_i^{t−1})`
/// started from `u_{i,0} = u^t` must satisfy `ĝ_i^t = −(1/λ)(u_{i,K} − u_{i,0})`.
/// Returns the worst relative residual per round.
pub fn virtual_sequence_residuals(traces: &[RoundTrace]) -> Result<Vec<f64>> {
    let u = u_sequence(traces)?;
    let mut out = Vec::with_capacity(traces.len());
    for (t, trace) in traces.iter().enumerate() {
        let gamma = trace.gamma.gamma;
        let weights = trace.gamma.normalized()?;
        let mut worst: f64 = 0.0;
        for c in &trace.clients {
            check_steps(trace, c)?;
            let mut state = u[t].clone();
            for (w, g) in weights.iter().zip(&c.g_tilde) {
                state.add_scaled(-trace.lambda * w * gamma, g);
                state.add_scaled(-trace.lambda * w * (1.0 - gamma), &c.g_hat_before);
            }
            let implied = state.sub(&u[t])?.scale(-1.0 / trace.lambda)?;
            worst = worst.max(relative_residual(&c.g_hat_after, &implied));
        }
        out.push(worst);
    }
    Ok(out)
}

/// `z^t = u^t + ((1−γ)/γ)(u^t − u^{t−1})` for every traced `t > t₀`.
pub fn z_sequence(traces: &[RoundTrace]) -> Result<Vec<ParamVector>> {
    let u = u_sequence(traces)?;
    let gamma = traces[0].gamma.gamma;
    if gamma == 0.0 {
        return Err(Error::Probe("gamma vanishes; z sequence undefined".into()));
    }
    let c = (1.0 - gamma) / gamma;
    u.windows(2)
        .map(|w| {
            let mut z = w[1].clone();
            z.add_scaled(c, &w[1].sub(&w[0])?);
            Ok(z)
        })
        .collect()
}

/// SGD form of the auxiliary sequence:
/// `z^{t+1} = z^t − λ(1/m)Σ_i Σ_k (γ_k/γ) g̃_{i,k}^t`, normalized by
/// `1 + ‖z^t‖`. Needs at least two consecutive traced rounds; one residual
/// per pair.
pub fn z_update_residuals(traces: &[RoundTrace]) -> Result<Vec<f64>> {
    check_sequence(traces, 2)?;
    let z = z_sequence(traces)?;
    let mut out = Vec::with_capacity(traces.len() - 1);
    for t in 1..traces.len() {
        let (z_now, z_next) = (&z[t - 1], &z[t]);
        let mut resid = z_next.sub(z_now)?;
        resid.add_scaled(traces[t].lambda, &mean_normalized_quasi_gradient(&traces[t])?);
        out.push(resid.l2_norm() / (1.0 + z_now.l2_norm()));
    }
    Ok(out)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

/// Max residual of the z-sequence identity.
pub fn verify_z_sequence(traces: &[RoundTrace]) -> Result<f64> {
    Ok(max_of(&z_update_residuals(traces)?))
}

/// Max residual of the u-sequence momentum update.
pub fn verify_u_update(traces: &[RoundTrace]) -> Result<f64> {
    Ok(max_of(&u_update_residuals(traces)?))
}

/// Per-round residuals for every identity, plus maxima.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeReport {
    pub rounds: Vec<ProbeRound>,
    pub max_local_offset: f64,
    pub max_correction: f64,
    pub max_u_update: f64,
    pub max_virtual_sequence: f64,
    /// Absent when fewer than two rounds were traced.
    pub max_z_update: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRound {
    pub round: usize,
    pub local_offset: f64,
    pub correction: f64,
    pub u_update: f64,
    pub virtual_sequence: f64,
    /// Residual of the z step from this round to the next.
    pub z_update: Option<f64>,
    /// `‖∇F(z^{t+1})‖`, filled in by the simulator.
    pub grad_norm_z: Option<f64>,
}

pub fn probe_report(traces: &[RoundTrace]) -> Result<ProbeReport> {
    if traces.is_empty() {
        return Ok(ProbeReport::default());
    }
    let u = u_update_residuals(traces)?;
    let v = virtual_sequence_residuals(traces)?;
    let z = if traces.len() >= 2 {
        Some(z_update_residuals(traces)?)
    } else {
        None
    };
    let mut rounds = Vec::with_capacity(traces.len());
    for (t, trace) in traces.iter().enumerate() {
        rounds.push(ProbeRound {
            round: trace.round,
            local_offset: local_offset_residual(trace)?,
            correction: correction_residual(trace)?,
            u_update: u[t],
            virtual_sequence: v[t],
            z_update: z
                .as_ref()
                .and_then(|z| if t >= 1 { z.get(t - 1).copied() } else { None }),
            grad_norm_z: None,
        });
    }
    Ok(ProbeReport {
        max_local_offset: rounds.iter().map(|r| r.local_offset).fold(0.0, f64::max),
        max_correction: rounds.iter().map(|r| r.correction).fold(0.0, f64::max),
        max_u_update: max_of(&u),
        max_virtual_sequence: max_of(&v),
        max_z_update: z.as_deref().map(max_of),
        rounds,
    })
}
