//! FedSpeed and the baseline strategies.
//!
//! Every strategy runs through [`run_local_round`] on the client side and
//! [`apply_server_update`] on the server side, so the simulator treats them
//! uniformly.

use alloc::format;

use crate::error::{Error, Result};
use crate::param::ParamVector;

mod fedspeed;
mod gamma;
mod local;
mod server;

pub use fedspeed::{
    client_payload, fedspeed_local_step, penalized_gradient_probe, update_prox_correction, FedSpeedStep,
};
pub use gamma::{gamma_weights, GammaSchedule};
pub use local::{run_local_round, ClientTrace, LocalOutcome, StepContext};
pub use server::{aggregate, apply_server_update};

/// Length of each client's local stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalWork {
    /// Exactly `K` local steps on every client.
    Steps(usize),
    /// `E` passes over the shard: `K_i = E·⌈n_i/B⌉`.
    Epochs(usize),
}

/// How the ascent radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoMode {
    /// `x̆ = x + ρ·g`.
    Fixed,
    /// `ρ = ρ₀/‖g‖`, skipping the ascent when `‖g‖ < 1e-12`.
    #[default]
    Normalized,
}

/// Scalar knobs shared by all strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Local step size `η_l`; decayed per round by `lr_decay`.
    pub eta_l: f64,
    /// Prox denominator `λ` (the prox weight is `1/λ`).
    pub lambda: f64,
    /// Ascent step `ρ`, or `ρ₀` in normalized mode.
    pub rho: f64,
    pub rho_mode: RhoMode,
    /// Perturbation weight `α ∈ [0, 1]`.
    pub alpha: f64,
    pub local_work: LocalWork,
    pub rounds: usize,
    /// Participating clients per round.
    pub participants: usize,
    /// `None` means full-batch gradients.
    pub batch_size: Option<usize>,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta_l: 0.1,
            lambda: 10.0,
            rho: 0.1,
            rho_mode: RhoMode::Normalized,
            alpha: 0.9375,
            local_work: LocalWork::Steps(5),
            rounds: 100,
            participants: 1,
            batch_size: None,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, clients: usize) -> Result<()> {
        if !(self.eta_l > 0.0) || !self.eta_l.is_finite() {
            return Err(Error::invalid("eta_l", "must be positive"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", "must lie in [0, 1]"));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid("rho", "must be non-negative"));
        }
        match self.local_work {
            LocalWork::Steps(0) | LocalWork::Epochs(0) => {
                return Err(Error::invalid("local_steps", "need at least one local step"))
            }
            _ => {}
        }
        if self.participants == 0 || self.participants > clients {
            return Err(Error::invalid(
                "participants",
                format!("need 1 <= S <= m, got S = {} with m = {clients}", self.participants),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.lr_decay > 0.0) || !self.lr_decay.is_finite() {
            return Err(Error::invalid("lr_decay", "must be positive"));
        }
        Ok(())
    }

    /// Local steps for a client holding `samples` samples.
    pub fn local_steps(&self, samples: usize) -> usize {
        match self.local_work {
            LocalWork::Steps(k) => k,
            LocalWork::Epochs(e) => match self.batch_size {
                Some(b) if b < samples => e * samples.div_ceil(b),
                _ => e,
            },
        }
    }
}

/// FedAdam server optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub server_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        // First/second moment weights 0.1 and 0.01 on the new pseudo-gradient.
        Self {
            server_lr: 0.1,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
        }
    }
}

/// Strategy selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// With `fedavg_compat` the ascent, prox term and correction are all
    /// switched off and the payload is `x_K`, which must reproduce FedAvg
    /// bit for bit.
    FedSpeed {
        fedavg_compat: bool,
    },
    FedAvg,
    FedProx,
    FedAdam(AdamParams),
    Scaffold,
    /// `momentum` is the weight on the previous normalized global update.
    FedCm {
        momentum: f64,
    },
    FedDyn,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FedSpeed { .. } => "fedspeed",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedAdam(_) => "fedadam",
            Algorithm::Scaffold => "scaffold",
            Algorithm::FedCm { .. } => "fedcm",
            Algorithm::FedDyn => "feddyn",
        }
    }

    pub fn fedspeed() -> Self {
        Algorithm::FedSpeed { fedavg_compat: false }
    }
}

/// Persistent per-client state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    /// Prox-correction term `ĝ_i` for FedSpeed, or the dual state for FedDyn.
    pub g_hat: ParamVector,
    /// SCAFFOLD client control variate `c_i`.
    pub control: ParamVector,
}

impl ClientState {
    pub fn new(id: usize, dim: usize) -> Self {
        Self {
            id,
            g_hat: ParamVector::zeros(dim),
            control: ParamVector::zeros(dim),
        }
    }
}

/// Server-side state owned by specific strategies.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerExtras {
    None,
    Adam { m: ParamVector, v: ParamVector },
    Momentum { delta: ParamVector },
    Scaffold { control: ParamVector },
    Dyn { h: ParamVector },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub x: ParamVector,
    pub round: usize,
    /// Current (decayed) local step size.
    pub eta_l: f64,
    pub extras: ServerExtras,
}

impl ServerState {
    pub fn new(x0: ParamVector, algorithm: &Algorithm, hp: &HyperParams) -> Self {
        let d = x0.len();
        let extras = match algorithm {
            Algorithm::FedAdam(_) => ServerExtras::Adam {
                m: ParamVector::zeros(d),
                v: ParamVector::zeros(d),
            },
            Algorithm::FedCm { .. } => ServerExtras::Momentum {
                delta: ParamVector::zeros(d),
            },
            Algorithm::Scaffold => ServerExtras::Scaffold {
                control: ParamVector::zeros(d),
            },
            Algorithm::FedDyn => ServerExtras::Dyn {
                h: ParamVector::zeros(d),
            },
            _ => ServerExtras::None,
        };
        Self {
            x: x0,
            round: 0,
            eta_l: hp.eta_l,
            extras,
        }
    }
}
