//! Deterministic federated optimization core.
//!
//! Implements the FedSpeed local procedure (prox-corrected local SGD with a
//! sharpness-style quasi-gradient) together with FedAvg, FedProx, FedAdam,
//! SCAFFOLD, FedCM and FedDyn behind a single round interface, plus the
//! objectives, data partitioners and closed-form identity probes used to
//! check the method.
//!
//! The crate is `no_std` and only needs `alloc`. All transcendental math goes
//! through [`libm`] and all randomness through keyed ChaCha8 streams, so a
//! `(config, seed)` pair yields bit-identical results on every platform.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algorithms;
pub mod error;
pub mod objectives;
pub mod param;
pub mod partition;
pub mod rng;
pub mod simulator;

pub use algorithms::{
    AdamParams, Algorithm, ClientState, GammaSchedule, HyperParams, LocalWork, RhoMode, ServerExtras, ServerState,
};
pub use error::{Error, Result};
pub use objectives::GradientOracle;
pub use param::ParamVector;
pub use partition::{Dataset, Partition};
pub use simulator::{MetricsRow, RoundTrace, Simulation};
