//! Round-by-round federated simulation.
//!
//! A round samples participants, runs their local stages through a
//! [`ClientExecutor`] (possibly in parallel), then commits results serially
//! in ascending client-id order. Because every random draw comes from a
//! keyed stream and every reduction has a fixed order, the trajectory does
//! not depend on how the executor schedules clients.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::algorithms::{
    apply_server_update, gamma_weights, run_local_round, Algorithm, ClientState, HyperParams, LocalOutcome, ServerState,
};
use crate::error::{Error, Result};
use crate::objectives::GradientOracle;
use crate::param::ParamVector;
use crate::rng::{Purpose, Stream};

mod probes;

pub use probes::{
    correction_residual, local_offset_residual, probe_report, relative_residual, u_sequence, u_update_residuals,
    verify_u_update, verify_z_sequence, virtual_sequence_residuals, z_sequence, z_update_residuals, ProbeReport,
    ProbeRound, RoundTrace,
};

/// Uniformly samples `participants` distinct clients out of `clients`
/// without replacement, returned in ascending order.
pub fn sample_participants(clients: usize, participants: usize, round: usize, seed: u64) -> Result<Vec<usize>> {
    if participants == 0 || participants > clients {
        return Err(Error::invalid(
            "participants",
            alloc::format!("need 1 <= S <= m, got S = {participants} with m = {clients}"),
        ));
    }
    if participants == clients {
        return Ok((0..clients).collect());
    }
    let mut stream = Stream::new(seed, Purpose::Participants, round as u64, 0);
    let mut ids = rand::seq::index::sample(stream.rng(), clients, participants).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Runs client closures; implementations may use threads but must return
/// results in the order of `ids`.
pub trait ClientExecutor {
    fn map_clients<T, F>(&self, ids: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs clients one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ClientExecutor for Sequential {
    fn map_clients<T, F>(&self, ids: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        ids.iter().map(|&id| f(id)).collect()
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Completed rounds.
    pub round: usize,
    /// `F(x) = (1/m) Σ_i F_i(x)` over full shards.
    pub train_loss: f64,
    /// `‖∇F(x)‖`.
    pub grad_norm: f64,
    /// Accuracy for classifiers, otherwise distance to the reference
    /// optimum, otherwise the training loss.
    pub eval_metric: f64,
    pub dist_to_opt: Option<f64>,
    /// Wall-clock seconds; the core never reads a clock and leaves this 0.
    pub elapsed_s: f64,
}

/// Metrics are logged every round up to 500 rounds, otherwise every fifth,
/// and always after the final round.
pub fn metrics_cadence(rounds: usize) -> usize {
    if rounds <= 500 {
        1
    } else {
        5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub algorithm: Algorithm,
    pub hp: HyperParams,
    /// Record per-round traces for the identity probes.
    pub probes: bool,
    /// Metrics cadence; `None` uses [`metrics_cadence`].
    pub metrics_every: Option<usize>,
}

/// Output of a single round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub participants: Vec<usize>,
    pub metrics: Option<MetricsRow>,
    pub trace: Option<RoundTrace>,
}

/// Output of a complete run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub traces: Vec<RoundTrace>,
}

/// Full-objective evaluation at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad_norm: f64,
    pub accuracy: Option<f64>,
}

/// `x^0` drawn as `scale · N(0, I)` from the `Init` stream.
pub fn initial_point(dim: usize, scale: f64, seed: u64) -> Result<ParamVector> {
    let mut stream = Stream::new(seed, Purpose::Init, 0, 0);
    ParamVector::from_vec((0..dim).map(|_| scale * stream.standard_normal()).collect())
}

pub struct Simulation {
    config: SimulationConfig,
    oracles: Vec<Box<dyn GradientOracle>>,
    clients: Vec<ClientState>,
    server: ServerState,
    optimum: Option<ParamVector>,
}

impl core::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Simulation")
            .field("config", &self.config)
            .field("clients", &self.clients.len())
            .field("server", &self.server)
            .finish_non_exhaustive()
    }
}

impl Simulation {
    /// `optimum` is the reference `x*` used for `dist_to_opt`, when known.
    pub fn new(
        config: SimulationConfig,
        oracles: Vec<Box<dyn GradientOracle>>,
        x0: ParamVector,
        optimum: Option<ParamVector>,
    ) -> Result<Self> {
        let m = oracles.len();
        if m == 0 {
            return Err(Error::invalid("clients", "need at least one client"));
        }
        config.hp.validate(m)?;
        let dim = x0.len();
        for o in &oracles {
            if o.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: o.dim(),
                });
            }
            if o.num_samples() == 0 {
                return Err(Error::invalid("shard", "client shard is empty"));
            }
        }
        if let Some(opt) = &optimum {
            if opt.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: opt.len(),
                });
            }
        }
        if let Algorithm::FedCm { momentum } = config.algorithm {
            if !(0.0..=1.0).contains(&momentum) {
                return Err(Error::invalid("momentum", "must lie in [0, 1]"));
            }
        }
        if config.metrics_every == Some(0) {
            return Err(Error::invalid("metrics_every", "must be positive"));
        }
        if config.probes {
            check_probe_support(&config, &oracles)?;
        }
        let server = ServerState::new(x0, &config.algorithm, &config.hp);
        let clients = (0..m).map(|id| ClientState::new(id, dim)).collect();
        Ok(Self {
            config,
            oracles,
            clients,
            server,
            optimum,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn oracles(&self) -> &[Box<dyn GradientOracle>] {
        &self.oracles
    }

    pub fn optimum(&self) -> Option<&ParamVector> {
        self.optimum.as_ref()
    }

    pub fn num_clients(&self) -> usize {
        self.oracles.len()
    }

    /// `F(x)`, `‖∇F(x)‖` and, for classifiers, pooled accuracy.
    pub fn evaluate(&self, x: &ParamVector) -> Result<Evaluation> {
        let m = self.oracles.len() as f64;
        let mut loss = 0.0;
        let mut grad = ParamVector::zeros(x.len());
        let mut correct = 0usize;
        let mut total = 0usize;
        let mut classifier = true;
        for o in &self.oracles {
            let (l, g) = o.eval_full(x)?;
            loss += l;
            grad.add_scaled(1.0, &g);
            match o.correct_count(x) {
                Some(c) => {
                    correct += c;
                    total += o.num_samples();
                }
                None => classifier = false,
            }
        }
        let grad = grad.scale(1.0 / m)?;
        Ok(Evaluation {
            loss: loss / m,
            grad_norm: grad.l2_norm(),
            accuracy: (classifier && total > 0).then(|| correct as f64 / total as f64),
        })
    }

    /// `‖∇F(x)‖` alone.
    pub fn grad_norm(&self, x: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(x)?.grad_norm)
    }

    /// Metrics for the current server model.
    pub fn metrics(&self) -> Result<MetricsRow> {
        let x = &self.server.x;
        let eval = self.evaluate(x)?;
        let dist = match &self.optimum {
            Some(opt) => Some(x.sub(opt)?.l2_norm()),
            None => None,
        };
        Ok(MetricsRow {
            round: self.server.round,
            train_loss: eval.loss,
            grad_norm: eval.grad_norm,
            eval_metric: eval.accuracy.or(dist).unwrap_or(eval.loss),
            dist_to_opt: dist,
            elapsed_s: 0.0,
        })
    }

    fn should_log(&self, round: usize) -> bool {
        let total = self.config.hp.rounds;
        let every = self.config.metrics_every.unwrap_or_else(|| metrics_cadence(total));
        round > 0 && (round.is_multiple_of(every) || round == total)
    }

    /// Executes one communication round. On error no state is modified.
    pub fn run_round<E: ClientExecutor>(&mut self, executor: &E) -> Result<RoundOutput> {
        let hp = &self.config.hp;
        let round = self.server.round;
        let participants = sample_participants(self.oracles.len(), hp.participants, round, hp.seed)?;
        let record = self.config.probes;
        let outcomes: Vec<Result<LocalOutcome>> = {
            let (clients, oracles, server, alg) = (&self.clients, &self.oracles, &self.server, &self.config.algorithm);
            executor.map_clients(&participants, |id| {
                run_local_round(&clients[id], oracles[id].as_ref(), server, hp, alg, record)
            })
        };
        let mut outcomes: Vec<LocalOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
        outcomes.sort_by_key(|o| o.client);

        let anchor = self.server.x.clone();
        let eta = self.server.eta_l;
        let mut server = self.server.clone();
        apply_server_update(&mut server, &self.config.algorithm, &outcomes, self.oracles.len(), hp)?;
        if !server.x.is_finite() {
            return Err(Error::NumericOverflow {
                client: usize::MAX,
                round,
                step: 0,
            });
        }

        let trace = if record {
            let k = outcomes.first().map_or(0, |o| o.local_steps);
            Some(RoundTrace {
                round,
                anchor,
                lambda: hp.lambda,
                gamma: gamma_weights(eta, hp.lambda, k)?,
                clients: outcomes.iter_mut().filter_map(|o| o.trace.take()).collect(),
                next_x: server.x.clone(),
            })
        } else {
            None
        };

        self.server = server;
        for o in outcomes {
            let state = &mut self.clients[o.client];
            if let Some(g_hat) = o.g_hat {
                state.g_hat = g_hat;
            }
            if let Some((control, _)) = o.control {
                state.control = control;
            }
        }

        let metrics = if self.should_log(self.server.round) {
            Some(self.metrics()?)
        } else {
            None
        };
        Ok(RoundOutput {
            participants,
            metrics,
            trace,
        })
    }

    /// Runs the remaining rounds up to `hp.rounds`.
    pub fn run<E: ClientExecutor>(&mut self, executor: &E) -> Result<RunOutput> {
        let mut out = RunOutput::default();
        while self.server.round < self.config.hp.rounds {
            let r = self.run_round(executor)?;
            out.metrics.extend(r.metrics);
            out.traces.extend(r.trace);
        }
        Ok(out)
    }

    /// Identity-probe residuals for recorded traces, with `‖∇F(z^t)‖` filled
    /// in for each round.
    pub fn probe_report(&self, traces: &[RoundTrace]) -> Result<ProbeReport> {
        let mut report = probe_report(traces)?;
        if traces.is_empty() {
            return Ok(report);
        }
        let z = z_sequence(traces)?;
        for (entry, z_t) in report.rounds.iter_mut().zip(&z) {
            entry.grad_norm_z = Some(self.grad_norm(z_t)?);
        }
        Ok(report)
    }
}

fn check_probe_support(config: &SimulationConfig, oracles: &[Box<dyn GradientOracle>]) -> Result<()> {
    let hp = &config.hp;
    if config.algorithm != Algorithm::fedspeed() {
        return Err(Error::UnsupportedProbe("identity probes need FedSpeed"));
    }
    if hp.participants != oracles.len() {
        return Err(Error::UnsupportedProbe("identity probes need full participation"));
    }
    if hp.lr_decay != 1.0 {
        return Err(Error::UnsupportedProbe("identity probes need a constant learning rate"));
    }
    let k = hp.local_steps(oracles[0].num_samples());
    if oracles.iter().any(|o| hp.local_steps(o.num_samples()) != k) {
        return Err(Error::UnsupportedProbe(
            "identity probes need the same K on every client",
        ));
    }
    if gamma_weights(hp.eta_l, hp.lambda, k)?.gamma == 0.0 {
        return Err(Error::UnsupportedProbe("gamma vanishes for this eta_l, lambda and K"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{LocalWork, RhoMode};
    use crate::objectives::QuadraticObjective;
    use crate::param::DenseMatrix;
    use alloc::vec;

    fn quad(diag: &[f64], b: &[f64]) -> Box<dyn GradientOracle> {
        Box::new(
            QuadraticObjective::new(DenseMatrix::diagonal(diag), ParamVector::from_vec(b.to_vec()).unwrap()).unwrap(),
        )
    }

    fn config(algorithm: Algorithm, probes: bool) -> SimulationConfig {
        SimulationConfig {
            algorithm,
            hp: HyperParams {
                eta_l: 0.1,
                lambda: 2.0,
                rho: 0.05,
                rho_mode: RhoMode::Fixed,
                alpha: 0.5,
                local_work: LocalWork::Steps(4),
                rounds: 6,
                participants: 3,
                ..HyperParams::default()
            },
            probes,
            metrics_every: None,
        }
    }

    fn sim(algorithm: Algorithm, probes: bool) -> Simulation {
        let oracles = vec![
            quad(&[1.0, 2.0], &[1.0, 0.0]),
            quad(&[0.5, 1.0], &[-1.0, 2.0]),
            quad(&[2.0, 0.7], &[0.3, -0.4]),
        ];
        let x0 = ParamVector::from_vec(vec![1.0, -1.0]).unwrap();
        Simulation::new(config(algorithm, probes), oracles, x0, None).unwrap()
    }

    #[test]
    fn participants_are_sorted_distinct_and_keyed() {
        let a = sample_participants(100, 10, 3, 7).unwrap();
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_participants(100, 10, 3, 7).unwrap());
        assert_ne!(a, sample_participants(100, 10, 4, 7).unwrap());
        assert_eq!(sample_participants(4, 4, 0, 0).unwrap(), vec![0, 1, 2, 3]);
        assert!(sample_participants(4, 5, 0, 0).is_err());
        assert!(sample_participants(4, 0, 0, 0).is_err());
    }

    #[test]
    fn cadence_rule() {
        assert_eq!(metrics_cadence(500), 1);
        assert_eq!(metrics_cadence(501), 5);
    }

    #[test]
    fn run_logs_every_round_and_traces() {
        let mut s = sim(Algorithm::fedspeed(), true);
        let out = s.run(&Sequential).unwrap();
        assert_eq!(out.metrics.len(), 6);
        assert_eq!(out.metrics.last().unwrap().round, 6);
        assert_eq!(out.traces.len(), 6);
        let report = s.probe_report(&out.traces).unwrap();
        assert!(report.max_local_offset < 1e-10, "{report:?}");
        assert!(report.max_correction < 1e-10);
        assert!(report.max_u_update < 1e-10);
        assert!(report.max_virtual_sequence < 1e-10);
        assert!(report.max_z_update.unwrap() < 1e-10);
        assert!(report.rounds.iter().all(|r| r.grad_norm_z.is_some()));
    }

    #[test]
    fn single_trace_skips_z_check() {
        let mut s = sim(Algorithm::fedspeed(), true);
        let r = s.run_round(&Sequential).unwrap();
        let report = s.probe_report(&[r.trace.unwrap()]).unwrap();
        assert!(report.max_z_update.is_none());
        assert!(verify_z_sequence(&[]).is_err());
    }

    #[test]
    fn probes_reject_unsupported_settings() {
        let oracles = || vec![quad(&[1.0], &[0.0]), quad(&[2.0], &[1.0])];
        let x0 = ParamVector::zeros(1);
        let mut c = config(Algorithm::fedspeed(), true);
        c.hp.participants = 1;
        assert!(matches!(
            Simulation::new(c.clone(), oracles(), x0.clone(), None),
            Err(Error::UnsupportedProbe(_))
        ));
        c.hp.participants = 2;
        c.hp.lr_decay = 0.99;
        assert!(Simulation::new(c.clone(), oracles(), x0.clone(), None).is_err());
        c.hp.lr_decay = 1.0;
        c.algorithm = Algorithm::FedAvg;
        assert!(Simulation::new(c.clone(), oracles(), x0.clone(), None).is_err());
        c.algorithm = Algorithm::fedspeed();
        c.hp.eta_l = 4.0;
        c.hp.local_work = LocalWork::Steps(2);
        assert!(Simulation::new(c, oracles(), x0, None).is_err());
    }

    #[test]
    fn failed_round_leaves_state_untouched() {
        let oracles = vec![quad(&[1e200], &[0.0])];
        let mut c = config(Algorithm::FedAvg, false);
        c.hp.participants = 1;
        c.hp.eta_l = 1e200;
        let mut s = Simulation::new(c, oracles, ParamVector::from_vec(vec![1e200]).unwrap(), None).unwrap();
        let before = s.server().clone();
        let err = s.run_round(&Sequential).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { round: 0, .. }), "{err:?}");
        assert_eq!(s.server(), &before);
    }

    #[test]
    fn all_strategies_run() {
        for alg in [
            Algorithm::fedspeed(),
            Algorithm::FedAvg,
            Algorithm::FedProx,
            Algorithm::FedAdam(Default::default()),
            Algorithm::Scaffold,
            Algorithm::FedCm { momentum: 0.1 },
            Algorithm::FedDyn,
        ] {
            let mut s = sim(alg, false);
            let start = s.metrics().unwrap().train_loss;
            let out = s.run(&Sequential).unwrap();
            assert!(out.metrics.last().unwrap().train_loss < start, "{}", alg.name());
        }
    }
}
