use fedspeed_core::algorithms::{Algorithm, HyperParams, LocalWork, RhoMode};
use fedspeed_core::objectives::{GradientOracle, QuadraticObjective};
use fedspeed_core::param::{DenseMatrix, ParamVector};
use fedspeed_core::partition::synthetic_heterogeneous_lsq;
use fedspeed_core::simulator::{sample_participants, Sequential, SimulationConfig};
use fedspeed_core::Simulation;

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::from_vec(v).unwrap()
}

fn half_square() -> Box<dyn GradientOracle> {
    Box::new(QuadraticObjective::new(DenseMatrix::identity(1), ParamVector::zeros(1)).unwrap())
}

fn config(algorithm: Algorithm, hp: HyperParams) -> SimulationConfig {
    SimulationConfig {
        algorithm,
        hp,
        probes: false,
        metrics_every: None,
    }
}

#[test]
fn one_client_hand_run() {
    // F = x²/2, x⁰ = 1, η = 0.1, λ = 10, ρ = α = 0, K = 2:
    // x_K = 0.811, ĝ = 0.0189, payload = x_K − λĝ = 0.622.
    let hp = HyperParams {
        eta_l: 0.1,
        lambda: 10.0,
        rho: 0.0,
        rho_mode: RhoMode::Fixed,
        alpha: 0.0,
        local_work: LocalWork::Steps(2),
        rounds: 1,
        participants: 1,
        ..HyperParams::default()
    };
    let mut sim = Simulation::new(
        config(Algorithm::fedspeed(), hp),
        vec![half_square()],
        pv(vec![1.0]),
        None,
    )
    .unwrap();
    sim.run_round(&Sequential).unwrap();
    assert!((sim.server().x[0] - 0.622).abs() < 1e-12, "{}", sim.server().x[0]);
    assert!((sim.clients()[0].g_hat[0] - 0.0189).abs() < 1e-12);
}

#[test]
fn stationary_start_is_a_fixed_point() {
    for algorithm in [
        Algorithm::fedspeed(),
        Algorithm::FedAvg,
        Algorithm::FedProx,
        Algorithm::Scaffold,
        Algorithm::FedDyn,
    ] {
        let hp = HyperParams {
            participants: 3,
            rounds: 3,
            ..HyperParams::default()
        };
        let oracles = (0..3).map(|_| half_square()).collect();
        let mut sim = Simulation::new(config(algorithm, hp), oracles, pv(vec![0.0]), None).unwrap();
        for _ in 0..3 {
            sim.run_round(&Sequential).unwrap();
        }
        assert_eq!(sim.server().x[0], 0.0, "{}", algorithm.name());
        assert!(sim.clients().iter().all(|c| c.g_hat[0] == 0.0));
    }
}

#[test]
fn identical_clients_agree() {
    let hp = HyperParams {
        participants: 2,
        rounds: 1,
        ..HyperParams::default()
    };
    let quad = || -> Box<dyn GradientOracle> {
        let a = DenseMatrix::from_rows(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        Box::new(QuadraticObjective::new(a, pv(vec![1.0, -1.0])).unwrap())
    };
    let mut two = Simulation::new(
        config(Algorithm::fedspeed(), hp.clone()),
        vec![quad(), quad()],
        pv(vec![0.3, 0.7]),
        None,
    )
    .unwrap();
    let mut one = Simulation::new(
        config(Algorithm::fedspeed(), HyperParams { participants: 1, ..hp }),
        vec![quad()],
        pv(vec![0.3, 0.7]),
        None,
    )
    .unwrap();
    two.run_round(&Sequential).unwrap();
    one.run_round(&Sequential).unwrap();
    assert_eq!(two.clients()[0].g_hat, two.clients()[1].g_hat);
    assert_eq!(two.server().x, one.server().x);
}

#[test]
fn participation_frequency_is_uniform() {
    let (m, s, rounds) = (100, 10, 10_000);
    let mut counts = vec![0usize; m];
    for t in 0..rounds {
        let ids = sample_participants(m, s, t, 42).unwrap();
        assert_eq!(ids.len(), s);
        for i in ids {
            counts[i] += 1;
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        let f = c as f64 / rounds as f64;
        assert!((f - 0.1).abs() <= 0.015, "client {i} selected in {f} of rounds");
    }
}

#[test]
fn homogeneous_shards_share_the_optimum() {
    let lsq = synthetic_heterogeneous_lsq(4, 5, &[30; 4], 0.0, 0.0, 9).unwrap();
    let x_star = lsq.global_optimum.clone();
    for algorithm in [Algorithm::fedspeed(), Algorithm::FedAvg, Algorithm::FedProx] {
        let hp = HyperParams {
            eta_l: 0.05,
            rho: 0.01,
            rho_mode: RhoMode::Fixed,
            local_work: LocalWork::Steps(5),
            rounds: 400,
            participants: 4,
            ..HyperParams::default()
        };
        let oracles = lsq
            .shards
            .iter()
            .map(|s| Box::new(s.objective(5, 0.0).unwrap()) as Box<dyn GradientOracle>)
            .collect();
        let mut sim = Simulation::new(
            config(algorithm, hp),
            oracles,
            ParamVector::zeros(5),
            Some(x_star.clone()),
        )
        .unwrap();
        sim.run(&Sequential).unwrap();
        let dist = sim.server().x.sub(&x_star).unwrap().l2_norm();
        assert!(dist <= 1e-6, "{}: {dist:e}", algorithm.name());
    }
}
