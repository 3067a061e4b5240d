//! Building and running a configured experiment, and writing its outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fedspeed_core::objectives::{Activation, GradientOracle, LogisticObjective, MlpObjective};
use fedspeed_core::param::{DenseMatrix, ParamVector};
use fedspeed_core::partition::{
    dirichlet_partition, iid_partition, synthetic_classification, synthetic_heterogeneous_lsq, Dataset, Partition,
};
use fedspeed_core::simulator::{initial_point, ClientExecutor, MetricsRow, ProbeReport, SimulationConfig};
use fedspeed_core::Simulation;
use serde::{Deserialize, Serialize};

use crate::config::{ActivationName, DataSource, ExperimentConfig, ObjectiveConfig, PartitionConfig};
use crate::dataset_csv::load_csv_dataset;
use crate::error::{FedsimError, Result};
use crate::partition_file::read_partition;

pub const METRICS_HEADER: &str = "round,train_loss,grad_norm,eval_metric,dist_to_opt,elapsed_s";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PROBES_FILE: &str = "probes.json";

/// What the `eval_metric` column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Accuracy,
    DistToOpt,
    TrainLoss,
}

impl EvalKind {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            EvalKind::Accuracy => a > b,
            _ => a < b,
        }
    }
}

pub struct Federation {
    pub oracles: Vec<Box<dyn GradientOracle>>,
    pub dim: usize,
    /// Minimizer of the averaged objective, when it has a closed form.
    pub optimum: Option<ParamVector>,
    pub init_scale: f64,
    pub eval_kind: EvalKind,
}

/// Minimizer of `(1/m)Σ_i F_i` for least-squares clients, from the summed
/// normal equations.
pub fn averaged_lsq_optimum(parts: &[(Vec<f64>, Vec<f64>)], dim: usize) -> Result<ParamVector> {
    let mut h = vec![0.0; dim * dim];
    let mut c = vec![0.0; dim];
    for (hi, ci) in parts {
        h.iter_mut().zip(hi).for_each(|(a, b)| *a += b);
        c.iter_mut().zip(ci).for_each(|(a, b)| *a += b);
    }
    for r in 0..dim {
        for s in 0..r {
            let avg = 0.5 * (h[r * dim + s] + h[s * dim + r]);
            h[r * dim + s] = avg;
            h[s * dim + r] = avg;
        }
    }
    Ok(ParamVector::from_vec(DenseMatrix::from_rows(dim, h)?.solve_spd(&c)?)?)
}

fn load_data(source: &DataSource, seed: u64) -> Result<Dataset> {
    match source {
        DataSource::Synthetic {
            samples,
            dim,
            classes,
            separation,
        } => Ok(synthetic_classification(*samples, *dim, *classes, *separation, seed)?),
        DataSource::Csv {
            path,
            label_column,
            header,
            num_classes,
        } => load_csv_dataset(path, label_column, *header, *num_classes),
    }
}

fn partition_data(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Partition> {
    let default = PartitionConfig::Dirichlet {
        clients: 10,
        concentration: 0.6,
    };
    match cfg.partition.as_ref().unwrap_or(&default) {
        PartitionConfig::Dirichlet { clients, concentration } => {
            Ok(dirichlet_partition(&data.labels, *clients, *concentration, seed)?)
        }
        PartitionConfig::Iid { clients } => Ok(iid_partition(&data.labels, *clients, seed)?),
        PartitionConfig::File { path } => {
            let p = read_partition(path)?;
            if p.num_samples() != data.len() {
                return Err(FedsimError::config(
                    "partition.path",
                    format!(
                        "partition covers {} samples, dataset has {}",
                        p.num_samples(),
                        data.len()
                    ),
                ));
            }
            Ok(p)
        }
    }
}

/// Client objectives described by `cfg`.
pub fn build_federation(cfg: &ExperimentConfig) -> Result<Federation> {
    let seed = cfg.hyperparams.seed;
    match &cfg.objective {
        ObjectiveConfig::SyntheticLsq {
            clients,
            dim,
            samples_per_client,
            drift,
            noise,
            l2,
            init_scale,
        } => {
            let lsq = synthetic_heterogeneous_lsq(
                *clients,
                *dim,
                &vec![*samples_per_client; *clients],
                *drift,
                *noise,
                seed,
            )?;
            let objectives = lsq
                .shards
                .iter()
                .map(|s| s.objective(*dim, *l2))
                .collect::<fedspeed_core::Result<Vec<_>>>()?;
            let normal: Vec<_> = objectives.iter().map(|o| o.normal_equations()).collect();
            let optimum = averaged_lsq_optimum(&normal, *dim)?;
            Ok(Federation {
                oracles: objectives
                    .into_iter()
                    .map(|o| Box::new(o) as Box<dyn GradientOracle>)
                    .collect(),
                dim: *dim,
                optimum: Some(optimum),
                init_scale: *init_scale,
                eval_kind: EvalKind::DistToOpt,
            })
        }
        ObjectiveConfig::Logistic { data, l2, init_scale } => {
            let data = load_data(data, seed)?;
            if data.num_classes != 2 {
                return Err(FedsimError::config(
                    "objective.data",
                    format!("logistic regression needs 2 classes, found {}", data.num_classes),
                ));
            }
            let partition = partition_data(cfg, &data, seed)?;
            let mut oracles: Vec<Box<dyn GradientOracle>> = Vec::new();
            for shard in partition.shards() {
                let (x, y) = data.select(&shard);
                let y = y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
                oracles.push(Box::new(LogisticObjective::new(data.dim, x, y, *l2)?));
            }
            Ok(Federation {
                oracles,
                dim: data.dim,
                optimum: None,
                init_scale: *init_scale,
                eval_kind: EvalKind::Accuracy,
            })
        }
        ObjectiveConfig::Mlp {
            data,
            hidden,
            activation,
            l2,
            init_scale,
        } => {
            let data = load_data(data, seed)?;
            let partition = partition_data(cfg, &data, seed)?;
            let mut sizes = vec![data.dim];
            sizes.extend_from_slice(hidden);
            sizes.push(data.num_classes);
            let act = match activation {
                ActivationName::Tanh => Activation::Tanh,
                ActivationName::Softplus => Activation::Softplus,
            };
            let mut oracles: Vec<Box<dyn GradientOracle>> = Vec::new();
            for shard in partition.shards() {
                let (x, y) = data.select(&shard);
                oracles.push(Box::new(MlpObjective::new(sizes.clone(), act, x, y, *l2)?));
            }
            Ok(Federation {
                oracles,
                dim: MlpObjective::parameter_count(&sizes),
                optimum: None,
                init_scale: *init_scale,
                eval_kind: EvalKind::Accuracy,
            })
        }
    }
}

pub fn build_simulation(cfg: &ExperimentConfig) -> Result<(Simulation, EvalKind)> {
    let fed = build_federation(cfg)?;
    let hp = cfg.hyperparams(fed.oracles.len());
    let x0 = initial_point(fed.dim, fed.init_scale, hp.seed)?;
    let sim_cfg = SimulationConfig {
        algorithm: cfg.algorithm(),
        hp,
        probes: cfg.probes.enabled,
        metrics_every: cfg.output.metrics_every,
    };
    let eval_kind = match (fed.eval_kind, &fed.optimum) {
        (EvalKind::DistToOpt, None) => EvalKind::TrainLoss,
        (k, _) => k,
    };
    Ok((Simulation::new(sim_cfg, fed.oracles, x0, fed.optimum)?, eval_kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMaxima {
    pub local_offset: f64,
    pub correction: f64,
    pub u_update: f64,
    pub virtual_sequence: f64,
    pub z_update: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub algorithm: String,
    pub clients: usize,
    pub dim: usize,
    pub rounds_completed: usize,
    pub eval_metric_kind: EvalKind,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub final_grad_norm: f64,
    pub final_eval_metric: f64,
    pub best_eval_metric: f64,
    pub final_dist_to_opt: Option<f64>,
    pub probe_maxima: Option<ProbeMaxima>,
    /// The resolved config; running it again reproduces this run.
    pub config: ExperimentConfig,
}

impl Summary {
    pub fn line(&self) -> String {
        let mut s = format!(
            "{} rounds={} train_loss={:.6e} grad_norm={:.6e} {:?}={:.6e}",
            self.algorithm,
            self.rounds_completed,
            self.final_train_loss,
            self.final_grad_norm,
            self.eval_metric_kind,
            self.final_eval_metric,
        );
        if let Some(d) = self.final_dist_to_opt {
            let _ = write!(s, " dist_to_opt={d:.6e}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub metrics: Vec<MetricsRow>,
    pub summary: Summary,
    pub probe_report: Option<ProbeReport>,
}

/// Runs every round of `cfg` and assembles metrics, summary and probe
/// report. Nothing is written to disk.
pub fn run_experiment<E: ClientExecutor>(cfg: &ExperimentConfig, executor: &E) -> Result<ExperimentOutcome> {
    let (mut sim, eval_kind) = build_simulation(cfg)?;
    let start = Instant::now();
    let initial = sim.metrics()?;
    let mut metrics = Vec::new();
    let mut traces = Vec::new();
    while sim.server().round < sim.config().hp.rounds {
        let out = sim.run_round(executor)?;
        if let Some(mut row) = out.metrics {
            if cfg.output.record_elapsed {
                row.elapsed_s = start.elapsed().as_secs_f64();
            }
            metrics.push(row);
        }
        traces.extend(out.trace);
    }
    let probe_report = if cfg.probes.enabled {
        Some(sim.probe_report(&traces)?)
    } else {
        None
    };
    let last = metrics.last().unwrap_or(&initial);
    let best =
        metrics.iter().map(|r| r.eval_metric).fold(
            initial.eval_metric,
            |b, v| {
                if eval_kind.better(v, b) {
                    v
                } else {
                    b
                }
            },
        );
    let summary = Summary {
        schema_version: crate::config::SCHEMA_VERSION,
        algorithm: sim.config().algorithm.name().to_string(),
        clients: sim.num_clients(),
        dim: sim.server().x.len(),
        rounds_completed: sim.server().round,
        eval_metric_kind: eval_kind,
        initial_train_loss: initial.train_loss,
        final_train_loss: last.train_loss,
        final_grad_norm: last.grad_norm,
        final_eval_metric: last.eval_metric,
        best_eval_metric: best,
        final_dist_to_opt: last.dist_to_opt,
        probe_maxima: probe_report.as_ref().map(|r| ProbeMaxima {
            local_offset: r.max_local_offset,
            correction: r.max_correction,
            u_update: r.max_u_update,
            virtual_sequence: r.max_virtual_sequence,
            z_update: r.max_z_update,
        }),
        config: cfg.clone(),
    };
    Ok(ExperimentOutcome {
        metrics,
        summary,
        probe_report,
    })
}

/// Metrics CSV body. Floats use shortest round-trip formatting, so equal
/// bits give equal bytes.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{},", r.round, r.train_loss, r.grad_norm, r.eval_metric);
        if let Some(d) = r.dist_to_opt {
            let _ = write!(out, "{d}");
        }
        let _ = writeln!(out, ",{}", r.elapsed_s);
    }
    out
}

/// Per-round probe residuals and maxima as JSON.
pub fn probe_report_json(report: &ProbeReport) -> serde_json::Value {
    let rounds: Vec<_> = report
        .rounds
        .iter()
        .map(|r| {
            serde_json::json!({
                "round": r.round,
                "local_offset": r.local_offset,
                "correction": r.correction,
                "u_update": r.u_update,
                "virtual_sequence": r.virtual_sequence,
                "z_update": r.z_update,
                "grad_norm_z": r.grad_norm_z,
            })
        })
        .collect();
    serde_json::json!({
        "rounds": rounds,
        "maxima": {
            "local_offset": report.max_local_offset,
            "correction": report.max_correction,
            "u_update": report.max_u_update,
            "virtual_sequence": report.max_virtual_sequence,
            "z_update": report.max_z_update,
        },
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| FedsimError::io(path, e))
}

/// Writes `metrics.csv`, `summary.json` and, when probing, `probes.json`
/// into `dir`; returns the written paths.
pub fn write_outputs(dir: &Path, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| FedsimError::io(dir, e))?;
    let mut written = Vec::new();
    let metrics = dir.join(METRICS_FILE);
    write_file(&metrics, &metrics_csv(&outcome.metrics))?;
    written.push(metrics);
    let summary = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    write_file(&summary, &(text + "\n"))?;
    written.push(summary);
    if let Some(report) = &outcome.probe_report {
        let probes = dir.join(PROBES_FILE);
        let text = serde_json::to_string_pretty(&probe_report_json(report)).expect("report serializes");
        write_file(&probes, &(text + "\n"))?;
        written.push(probes);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedspeed_core::simulator::Sequential;

    fn small() -> ExperimentConfig {
        ExperimentConfig::synthetic_lsq_default()
            .with_overrides(&[
                "objective.clients=3".into(),
                "objective.dim=4".into(),
                "objective.samples_per_client=20".into(),
                "hyperparams.rounds=3".into(),
            ])
            .unwrap()
    }

    #[test]
    fn zero_rounds_gives_header_only() {
        let cfg = small().with_overrides(&["hyperparams.rounds=0".into()]).unwrap();
        let out = run_experiment(&cfg, &Sequential).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(metrics_csv(&out.metrics), format!("{METRICS_HEADER}\n"));
        assert_eq!(out.summary.rounds_completed, 0);
        assert_eq!(out.summary.final_train_loss, out.summary.initial_train_loss);
    }

    #[test]
    fn metrics_rows_and_csv_shape() {
        let out = run_experiment(&small(), &Sequential).unwrap();
        assert_eq!(out.metrics.iter().map(|r| r.round).collect::<Vec<_>>(), vec![1, 2, 3]);
        let csv = metrics_csv(&out.metrics);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
        assert_eq!(out.summary.eval_metric_kind, EvalKind::DistToOpt);
    }

    #[test]
    fn lsq_optimum_zeroes_the_averaged_gradient() {
        let (sim, _) = build_simulation(&small()).unwrap();
        let opt = sim.optimum().unwrap().clone();
        assert!(sim.grad_norm(&opt).unwrap() < 1e-10);
    }

    #[test]
    fn classification_objectives_build() {
        let logistic = r#"{"schema_version": 1,
            "objective": {"kind": "logistic", "data": {"kind": "synthetic", "samples": 60, "dim": 3}},
            "partition": {"kind": "iid", "clients": 3},
            "hyperparams": {"rounds": 2}}"#;
        let mlp = r#"{"schema_version": 1,
            "objective": {"kind": "mlp", "hidden": [4], "data": {"kind": "synthetic", "samples": 60, "dim": 3, "classes": 3}},
            "partition": {"kind": "dirichlet", "clients": 3, "concentration": 0.6},
            "hyperparams": {"rounds": 2}}"#;
        for text in [logistic, mlp] {
            let cfg = ExperimentConfig::from_str_with_overrides(text, &[]).unwrap();
            let out = run_experiment(&cfg, &Sequential).unwrap();
            assert_eq!(out.summary.eval_metric_kind, EvalKind::Accuracy);
            assert!((0.0..=1.0).contains(&out.summary.final_eval_metric));
        }
    }
}
