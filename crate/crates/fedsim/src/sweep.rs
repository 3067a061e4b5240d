//! One-axis ablation sweeps over `K`, `ρ₀` or `α`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedspeed_core::simulator::ClientExecutor;

use crate::config::{ExperimentConfig, DEFAULT_LOCAL_STEPS};
use crate::error::{FedsimError, Result};
use crate::experiment::{metrics_csv, run_experiment, write_file, write_outputs, ExperimentOutcome, METRICS_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Local steps; `T` is rescaled so `K·T` stays fixed.
    K,
    Rho0,
    Alpha,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "K",
            Axis::Rho0 => "rho0",
            Axis::Alpha => "alpha",
        }
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "K" | "k" => Ok(Axis::K),
            "rho0" => Ok(Axis::Rho0),
            "alpha" => Ok(Axis::Alpha),
            _ => Err(format!("unknown sweep axis `{s}` (K|rho0|alpha)")),
        }
    }
}

/// One configured point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// The value as written in the `sweep_value` column.
    pub label: String,
    pub config: ExperimentConfig,
}

/// Expands `base` into one config per value. For the `K` axis, `total_work`
/// (default: the base config's `K·T`) must be divisible by every `K`.
pub fn sweep_points(
    base: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    total_work: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    if values.len() < 2 {
        return Err(FedsimError::config("--values", "a sweep needs at least two values"));
    }
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let (label, overrides) = match axis {
            Axis::K => {
                if base.hyperparams.local_epochs.is_some() {
                    return Err(FedsimError::config(
                        "hyperparams.local_epochs",
                        "the K sweep needs local_steps, not local_epochs",
                    ));
                }
                if !(v >= 1.0) || v.fract() != 0.0 {
                    return Err(FedsimError::config(
                        "--values",
                        format!("K must be a positive integer, got {v}"),
                    ));
                }
                let k = v as usize;
                let base_k = base.hyperparams.local_steps.unwrap_or(DEFAULT_LOCAL_STEPS);
                let total = total_work.unwrap_or(base_k * base.hyperparams.rounds);
                if !total.is_multiple_of(k) {
                    return Err(FedsimError::config(
                        "--total-work",
                        format!("K·T = {total} is not divisible by K = {k}"),
                    ));
                }
                (
                    k.to_string(),
                    vec![
                        format!("hyperparams.local_steps={k}"),
                        format!("hyperparams.rounds={}", total / k),
                    ],
                )
            }
            Axis::Rho0 => (v.to_string(), vec![format!("hyperparams.rho={v}")]),
            Axis::Alpha => (v.to_string(), vec![format!("hyperparams.alpha={v}")]),
        };
        points.push(SweepPoint {
            label,
            config: base.with_overrides(&overrides)?,
        });
    }
    Ok(points)
}

pub struct SweepRun {
    pub label: String,
    pub outcome: ExperimentOutcome,
}

/// `sweep_value` followed by the metrics columns, one block per run.
pub fn combined_csv(runs: &[SweepRun]) -> String {
    let mut out = format!("sweep_value,{METRICS_HEADER}\n");
    for run in runs {
        let body = metrics_csv(&run.outcome.metrics);
        for line in body.lines().skip(1) {
            let _ = writeln!(out, "{},{line}", run.label);
        }
    }
    out
}

pub fn combined_path(out_dir: &Path, axis: Axis) -> PathBuf {
    out_dir.join(format!("sweep_{}.csv", axis.name()))
}

/// Runs every point, writing each run into `out_dir/<axis>=<value>/` and
/// the combined CSV into `out_dir/sweep_<axis>.csv`. If a run fails, the
/// combined CSV still holds all runs completed before it.
pub fn run_sweep<E: ClientExecutor>(
    points: &[SweepPoint],
    axis: Axis,
    out_dir: &Path,
    executor: &E,
) -> Result<Vec<SweepRun>> {
    std::fs::create_dir_all(out_dir).map_err(|e| FedsimError::io(out_dir, e))?;
    let combined = combined_path(out_dir, axis);
    let mut runs = Vec::with_capacity(points.len());
    for p in points {
        let result = run_experiment(&p.config, executor).and_then(|outcome| {
            write_outputs(&out_dir.join(format!("{}={}", axis.name(), p.label)), &outcome)?;
            Ok(outcome)
        });
        match result {
            Ok(outcome) => runs.push(SweepRun {
                label: p.label.clone(),
                outcome,
            }),
            Err(e) => {
                write_file(&combined, &combined_csv(&runs))?;
                return Err(FedsimError::Sweep {
                    value: p.label.clone(),
                    completed: runs.len(),
                    source: Box::new(e),
                });
            }
        }
    }
    write_file(&combined, &combined_csv(&runs))?;
    Ok(runs)
}
