//! Strict JSON experiment configuration.
//!
//! Every section is optional except `schema_version` and `objective`;
//! unknown keys anywhere are rejected with their field path. The resolved
//! config (after `--set` overrides) serializes with every default spelled
//! out, so the copy embedded in a run summary reproduces the run exactly.

use std::path::{Path, PathBuf};

use fedspeed_core::{AdamParams, Algorithm, HyperParams, LocalWork, RhoMode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{FedsimError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub hyperparams: HyperparamsConfig,
    pub objective: ObjectiveConfig,
    /// How a labelled dataset is split across clients. Must be absent for
    /// objectives that generate per-client data directly.
    #[serde(default)]
    pub partition: Option<PartitionConfig>,
    #[serde(default)]
    pub probes: ProbesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Fedspeed,
    Fedavg,
    Fedprox,
    Fedadam,
    Scaffold,
    Fedcm,
    Feddyn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    /// FedSpeed only: disable ascent, prox term and correction.
    pub fedavg_compat: bool,
    /// FedCM client-level momentum weight.
    pub fedcm_momentum: f64,
    pub adam: AdamConfig,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            name: AlgorithmName::Fedspeed,
            fedavg_compat: false,
            fedcm_momentum: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub server_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        let p = AdamParams::default();
        Self {
            server_lr: p.server_lr,
            beta1: p.beta1,
            beta2: p.beta2,
            tau: p.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoModeName {
    Fixed,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperparamsConfig {
    pub eta_l: f64,
    /// Weight of the prox term, `1/λ`.
    pub prox_weight: f64,
    pub rho: f64,
    pub rho_mode: RhoModeName,
    pub alpha: f64,
    /// Local steps per round; mutually exclusive with `local_epochs`.
    pub local_steps: Option<usize>,
    pub local_epochs: Option<usize>,
    pub rounds: usize,
    /// Clients per round; `null` means every client.
    pub participants: Option<usize>,
    /// `null` means full-batch gradients.
    pub batch_size: Option<usize>,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for HyperparamsConfig {
    fn default() -> Self {
        Self {
            eta_l: 0.1,
            prox_weight: 0.1,
            rho: 0.1,
            rho_mode: RhoModeName::Normalized,
            alpha: 0.9375,
            local_steps: None,
            local_epochs: None,
            rounds: 100,
            participants: None,
            batch_size: None,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

pub const DEFAULT_LOCAL_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    /// Per-client least squares with known optimum; no partition section.
    SyntheticLsq {
        #[serde(default = "d_clients")]
        clients: usize,
        #[serde(default = "d_dim")]
        dim: usize,
        #[serde(default = "d_samples_per_client")]
        samples_per_client: usize,
        #[serde(default = "d_one")]
        drift: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        l2: f64,
        #[serde(default)]
        init_scale: f64,
    },
    /// Binary logistic regression; labels must be 0/1.
    Logistic {
        data: DataSource,
        #[serde(default = "d_l2")]
        l2: f64,
        #[serde(default)]
        init_scale: f64,
    },
    /// Softmax MLP classifier.
    Mlp {
        data: DataSource,
        #[serde(default = "d_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        activation: ActivationName,
        #[serde(default = "d_l2")]
        l2: f64,
        #[serde(default = "d_init_scale")]
        init_scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    #[default]
    Tanh,
    Softplus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian class clusters.
    Synthetic {
        samples: usize,
        dim: usize,
        #[serde(default = "d_classes")]
        classes: usize,
        #[serde(default = "d_one")]
        separation: f64,
    },
    Csv {
        path: PathBuf,
        label_column: LabelColumn,
        /// `null` auto-detects a header row.
        #[serde(default)]
        header: Option<bool>,
        /// `null` infers `max label + 1`.
        #[serde(default)]
        num_classes: Option<usize>,
    },
}

/// Label column by zero-based index or header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    Dirichlet {
        clients: usize,
        concentration: f64,
    },
    Iid {
        clients: usize,
    },
    /// A partition file written by `fedsim partition`.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbesConfig {
    /// Record traces and write the identity-probe report.
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// `null`: every round up to 500 rounds, else every 5.
    pub metrics_every: Option<usize>,
    /// Write wall-clock seconds into `elapsed_s`; off by default so metrics
    /// files are byte-reproducible.
    pub record_elapsed: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("fedsim-out"),
            metrics_every: None,
            record_elapsed: false,
        }
    }
}

fn d_clients() -> usize {
    10
}
fn d_dim() -> usize {
    20
}
fn d_samples_per_client() -> usize {
    50
}
fn d_one() -> f64 {
    1.0
}
fn d_l2() -> f64 {
    1e-3
}
fn d_hidden() -> Vec<usize> {
    vec![16]
}
fn d_init_scale() -> f64 {
    0.1
}
fn d_classes() -> usize {
    2
}

impl ExperimentConfig {
    /// A minimal config over synthetic least squares with all defaults.
    pub fn synthetic_lsq_default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            algorithm: AlgorithmConfig::default(),
            hyperparams: HyperparamsConfig::default(),
            objective: ObjectiveConfig::SyntheticLsq {
                clients: d_clients(),
                dim: d_dim(),
                samples_per_client: d_samples_per_client(),
                drift: 1.0,
                noise: 0.0,
                l2: 0.0,
                init_scale: 0.0,
            },
            partition: None,
            probes: ProbesConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FedsimError::io(path, e))?;
        Self::from_str_with_overrides(&text, overrides)
    }

    pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| FedsimError::config("<root>", e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            FedsimError::config(path, e.into_inner().to_string())
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(FedsimError::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
            ));
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Applies `dotted.key=value` overrides to an already-parsed config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> Result<()> {
        let hp = &self.hyperparams;
        if !(hp.prox_weight > 0.0) || !hp.prox_weight.is_finite() {
            return Err(FedsimError::config(
                "hyperparams.prox_weight",
                "must be positive (lambda = 1/prox_weight)",
            ));
        }
        if hp.local_steps.is_some() && hp.local_epochs.is_some() {
            return Err(FedsimError::config(
                "hyperparams.local_steps",
                "set only one of local_steps and local_epochs",
            ));
        }
        match (&self.objective, &self.partition) {
            (ObjectiveConfig::SyntheticLsq { .. }, Some(_)) => Err(FedsimError::config(
                "partition",
                "synthetic_lsq generates per-client data; remove the partition section",
            )),
            _ => Ok(()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        let a = &self.algorithm;
        match a.name {
            AlgorithmName::Fedspeed => Algorithm::FedSpeed {
                fedavg_compat: a.fedavg_compat,
            },
            AlgorithmName::Fedavg => Algorithm::FedAvg,
            AlgorithmName::Fedprox => Algorithm::FedProx,
            AlgorithmName::Fedadam => Algorithm::FedAdam(AdamParams {
                server_lr: a.adam.server_lr,
                beta1: a.adam.beta1,
                beta2: a.adam.beta2,
                tau: a.adam.tau,
            }),
            AlgorithmName::Scaffold => Algorithm::Scaffold,
            AlgorithmName::Fedcm => Algorithm::FedCm {
                momentum: a.fedcm_momentum,
            },
            AlgorithmName::Feddyn => Algorithm::FedDyn,
        }
    }

    /// Core hyperparameters for a run over `clients` clients.
    pub fn hyperparams(&self, clients: usize) -> HyperParams {
        let h = &self.hyperparams;
        let local_work = match (h.local_steps, h.local_epochs) {
            (_, Some(e)) => LocalWork::Epochs(e),
            (Some(k), None) => LocalWork::Steps(k),
            (None, None) => LocalWork::Steps(DEFAULT_LOCAL_STEPS),
        };
        HyperParams {
            eta_l: h.eta_l,
            lambda: 1.0 / h.prox_weight,
            rho: h.rho,
            rho_mode: match h.rho_mode {
                RhoModeName::Fixed => RhoMode::Fixed,
                RhoModeName::Normalized => RhoMode::Normalized,
            },
            alpha: h.alpha,
            local_work,
            rounds: h.rounds,
            participants: h.participants.unwrap_or(clients),
            batch_size: h.batch_size,
            lr_decay: h.lr_decay,
            seed: h.seed,
        }
    }
}

/// Sets `a.b.c` in a JSON tree to `raw`, parsed as JSON when possible and
/// taken as a string otherwise. Missing intermediate objects are created,
/// so a misspelled key is still reported by the strict schema.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| FedsimError::config(assignment, "override must look like dotted.key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(FedsimError::config(key, "empty path segment in override"));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            other => {
                if other.is_null() {
                    *other = Value::Object(Default::default());
                    other.as_object_mut().expect("just created")
                } else {
                    return Err(FedsimError::config(
                        segments[..i].join("."),
                        "cannot set a field inside a non-object value",
                    ));
                }
            }
        };
        if i + 1 == segments.len() {
            obj.insert((*seg).to_string(), parsed);
            return Ok(());
        }
        node = obj
            .entry((*seg).to_string())
            .or_insert(Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "objective": {"kind": "synthetic_lsq"}}"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_str_with_overrides(MINIMAL, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::synthetic_lsq_default());
        let hp = cfg.hyperparams(10);
        assert_eq!(hp.lambda, 10.0);
        assert_eq!(hp.participants, 10);
        assert_eq!(hp.local_work, LocalWork::Steps(5));
    }

    #[test]
    fn set_overrides_file_values() {
        let cfg = ExperimentConfig::from_str_with_overrides(
            MINIMAL,
            &["hyperparams.alpha=0.9375".into(), "algorithm.name=scaffold".into()],
        )
        .unwrap();
        assert_eq!(cfg.hyperparams.alpha, 0.9375);
        assert_eq!(cfg.algorithm(), Algorithm::Scaffold);
        let again = cfg.with_overrides(&["hyperparams.alpha=0.5".into()]).unwrap();
        assert_eq!(again.hyperparams.alpha, 0.5);
    }

    #[test]
    fn unknown_keys_report_their_path() {
        for (text, overrides, want) in [
            (MINIMAL, vec!["hyperparams.alhpa=1".to_string()], "hyperparams"),
            (
                r#"{"schema_version": 1, "objective": {"kind": "synthetic_lsq", "dims": 3}}"#,
                vec![],
                "objective",
            ),
            (
                MINIMAL,
                vec!["hyperparams.rounds=\"many\"".to_string()],
                "hyperparams.rounds",
            ),
        ] {
            match ExperimentConfig::from_str_with_overrides(text, &overrides) {
                Err(FedsimError::Config { path, .. }) => assert!(path.starts_with(want), "{path}"),
                other => panic!("expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn schema_version_and_consistency_checks() {
        let bad_version = r#"{"schema_version": 2, "objective": {"kind": "synthetic_lsq"}}"#;
        assert!(ExperimentConfig::from_str_with_overrides(bad_version, &[]).is_err());
        let both = ["hyperparams.local_steps=3".into(), "hyperparams.local_epochs=1".into()];
        assert!(ExperimentConfig::from_str_with_overrides(MINIMAL, &both).is_err());
        let part = [r#"partition={"kind":"iid","clients":3}"#.into()];
        assert!(ExperimentConfig::from_str_with_overrides(MINIMAL, &part).is_err());
        assert!(ExperimentConfig::from_str_with_overrides(MINIMAL, &["hyperparams.prox_weight=0".into()]).is_err());
    }

    #[test]
    fn serialized_config_round_trips() {
        let text = r#"{
            "schema_version": 1,
            "algorithm": {"name": "fedcm"},
            "objective": {"kind": "mlp", "data": {"kind": "csv", "path": "d.csv", "label_column": "y"}},
            "partition": {"kind": "dirichlet", "clients": 4, "concentration": 0.6}
        }"#;
        let cfg = ExperimentConfig::from_str_with_overrides(text, &[]).unwrap();
        let back = ExperimentConfig::from_str_with_overrides(&cfg.to_json_pretty(), &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn override_syntax_errors() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        assert!(apply_override(&mut v, "no_equals").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
        assert!(apply_override(&mut v, "schema_version.x=1").is_err());
        apply_override(&mut v, "output.dir=some/where").unwrap();
        assert_eq!(v["output"]["dir"], "some/where");
    }
}
