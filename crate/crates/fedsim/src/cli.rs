//! `fedsim` command line: `run`, `verify`, `partition` and `sweep`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fedspeed_core::partition::{dirichlet_partition, iid_partition, skew_stats, synthetic_classification};

use crate::config::{ExperimentConfig, LabelColumn};
use crate::dataset_csv::load_csv_dataset;
use crate::error::{exit, FedsimError, Result};
use crate::executor::RayonExecutor;
use crate::experiment::{run_experiment, write_outputs};
use crate::partition_file::{format_counts, write_partition};
use crate::sweep::{combined_path, run_sweep, sweep_points, Axis};
use crate::verify::{run_suite, Suite};

/// `println!` that ignores a closed stdout (e.g. piping into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const CONFIG_HELP: &str = "\
Config file: strict JSON; unknown keys are rejected. Defaults:
  schema_version          1 (required)
  algorithm.name          fedspeed | fedavg | fedprox | fedadam | scaffold | fedcm | feddyn  [fedspeed]
  algorithm.fedavg_compat false   (FedSpeed with ascent, prox and correction disabled)
  algorithm.fedcm_momentum 0.1
  algorithm.adam          {server_lr: 0.1, beta1: 0.9, beta2: 0.99, tau: 0.001}
  hyperparams.eta_l       0.1
  hyperparams.prox_weight 0.1     (= 1/lambda)
  hyperparams.rho         0.1     (rho_0 in normalized mode)
  hyperparams.rho_mode    normalized | fixed  [normalized]
  hyperparams.alpha       0.9375
  hyperparams.local_steps 5       (or hyperparams.local_epochs, not both)
  hyperparams.rounds      100
  hyperparams.participants null   (all clients)
  hyperparams.batch_size  null    (full batch)
  hyperparams.lr_decay    1.0
  hyperparams.seed        0
  objective               {kind: synthetic_lsq, clients: 10, dim: 20, samples_per_client: 50,
                           drift: 1.0, noise: 0.0, l2: 0.0, init_scale: 0.0}
                        | {kind: logistic, data, l2: 0.001, init_scale: 0.0}
                        | {kind: mlp, data, hidden: [16], activation: tanh, l2: 0.001, init_scale: 0.1}
  objective.data          {kind: synthetic, samples, dim, classes: 2, separation: 1.0}
                        | {kind: csv, path, label_column, header: null (auto), num_classes: null}
  partition               {kind: dirichlet, clients: 10, concentration: 0.6} | {kind: iid, clients}
                        | {kind: file, path}   (not allowed with synthetic_lsq)
  probes.enabled          false
  output.dir              fedsim-out
  output.metrics_every    null    (1 if rounds <= 500, else 5)
  output.record_elapsed   false

Exit codes: 0 success, 1 tolerance failure, 2 config/validation error, 3 numeric overflow.";

#[derive(Debug, Parser)]
#[command(name = "fedsim", version, about = "Deterministic federated optimization simulator", after_help = CONFIG_HELP)]
pub struct Cli {
    /// Seed overriding the config's hyperparams.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for client rounds (0 = one per core).
    #[arg(long, global = true, env = "FEDSIM_THREADS")]
    pub threads: Option<usize>,

    /// Output directory overriding the config's output.dir.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Config override `dotted.key=value` (value parsed as JSON, else string).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment; writes metrics.csv and summary.json.
    #[command(after_help = CONFIG_HELP)]
    Run { config: PathBuf },
    /// Check the closed-form identities on randomized instances.
    Verify {
        /// eq2 | eq3 | eq4 | eq5 | sam | gradcheck | all
        #[arg(default_value = "all")]
        suite: Suite,
    },
    /// Split a labelled dataset across clients.
    Partition(PartitionArgs),
    /// Run one experiment per value of an ablation axis.
    Sweep {
        config: PathBuf,
        /// K | rho0 | alpha
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values, e.g. 5,10,20.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// K axis only: K·T to hold fixed (default: the base config's K·T).
        #[arg(long)]
        total_work: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// CSV dataset to partition.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Label column: zero-based index or header name (default: last column).
    #[arg(long)]
    pub label_column: Option<String>,
    /// Synthetic classification data `samples,dim,classes`.
    #[arg(long, value_name = "N,DIM,CLASSES")]
    pub synthetic: Option<String>,
    #[arg(long)]
    pub clients: usize,
    /// Dirichlet concentration.
    #[arg(long, conflicts_with = "iid", required_unless_present = "iid")]
    pub concentration: Option<f64>,
    /// Round-robin per class instead of a Dirichlet draw.
    #[arg(long)]
    pub iid: bool,
    /// Partition file to write (default: <out-dir>/partition.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Client × class count table (default: <out>.counts.csv).
    #[arg(long)]
    pub counts: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn executor(cli: &Cli) -> Result<RayonExecutor> {
    RayonExecutor::new(cli.threads.unwrap_or(0))
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("hyperparams.seed={seed}"));
    }
    if let Some(dir) = &cli.out_dir {
        overrides.push(format!(
            "output.dir={}",
            serde_json::Value::String(dir.display().to_string())
        ));
    }
    ExperimentConfig::from_path(path, &overrides)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(cli, config)?;
            let outcome = run_experiment(&cfg, &executor(cli)?)?;
            let written = write_outputs(&cfg.output.dir, &outcome)?;
            say!("{}", outcome.summary.line());
            for p in written {
                say!("wrote {}", p.display());
            }
            Ok(exit::OK)
        }
        Command::Verify { suite } => {
            let checks = run_suite(*suite, cli.seed.unwrap_or(0))?;
            for c in &checks {
                say!("{c}");
            }
            let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).collect();
            if failed.is_empty() {
                Ok(exit::OK)
            } else {
                for c in failed {
                    eprintln!(
                        "FAIL {} {}: residual {:.3e} exceeds {:.0e}",
                        c.suite, c.identity, c.max_residual, c.tolerance
                    );
                }
                Ok(exit::TOLERANCE)
            }
        }
        Command::Partition(args) => cmd_partition(cli, args),
        Command::Sweep {
            config,
            axis,
            values,
            total_work,
        } => {
            let base = load_config(cli, config)?;
            let points = sweep_points(&base, *axis, values, *total_work)?;
            let out_dir = base.output.dir.clone();
            let runs = run_sweep(&points, *axis, &out_dir, &executor(cli)?)?;
            for r in &runs {
                say!("{}={} {}", axis.name(), r.label, r.outcome.summary.line());
            }
            say!("wrote {}", combined_path(&out_dir, *axis).display());
            Ok(exit::OK)
        }
    }
}

fn cmd_partition(cli: &Cli, args: &PartitionArgs) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    let data = match (&args.dataset, &args.synthetic) {
        (Some(path), _) => {
            let label = match &args.label_column {
                Some(col) => match col.parse::<usize>() {
                    Ok(i) => LabelColumn::Index(i),
                    Err(_) => LabelColumn::Name(col.clone()),
                },
                None => {
                    let text = std::fs::read_to_string(path).map_err(|e| FedsimError::io(path, e))?;
                    let width = text.lines().next().map_or(1, |l| l.split(',').count());
                    LabelColumn::Index(width.saturating_sub(1))
                }
            };
            load_csv_dataset(path, &label, None, None)?
        }
        (None, Some(spec)) => {
            let parts: Vec<usize> = spec
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| FedsimError::config("--synthetic", "expected N,DIM,CLASSES"))?;
            if parts.len() != 3 {
                return Err(FedsimError::config("--synthetic", "expected N,DIM,CLASSES"));
            }
            synthetic_classification(parts[0], parts[1], parts[2], 1.0, seed)?
        }
        (None, None) => return Err(FedsimError::config("--dataset", "need --dataset or --synthetic")),
    };
    let partition = if args.iid {
        iid_partition(&data.labels, args.clients, seed)?
    } else {
        let c = args.concentration.expect("clap requires --concentration or --iid");
        dirichlet_partition(&data.labels, args.clients, c, seed)?
    };
    let out = match &args.out {
        Some(p) => p.clone(),
        None => cli
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("fedsim-out"))
            .join("partition.txt"),
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| FedsimError::io(parent, e))?;
    }
    write_partition(&out, &partition)?;
    let counts = partition.class_counts(&data.labels, data.num_classes);
    let counts_path = args.counts.clone().unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".counts.csv");
        PathBuf::from(s)
    });
    crate::experiment::write_file(&counts_path, &format_counts(&counts))?;
    let stats = skew_stats(&counts);
    say!(
        "clients={} samples={} classes={} max_share_deviation={:.4} dominated_clients={:.3} mean_dominant_class_fraction={:.3}",
        partition.num_clients(),
        partition.num_samples(),
        data.num_classes,
        stats.max_share_deviation,
        stats.dominated_client_fraction,
        stats.mean_dominant_class_fraction
    );
    say!("wrote {}", out.display());
    say!("wrote {}", counts_path.display());
    Ok(exit::OK)
}
