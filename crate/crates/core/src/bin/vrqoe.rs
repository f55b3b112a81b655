use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vrqoe::harness::{
    self, echo_config, export_summary, load_config, load_model, parse_value, resolve_policies, write_rows,
    write_summary, ExperimentConfig, GenTraces,
};
use vrqoe::scene::{read_trace_dir, SynthSpec};
use vrqoe::{Error, Result};

/// Multi-user VR resource allocation experiments.
///
/// Log verbosity follows `VRQOE_LOG` (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "vrqoe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded synthetic scene traces split into train/ and test/.
    GenTraces {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2500)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Train a learned policy; writes config echo, metrics CSV and checkpoints.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `run.out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override any config key, e.g. `--set agent.episodes=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate policies on a trace directory.
    Eval {
        /// Trained checkpoint, required for learned policies.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        traces: PathBuf,
        /// Comma-separated names; `baselines` expands to all fixed schemes.
        #[arg(long, value_delimiter = ',')]
        policy: Vec<String>,
        /// Environment settings and evaluation seeds; Table defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
    },
    /// Re-run evaluation over a list of values for one config key.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "baselines")]
        policy: Vec<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to `run.out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate metric CSVs into summary.json and summary_long.csv.
    Summary {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn config_or_default(path: Option<&Path>) -> Result<ExperimentConfig> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), load_config)
}

fn apply_overrides(mut cfg: ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig> {
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| Error::Usage(format!("override `{o}` is not KEY=VALUE")))?;
        cfg = cfg.with_value(key.trim(), &parse_value(value))?;
    }
    Ok(cfg)
}

fn print_summaries(summaries: &[vrqoe::baselines::EvalSummary]) {
    println!("{:<20} {:>10} {:>8} {:>8} {:>8}", "policy", "reward", "qoe", "hfqoe", "success");
    for s in summaries {
        println!(
            "{:<20} {:>10.4} {:>8.4} {:>8.4} {:>8.4}",
            s.policy, s.mean_reward.mean, s.mean_qoe.mean, s.hfqoe.mean, s.success_rate.mean
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTraces { out, count, users, slots, seed, train_fraction } => {
            let spec = SynthSpec { users, slots, ..SynthSpec::default() };
            let (train, test) =
                harness::gen_traces(&GenTraces { out: out.clone(), count, spec, seed, train_fraction })?;
            println!("wrote {train} train and {test} test traces to {}", out.display());
        }
        Command::Train { config, out, seed, overrides } => {
            let mut cfg = apply_overrides(config_or_default(config.as_deref())?, &overrides)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let out = out.unwrap_or_else(|| cfg.run.out_dir.clone());
            let result = harness::train(&cfg, &out)?;
            let last = result.rows.last();
            println!(
                "trained {} episodes; final reward {:.4}; model {}",
                result.rows.len(),
                last.map_or(f64::NAN, |r| r.mean_reward),
                result.model_path.display()
            );
        }
        Command::Eval { model, traces, policy, config, out } => {
            if policy.is_empty() {
                return Err(Error::Usage("--policy is required".into()));
            }
            let cfg = config_or_default(config.as_deref())?;
            let model = model.as_deref().map(load_model).transpose()?;
            let policies = resolve_policies(&policy, model.as_ref())?;
            let traces = read_trace_dir(&traces)?;
            let (summaries, rows) = harness::eval(&policies, &traces, &cfg.environment, &cfg.run.eval_seeds)?;
            write_rows(&out, &rows)?;
            print_summaries(&summaries);
        }
        Command::Sweep { config, param, values, policy, model, out } => {
            let cfg = config_or_default(config.as_deref())?;
            let model = model.as_deref().map(load_model).transpose()?;
            let policies = resolve_policies(&policy, model.as_ref())?;
            let rows = harness::sweep(&cfg, &param, &values, &policies)?;
            let out = out.unwrap_or_else(|| cfg.run.out_dir.clone());
            echo_config(&cfg, &out)?;
            let path = out.join("sweep.csv");
            write_rows(&path, &rows)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Summary { out, csv } => {
            let paths: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
            let summary = export_summary(&paths)?;
            write_summary(&summary, &out)?;
            println!("summarized {} groups into {}", summary.groups.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VRQOE_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
