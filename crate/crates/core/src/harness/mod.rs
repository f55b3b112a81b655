//! Experiment orchestration: configuration, trace generation, training,
//! evaluation, parameter sweeps and metric export.

mod config;
mod metrics;
mod summary;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};

pub use config::{echo_config, load_config, parse_value, ExperimentConfig, RunConfig, RESOLVED_CONFIG};
pub use metrics::{read_rows, write_rows, MetricRow, MetricWriter, RowKind};
pub use summary::{export_summary, write_summary, GroupSummary, LongRow, MetricStats, Summary, METRICS};

use crate::agent::{Agent, AgentCheckpoint, AgentConfig, VrTask};
use crate::baselines::{evaluate, policy_for, EvalSummary, Policy, PolicyKind};
use crate::env::SystemParams;
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::scene::{read_trace_dir, synth_trace, write_trace, SceneTrace, SynthSpec};
use crate::SimRng;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MODEL_FILE: &str = "model.json";

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment = 1,
    TrainTraces = 2,
    TestTraces = 3,
    Traces = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn synth_set(spec: &SynthSpec, count: usize, seed: u64, stream: Stream) -> Result<Vec<SceneTrace>> {
    let mut rng = stream_rng(seed, stream);
    (0..count).map(|_| synth_trace(spec, rng.random())).collect()
}

/// Training traces: the configured directory, or synthesized from the master seed.
pub fn train_traces(cfg: &ExperimentConfig) -> Result<Vec<SceneTrace>> {
    match &cfg.run.train_traces {
        Some(dir) => read_trace_dir(dir),
        None => synth_set(&cfg.run.synth, cfg.run.synth_train, cfg.run.seed, Stream::TrainTraces),
    }
}

pub fn test_traces(cfg: &ExperimentConfig) -> Result<Vec<SceneTrace>> {
    match &cfg.run.test_traces {
        Some(dir) => read_trace_dir(dir),
        None => synth_set(&cfg.run.synth, cfg.run.synth_test, cfg.run.seed, Stream::TestTraces),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenTraces {
    pub out: PathBuf,
    pub count: usize,
    pub spec: SynthSpec,
    pub seed: u64,
    /// Share of traces written to `train/`; the rest go to `test/`.
    pub train_fraction: f64,
}

/// Writes seeded synthetic traces to `out/train` and `out/test`; returns the split sizes.
pub fn gen_traces(opts: &GenTraces) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&opts.train_fraction) {
        return Err(Error::Usage(format!("train fraction {} outside [0, 1]", opts.train_fraction)));
    }
    let traces = synth_set(&opts.spec, opts.count, opts.seed, Stream::Traces)?;
    let n_train = (opts.count as f64 * opts.train_fraction).round() as usize;
    for (split, range) in [("train", 0..n_train), ("test", n_train..opts.count)] {
        let dir = opts.out.join(split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in range {
            write_trace(&dir.join(format!("trace_{i:05}.jsonl")), &traces[i])?;
        }
    }
    Ok((n_train, opts.count - n_train))
}

/// Agent settings for a learned policy variant.
pub fn agent_config_for(kind: PolicyKind, base: &AgentConfig) -> Result<AgentConfig> {
    match kind {
        PolicyKind::PsCddpg => Ok(base.clone()),
        PolicyKind::Ddpg => Ok(base.clone().into_ddpg()),
        PolicyKind::CaiDdpgFullState => Ok(base.clone().into_full_state()),
        other => Err(Error::Usage(format!("policy `{other}` is not trainable"))),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub rows: Vec<MetricRow>,
    pub metrics_path: PathBuf,
    pub model_path: PathBuf,
}

/// Trains the configured learned policy, writing the resolved config,
/// per-episode metrics, periodic checkpoints and the final model to `out`.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let kind = cfg.run.policy;
    let agent_cfg = agent_config_for(kind, &cfg.agent)?;
    echo_config(cfg, out)?;
    let mut task = VrTask::new(cfg.environment.clone(), train_traces(cfg)?)?;
    let mut agent = Agent::for_env(&task, agent_cfg, cfg.run.seed)?;
    let mut env_rng = stream_rng(cfg.run.seed, Stream::Environment);
    let run_id = format!("train-{kind}-s{}", cfg.run.seed);
    let policy = kind.to_string();
    let metrics_path = out.join(METRICS_FILE);
    let mut writer = MetricWriter::create(&metrics_path)?;
    let mut rows = Vec::new();
    let every = cfg.run.checkpoint_every;
    let episodes = cfg.agent.episodes;
    agent.train(&mut task, episodes, &mut env_rng, |a, m| {
        let row = MetricRow::from_episode(&run_id, &policy, cfg.run.seed, m);
        writer.write(&row)?;
        rows.push(row);
        let done = m.episode + 1;
        if every > 0 && done % every == 0 && done < episodes {
            writer.flush()?;
            save_checkpoint(&out.join(format!("checkpoint_{done:05}.json")), &a.checkpoint())?;
        }
        if done % 10 == 0 || done == episodes {
            log::info!(
                "episode {done}/{episodes}: reward {:.3} qoe {:.3} success {:.3}",
                m.mean_reward,
                m.mean_qoe,
                m.success_rate
            );
        }
        Ok(())
    })?;
    writer.flush()?;
    let model_path = out.join(MODEL_FILE);
    save_checkpoint(&model_path, &agent.checkpoint())?;
    Ok(TrainOutcome { agent, rows, metrics_path, model_path })
}

pub fn load_model(path: &Path) -> Result<AgentCheckpoint> {
    load_checkpoint(path)
}

/// Resolves policy names; `baselines` expands to every non-learned policy.
/// Learned policies take the actor of `model`.
pub fn resolve_policies(names: &[String], model: Option<&AgentCheckpoint>) -> Result<Vec<Policy>> {
    let mut kinds = Vec::new();
    for name in names {
        match name.as_str() {
            "baselines" => kinds.extend(PolicyKind::baselines()),
            other => kinds.push(other.parse::<PolicyKind>()?),
        }
    }
    kinds
        .into_iter()
        .map(|k| {
            if k.is_learned() && model.is_none() {
                return Err(Error::Usage(format!("policy `{k}` needs --model")));
            }
            policy_for(k, model.map(|m| m.networks.actor.clone()))
        })
        .collect()
}

/// Evaluates each policy on `traces` and returns one row per record.
pub fn eval(
    policies: &[Policy],
    traces: &[SceneTrace],
    params: &SystemParams,
    seeds: &[u64],
) -> Result<(Vec<EvalSummary>, Vec<MetricRow>)> {
    let mut summaries = Vec::with_capacity(policies.len());
    let mut rows = Vec::new();
    for p in policies {
        let s = evaluate(p, traces, params, seeds)?;
        let run_id = format!("eval-{}", p.name());
        rows.extend(s.records.iter().map(|r| MetricRow::from_eval(&run_id, &s.policy, r)));
        summaries.push(s);
    }
    Ok((summaries, rows))
}

/// Repeats evaluation with `key` set to each of `values`; one row per
/// `(policy, value, seed)`, averaged over the test traces.
pub fn sweep(cfg: &ExperimentConfig, key: &str, values: &[String], policies: &[Policy]) -> Result<Vec<MetricRow>> {
    if values.is_empty() {
        return Err(Error::Usage("sweep needs at least one value".into()));
    }
    let run_id = format!("sweep-{key}");
    let mut rows = Vec::new();
    for text in values {
        let point = cfg.with_value(key, &parse_value(text))?;
        let traces = test_traces(&point)?;
        for p in policies {
            log::info!("sweep {key}={text} policy {}", p.name());
            let s = evaluate(p, &traces, &point.environment, &point.run.eval_seeds)?;
            for &seed in &point.run.eval_seeds {
                let cell: Vec<_> = s.records.iter().filter(|r| r.seed == seed).collect();
                rows.push(MetricRow::sweep_cell(&run_id, &s.policy, key, text, seed, &cell));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            agent: AgentConfig {
                episodes: 3,
                batch_size: 8,
                inference_batch_size: 8,
                replay_capacity: 100,
                actor_hidden: vec![8],
                critic_hidden: vec![8],
                inference_hidden: vec![8],
                ..AgentConfig::desk()
            },
            ..ExperimentConfig::default()
        };
        cfg.agent.cai.candidates = 4;
        cfg.run.synth.slots = 6;
        cfg.run.synth_train = 3;
        cfg.run.synth_test = 2;
        cfg.run.checkpoint_every = 2;
        cfg
    }

    #[test]
    fn gen_traces_split_and_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let opts = GenTraces {
            out: dir.path().to_path_buf(),
            count: 10,
            spec: SynthSpec { slots: 4, ..Default::default() },
            seed: 5,
            train_fraction: 0.8,
        };
        assert_eq!(gen_traces(&opts).unwrap(), (8, 2));
        assert_eq!(read_trace_dir(&dir.path().join("train")).unwrap().len(), 8);
        let test = read_trace_dir(&dir.path().join("test")).unwrap();
        assert_eq!(test.len(), 2);
        let again = tempfile::tempdir().unwrap();
        gen_traces(&GenTraces { out: again.path().to_path_buf(), ..opts.clone() }).unwrap();
        assert_eq!(read_trace_dir(&again.path().join("test")).unwrap(), test);
        assert!(gen_traces(&GenTraces { train_fraction: 1.5, ..opts.clone() }).is_err());
    }

    #[test]
    fn gen_traces_default_split() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { slots: 1, ..Default::default() };
        let opts = GenTraces { out: dir.path().to_path_buf(), count: 2500, spec, seed: 0, train_fraction: 0.8 };
        assert_eq!(gen_traces(&opts).unwrap(), (2000, 500));
        assert_eq!(fs::read_dir(dir.path().join("test")).unwrap().count(), 500);
    }

    #[test]
    fn train_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let out = train(&cfg, dir.path()).unwrap();
        assert_eq!(out.rows.len(), 3);
        assert_eq!(read_rows(&out.metrics_path).unwrap(), out.rows);
        assert!(dir.path().join("checkpoint_00002.json").exists());
        assert_eq!(load_config(&dir.path().join(RESOLVED_CONFIG)).unwrap(), cfg);
        let model = load_model(&out.model_path).unwrap();
        assert_eq!(model.episodes_done, 3);
        assert_eq!(model.networks, *out.agent.networks());
    }

    #[test]
    fn baselines_not_trainable() {
        let mut cfg = tiny();
        cfg.run.policy = PolicyKind::FixedRatio(0.5);
        assert!(matches!(train(&cfg, tempfile::tempdir().unwrap().path()), Err(Error::Usage(_))));
    }

    #[test]
    fn learned_eval_needs_model() {
        assert!(resolve_policies(&["ps_cddpg".into()], None).is_err());
        assert_eq!(resolve_policies(&["baselines".into()], None).unwrap().len(), 5);
        assert!(resolve_policies(&["bogus".into()], None).is_err());
    }

    #[test]
    fn sweep_row_accounting() {
        let mut cfg = tiny();
        cfg.run.eval_seeds = vec![1, 2];
        let policies = resolve_policies(&["original".into(), "fixed_33".into()], None).unwrap();
        let values: Vec<String> = ["5e6", "1e7", "2e7"].iter().map(|s| s.to_string()).collect();
        let rows = sweep(&cfg, "environment.b_max", &values, &policies).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert!(rows.iter().all(|r| r.param == "environment.b_max" && r.kind == RowKind::Sweep));
        let q =
            |p: &str, v: &str| rows.iter().filter(|r| r.policy == p && r.value == v).map(|r| r.mean_qoe).sum::<f64>();
        assert!(q("fixed_33", "2e7") >= q("fixed_33", "5e6"));
        assert!(matches!(sweep(&cfg, "environment.nonexistent", &values, &policies), Err(Error::Config { .. })));
    }

    #[test]
    fn eval_rows_per_record() {
        let cfg = tiny();
        let traces = test_traces(&cfg).unwrap();
        let policies = resolve_policies(&["baselines".into()], None).unwrap();
        let (summaries, rows) = eval(&policies, &traces, &cfg.environment, &[1, 2]).unwrap();
        assert_eq!(summaries.len(), 5);
        assert_eq!(rows.len(), 5 * 2 * 2);
    }
}
