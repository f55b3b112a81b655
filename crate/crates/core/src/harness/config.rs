use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::baselines::PolicyKind;
use crate::env::SystemParams;
use crate::error::{Error, Result};
use crate::scene::SynthSpec;

/// File name of the resolved configuration written next to every run's outputs.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

/// Run-level settings: seeding, data sources and output cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    /// Learned variant to train, or the policy to evaluate.
    pub policy: PolicyKind,
    /// Directory of `.jsonl` training traces. Synthesized when absent.
    pub train_traces: Option<PathBuf>,
    /// Directory of `.jsonl` test traces. Synthesized when absent.
    pub test_traces: Option<PathBuf>,
    pub synth: SynthSpec,
    pub synth_train: usize,
    pub synth_test: usize,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many episodes; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Environment seeds used by evaluation and sweeps.
    pub eval_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            policy: PolicyKind::PsCddpg,
            train_traces: None,
            test_traces: None,
            synth: SynthSpec::default(),
            synth_train: 200,
            synth_test: 50,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 0,
            eval_seeds: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: SystemParams,
    pub agent: AgentConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Checks every section; errors carry the dotted key path.
    pub fn validate(&self) -> Result<()> {
        fn at(section: &'static str) -> impl Fn((String, String)) -> Error {
            move |(key, message)| Error::Config { key: format!("{section}.{key}"), message }
        }
        self.environment.validate().map_err(at("environment"))?;
        self.agent.validate().map_err(at("agent"))?;
        let run = &self.run;
        let synthesized = run.train_traces.is_none() || run.test_traces.is_none();
        if synthesized && run.synth.users != self.environment.users {
            return Err(Error::Config {
                key: "run.synth.users".into(),
                message: format!("{} users but the environment has {}", run.synth.users, self.environment.users),
            });
        }
        if run.train_traces.is_none() && run.synth_train == 0 {
            return Err(Error::Config { key: "run.synth_train".into(), message: "need at least one trace".into() });
        }
        if run.test_traces.is_none() && run.synth_test == 0 {
            return Err(Error::Config { key: "run.synth_test".into(), message: "need at least one trace".into() });
        }
        if run.eval_seeds.is_empty() {
            return Err(Error::Config { key: "run.eval_seeds".into(), message: "need at least one seed".into() });
        }
        Ok(())
    }

    /// Parses and validates TOML text. Omitted keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::Config { key: String::new(), message: e.to_string() })?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            key: e.path().to_string(),
            message: e.inner().message().trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Returns a copy with the dotted `key` replaced by `value`, e.g.
    /// `environment.b_max`. Unknown keys are rejected like in a config file.
    pub fn with_value(&self, key: &str, value: &toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Serde(e.to_string()))?;
        let missing = || Error::Config { key: key.to_string(), message: "no such key".into() };
        let (parents, leaf) = key.rsplit_once('.').map_or((None, key), |(p, l)| (Some(p), l));
        let mut table = root.as_table_mut().ok_or_else(missing)?;
        for part in parents.into_iter().flat_map(|p| p.split('.')) {
            table = table.get_mut(part).and_then(toml::Value::as_table_mut).ok_or_else(missing)?;
        }
        // Unset optional keys are absent from the serialized form; deserialization
        // below rejects anything that is not a real field.
        let value = match (table.get(leaf), value) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
            _ => value.clone(),
        };
        table.insert(leaf.to_string(), value);
        let text = toml::to_string(&root).map_err(|e| Error::Serde(e.to_string()))?;
        Self::from_toml_str(&text)
    }
}

/// Parses a command-line value as a TOML scalar, falling back to a string.
pub fn parse_value(text: &str) -> toml::Value {
    let text = text.trim();
    if let Ok(i) = text.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = text.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = text.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(text.to_string())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text)
}

/// Writes the resolved config into `dir` and returns its path.
pub fn echo_config(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_toml_string()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
