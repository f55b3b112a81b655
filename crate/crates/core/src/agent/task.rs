use rand::Rng;

use crate::causal::TwoRegimeEnv;
use crate::env::{EnvState, QoEReport, RawAction, SystemParams, VrEnv};
use crate::error::{Error, Result};
use crate::scene::SceneTrace;
use crate::SimRng;

/// Outcome of one environment step as seen by the learner.
#[derive(Debug, Clone)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub report: Option<QoEReport>,
}

/// An episodic control task with continuous actions in `(0, 1)`.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// State indices the action can influence.
    fn relevant_indices(&self) -> Vec<usize>;
    fn reset(&mut self, rng: &mut SimRng) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Result<Step>;
}

/// The VR allocation environment over a pool of scene traces, one trace
/// drawn per episode. States are the scaled feature vectors.
#[derive(Debug, Clone)]
pub struct VrTask {
    env: VrEnv,
    traces: Vec<SceneTrace>,
    current: usize,
}

impl VrTask {
    pub fn new(params: SystemParams, traces: Vec<SceneTrace>) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::domain("no traces"));
        }
        if let Some(t) = traces.iter().find(|t| t.users() != params.users) {
            return Err(Error::Shape { expected: params.users, actual: t.users() });
        }
        Ok(VrTask { env: VrEnv::new(params)?, traces, current: 0 })
    }

    pub fn env(&self) -> &VrEnv {
        &self.env
    }

    pub fn traces(&self) -> &[SceneTrace] {
        &self.traces
    }

    /// Index of the trace used by the current episode.
    pub fn current_trace(&self) -> usize {
        self.current
    }

    /// Resets on a specific trace.
    pub fn reset_on(&mut self, index: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        let trace = self.traces.get(index).ok_or_else(|| Error::Usage(format!("no trace {index}")))?;
        self.current = index;
        let s = self.env.reset(trace, rng)?;
        Ok(s.features(self.env.params()))
    }

    pub fn raw_state(&self) -> Option<&EnvState> {
        self.env.state()
    }
}

impl Environment for VrTask {
    fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    fn relevant_indices(&self) -> Vec<usize> {
        EnvState::relevant_indices(self.env.users())
    }

    fn reset(&mut self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let i = rng.random_range(0..self.traces.len());
        self.reset_on(i, rng)
    }

    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Result<Step> {
        let raw = RawAction::from_slice(action, self.env.users())?;
        let r = self.env.step(&raw, rng)?;
        Ok(Step {
            next_state: r.state.features(self.env.params()),
            reward: r.reward,
            done: r.done,
            report: Some(r.report),
        })
    }
}

impl Environment for TwoRegimeEnv {
    fn state_dim(&self) -> usize {
        TwoRegimeEnv::STATE_DIM
    }

    fn action_dim(&self) -> usize {
        TwoRegimeEnv::ACTION_DIM
    }

    fn relevant_indices(&self) -> Vec<usize> {
        TwoRegimeEnv::relevant_indices()
    }

    fn reset(&mut self, rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(TwoRegimeEnv::reset(self, rng))
    }

    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Result<Step> {
        let (next_state, reward, done) = TwoRegimeEnv::step(self, action, rng)?;
        Ok(Step { next_state, reward, done, report: None })
    }
}
