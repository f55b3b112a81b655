use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for [`TwoRegimeEnv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoRegimeParams {
    /// Probability that a slot is in the controllable regime.
    pub controllable_prob: f64,
    /// Transition noise when the action sets the next value.
    pub control_sd: f64,
    /// Mean and spread of the next value in the uncontrollable regime.
    pub free_mean: f64,
    pub free_sd: f64,
    /// When set, control also requires the second action component above 0.5.
    pub gated: bool,
    /// Value the reward pulls toward.
    pub goal: f64,
    pub horizon: usize,
}

impl Default for TwoRegimeParams {
    fn default() -> Self {
        TwoRegimeParams {
            controllable_prob: 0.5,
            control_sd: 0.05,
            free_mean: 0.5,
            free_sd: 0.2,
            gated: false,
            goal: 0.8,
            horizon: 50,
        }
    }
}

/// Synthetic two-regime environment.
///
/// State is `[regime, value]`. In the controllable regime the next value is
/// the first action component plus small noise; otherwise it is pure noise.
/// The regime flag is redrawn every step and does not depend on the action.
#[derive(Debug, Clone)]
pub struct TwoRegimeEnv {
    params: TwoRegimeParams,
    state: [f64; 2],
    t: usize,
}

impl TwoRegimeEnv {
    pub const STATE_DIM: usize = 2;
    pub const ACTION_DIM: usize = 2;

    pub fn new(params: TwoRegimeParams) -> Self {
        TwoRegimeEnv { params, state: [0.0, 0.5], t: 0 }
    }

    pub fn params(&self) -> &TwoRegimeParams {
        &self.params
    }

    /// Only the value dimension is action-relevant.
    pub fn relevant_indices() -> Vec<usize> {
        vec![1]
    }

    pub fn state(&self) -> [f64; 2] {
        self.state
    }

    /// Whether `action` controls the next value from `state`.
    pub fn is_controllable(&self, state: &[f64], action: &[f64]) -> bool {
        state[0] > 0.5 && (!self.params.gated || action[1] > 0.5)
    }

    fn draw_regime<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random_bool(self.params.controllable_prob) {
            1.0
        } else {
            0.0
        }
    }

    /// Next state for an arbitrary `(state, action)` without touching the episode.
    pub fn transition<R: Rng + ?Sized>(&self, state: &[f64], action: &[f64], rng: &mut R) -> [f64; 2] {
        let z: f64 = rng.sample(StandardNormal);
        let value = if self.is_controllable(state, action) {
            action[0] + self.params.control_sd * z
        } else {
            self.params.free_mean + self.params.free_sd * z
        };
        [self.draw_regime(rng), value]
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.t = 0;
        self.state = [self.draw_regime(rng), 0.5];
        self.state.to_vec()
    }

    /// Returns `(next_state, reward, done)`.
    pub fn step<R: Rng + ?Sized>(&mut self, action: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64, bool)> {
        if action.len() != Self::ACTION_DIM {
            return Err(Error::Shape { expected: Self::ACTION_DIM, actual: action.len() });
        }
        if self.t >= self.params.horizon {
            return Err(Error::Usage("step after episode end".into()));
        }
        let next = self.transition(&self.state, action, rng);
        self.state = next;
        self.t += 1;
        let reward = -(next[1] - self.params.goal).powi(2);
        Ok((next.to_vec(), reward, self.t >= self.params.horizon))
    }
}
