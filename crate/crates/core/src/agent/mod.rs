//! Actor-critic learner with causal-influence-weighted exploration.

mod replay;
mod task;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

pub use replay::{Batch, ReplayBuffer, Transition};
pub use task::{Environment, Step, VrTask};

use crate::causal::{cai_scores, CaiConfig, InferenceModel};
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Adam, Mlp};
use crate::SimRng;

/// Bounds applied to every action component handed to an environment.
pub const ACTION_MIN: f64 = 1e-6;
pub const ACTION_MAX: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    /// Noise candidates ranked by CAI score.
    Causal,
    /// Plain Gaussian action noise.
    Noise,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateDivision {
    /// Inference heads only over the action-relevant block.
    Partial,
    /// Heads over every state dimension.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Weighted,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_inference: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub inference_hidden: Vec<usize>,
    /// Actor-critic minibatch size.
    pub batch_size: usize,
    /// Inference-model minibatch size.
    pub inference_batch_size: usize,
    /// Probability of an exploration step.
    pub epsilon: f64,
    pub replay_capacity: usize,
    /// Training episodes.
    pub episodes: usize,
    pub exploration: ExplorationKind,
    pub state_division: StateDivision,
    pub selection: Selection,
    pub cai: CaiConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            tau: 0.01,
            lr_actor: 5e-5,
            lr_critic: 6e-7,
            lr_inference: 1e-4,
            actor_hidden: vec![32; 4],
            critic_hidden: vec![32; 4],
            inference_hidden: vec![256; 3],
            batch_size: 64,
            inference_batch_size: 128,
            epsilon: 0.4,
            replay_capacity: 5000,
            episodes: 10_000,
            exploration: ExplorationKind::Causal,
            state_division: StateDivision::Partial,
            selection: Selection::Weighted,
            cai: CaiConfig::default(),
        }
    }
}

impl AgentConfig {
    /// Settings that learn within a few hundred episodes on one CPU core.
    pub fn desk() -> Self {
        AgentConfig {
            gamma: 0.5,
            lr_actor: 5e-6,
            lr_critic: 1e-3,
            lr_inference: 1e-3,
            actor_hidden: vec![64; 2],
            critic_hidden: vec![64; 2],
            inference_hidden: vec![64; 3],
            episodes: 300,
            cai: CaiConfig { candidates: 16, ..CaiConfig::default() },
            ..AgentConfig::default()
        }
    }

    /// Plain DDPG: Gaussian noise on every step, no inference model.
    pub fn into_ddpg(self) -> Self {
        AgentConfig { exploration: ExplorationKind::Noise, epsilon: 1.0, ..self }
    }

    /// CAI exploration with inference heads over the full state.
    pub fn into_full_state(self) -> Self {
        AgentConfig { exploration: ExplorationKind::Causal, state_division: StateDivision::Full, ..self }
    }

    pub fn warmup(&self) -> usize {
        if self.exploration == ExplorationKind::Causal {
            self.batch_size.max(self.inference_batch_size)
        } else {
            self.batch_size
        }
    }

    pub fn validate(&self) -> Result<(), (String, String)> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err((key.to_string(), msg.to_string())) };
        check((0.0..=1.0).contains(&self.gamma), "gamma", "must lie in [0, 1]")?;
        check(self.tau > 0.0 && self.tau <= 1.0, "tau", "must lie in (0, 1]")?;
        check((0.0..=1.0).contains(&self.epsilon), "epsilon", "must lie in [0, 1]")?;
        for (k, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic), ("lr_inference", self.lr_inference)]
        {
            check(v > 0.0 && v.is_finite(), k, "must be positive")?;
        }
        check(self.batch_size > 0, "batch_size", "must be positive")?;
        check(self.inference_batch_size > 0, "inference_batch_size", "must be positive")?;
        check(self.replay_capacity >= self.warmup(), "replay_capacity", "smaller than the warm-up size")?;
        for (k, h) in [
            ("actor_hidden", &self.actor_hidden),
            ("critic_hidden", &self.critic_hidden),
            ("inference_hidden", &self.inference_hidden),
        ] {
            check(!h.contains(&0), k, "layer widths must be positive")?;
        }
        self.cai.validate().map_err(|(k, m)| (format!("cai.{k}"), m))
    }
}

/// Index of the candidate to execute: the top-ranked one, or a draw from the
/// rank weights.
pub fn select_candidate<R: Rng + ?Sized>(scores: &[f64], selection: Selection, rng: &mut R) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Usage("no candidates to select from".into()));
    }
    let w = rank_weights(scores);
    match selection {
        Selection::Argmax => Ok(w.ranks.iter().position(|&r| r == 1).unwrap_or(0)),
        Selection::Weighted => Ok(WeightedIndex::new(&w.probs).map_err(|e| Error::domain(e.to_string()))?.sample(rng)),
    }
}

/// Selection distribution over candidates ranked by score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    /// 1 for the highest score.
    pub ranks: Vec<usize>,
    pub probs: Vec<f64>,
}

/// Ranks scores (descending, ties by index) and weights candidate `i` by
/// `N - rank_i`, normalized to sum to one.
pub fn rank_weights(scores: &[f64]) -> RankWeights {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    if n == 1 {
        return RankWeights { ranks, probs: vec![1.0] };
    }
    let raw: Vec<f64> = ranks.iter().map(|&r| (n - r) as f64).collect();
    let total: f64 = raw.iter().sum();
    RankWeights { ranks, probs: raw.iter().map(|w| w / total).collect() }
}

/// Bootstrapped critic targets `r + gamma (1 - done) Q'(s', X'(s'))`.
pub fn critic_target(
    rewards: &Array1<f64>,
    next_states: ArrayView2<f64>,
    dones: &Array1<f64>,
    gamma: f64,
    target_actor: &Mlp,
    target_critic: &Mlp,
) -> Result<Array1<f64>> {
    let n = rewards.len();
    if next_states.nrows() != n || dones.len() != n {
        return Err(Error::Shape { expected: n, actual: next_states.nrows() });
    }
    let next_actions = target_actor.forward(next_states)?;
    let input =
        ndarray::concatenate(Axis(1), &[next_states, next_actions.view()]).map_err(|e| Error::domain(e.to_string()))?;
    let q = target_critic.forward(input.view())?.column(0).to_owned();
    Ok(ndarray::Zip::from(rewards).and(dones).and(&q).map_collect(|&r, &d, &q| r + gamma * (1.0 - d) * q))
}

/// Result of one exploration decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Vec<f64>,
    pub explored: bool,
    /// CAI scores of the candidates when causal exploration ran.
    pub scores: Option<Vec<f64>>,
    pub chosen: Option<usize>,
}

/// Losses from one learning step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub inference_loss: Option<f64>,
}

/// All learnable state of an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Networks {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub inference: Option<InferenceModel>,
}

fn clip_action(v: f64) -> f64 {
    v.clamp(ACTION_MIN, ACTION_MAX)
}

impl Networks {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        relevant: &[usize],
        config: &AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let widths = |input: usize, hidden: &[usize], out: usize| {
            let mut w = vec![input];
            w.extend_from_slice(hidden);
            w.push(out);
            w
        };
        let actor = Mlp::new(&widths(state_dim, &config.actor_hidden, action_dim), Activation::Sigmoid, rng)?;
        let critic = Mlp::new(&widths(state_dim + action_dim, &config.critic_hidden, 1), Activation::Identity, rng)?;
        let inference = match config.exploration {
            ExplorationKind::Causal => {
                let mask = match config.state_division {
                    StateDivision::Partial => relevant.to_vec(),
                    StateDivision::Full => (0..state_dim).collect(),
                };
                Some(InferenceModel::new(
                    state_dim,
                    action_dim,
                    mask,
                    &config.inference_hidden,
                    config.lr_inference,
                    rng,
                )?)
            }
            _ => None,
        };
        Ok(Networks {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(&actor, config.lr_actor),
            critic_opt: Adam::new(&critic, config.lr_critic),
            actor,
            critic,
            inference,
        })
    }

    /// Deterministic policy output, clipped into the open unit interval.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor.forward_one(state)?.into_iter().map(clip_action).collect())
    }

    /// Exploration step as configured.
    pub fn explore<R: Rng + ?Sized>(&self, state: &[f64], config: &AgentConfig, rng: &mut R) -> Result<Decision> {
        let action = self.act(state)?;
        let explore = config.exploration != ExplorationKind::None && rng.random_bool(config.epsilon);
        if !explore {
            return Ok(Decision { action, explored: false, scores: None, chosen: None });
        }
        let sd = config.cai.noise_var.sqrt();
        let noise = Normal::new(0.0, sd).map_err(|e| Error::domain(e.to_string()))?;
        if config.exploration == ExplorationKind::Noise {
            let action = action.iter().map(|&a| clip_action(a + noise.sample(rng))).collect();
            return Ok(Decision { action, explored: true, scores: None, chosen: None });
        }
        let model =
            self.inference.as_ref().ok_or_else(|| Error::Usage("causal exploration without inference model".into()))?;
        let n = config.cai.candidates;
        let candidates = Array2::from_shape_fn((n, action.len()), |(_, j)| clip_action(action[j] + noise.sample(rng)));
        let scores: Vec<f64> = cai_scores(model, state, candidates.view(), config.cai.mc_samples, rng)?
            .into_iter()
            .map(|e| e.score)
            .collect();
        let chosen = select_candidate(&scores, config.selection, rng)?;
        Ok(Decision {
            action: candidates.row(chosen).to_vec(),
            explored: true,
            scores: Some(scores),
            chosen: Some(chosen),
        })
    }

    /// One actor-critic update on `batch` followed by target soft updates.
    pub fn update_actor_critic(&mut self, batch: &Batch, config: &AgentConfig) -> Result<(f64, f64)> {
        let n = batch.rewards.len() as f64;
        let y = critic_target(
            &batch.rewards,
            batch.next_states.view(),
            &batch.dones,
            config.gamma,
            &self.actor_target,
            &self.critic_target,
        )?;
        let sa = ndarray::concatenate(Axis(1), &[batch.states.view(), batch.actions.view()])
            .map_err(|e| Error::domain(e.to_string()))?;
        let cache = self.critic.forward_cached(sa.view())?;
        let err = &cache.output().column(0) - &y;
        let critic_loss = err.mapv(|e| e * e).sum() / n;
        let grad = (err * (2.0 / n)).insert_axis(Axis(1));
        let (grads, _) = self.critic.backward(&cache, grad.view())?;
        self.critic_opt.step(&mut self.critic, &grads)?;

        let actor_cache = self.actor.forward_cached(batch.states.view())?;
        let sa_pi = ndarray::concatenate(Axis(1), &[batch.states.view(), actor_cache.output().view()])
            .map_err(|e| Error::domain(e.to_string()))?;
        let q_cache = self.critic.forward_cached(sa_pi.view())?;
        let actor_objective = q_cache.output().sum() / n;
        let ascend = Array2::from_elem((batch.rewards.len(), 1), -1.0 / n);
        let (_, d_input) = self.critic.backward(&q_cache, ascend.view())?;
        let d_action = d_input.slice(s![.., batch.states.ncols()..]).to_owned();
        let (actor_grads, _) = self.actor.backward(&actor_cache, d_action.view())?;
        self.actor_opt.step(&mut self.actor, &actor_grads)?;

        soft_update(&mut self.critic_target, &self.critic, config.tau)?;
        soft_update(&mut self.actor_target, &self.actor, config.tau)?;
        Ok((critic_loss, actor_objective))
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub mean_qoe: f64,
    pub hfqoe: f64,
    pub success_rate: f64,
    /// Mean `[T_u, T_e, T_d, T_r]` over user-slots.
    pub mean_delays: [f64; 4],
    pub per_user_qoe: Vec<f64>,
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub inference_loss: f64,
    pub explored_steps: usize,
}

#[derive(Default)]
struct EpisodeAccumulator {
    steps: usize,
    reward: f64,
    qoe: f64,
    qoe_count: usize,
    delivered: usize,
    delays: [f64; 4],
    per_user: Vec<f64>,
    hfqoe: f64,
    critic: (f64, usize),
    actor: (f64, usize),
    inference: (f64, usize),
    explored: usize,
}

impl EpisodeAccumulator {
    fn record(&mut self, step: &Step, stats: Option<TrainStats>, explored: bool) {
        self.steps += 1;
        self.reward += step.reward;
        self.explored += usize::from(explored);
        if let Some(r) = &step.report {
            if self.per_user.is_empty() {
                self.per_user = vec![0.0; r.qoe.len()];
            }
            for (acc, q) in self.per_user.iter_mut().zip(&r.qoe) {
                *acc += q;
            }
            self.qoe += r.qoe.iter().sum::<f64>();
            self.qoe_count += r.qoe.len();
            self.delivered += r.delivered.iter().filter(|&&d| d).count();
            for d in &r.delays {
                for (acc, v) in self.delays.iter_mut().zip(d.as_array()) {
                    *acc += v;
                }
            }
            self.hfqoe = r.hfqoe;
        }
        if let Some(s) = stats {
            self.critic = (self.critic.0 + s.critic_loss, self.critic.1 + 1);
            self.actor = (self.actor.0 + s.actor_objective, self.actor.1 + 1);
            if let Some(l) = s.inference_loss {
                self.inference = (self.inference.0 + l, self.inference.1 + 1);
            }
        }
    }

    fn finish(self, episode: usize) -> EpisodeMetrics {
        let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
        let users = self.qoe_count.max(1) as f64;
        let slots = self.steps.max(1) as f64;
        EpisodeMetrics {
            episode,
            steps: self.steps,
            mean_reward: self.reward / slots,
            mean_qoe: self.qoe / users,
            hfqoe: self.hfqoe,
            success_rate: self.delivered as f64 / users,
            mean_delays: self.delays.map(|d| d / users),
            per_user_qoe: self.per_user.iter().map(|q| q / slots).collect(),
            critic_loss: mean(self.critic),
            actor_objective: mean(self.actor),
            inference_loss: mean(self.inference),
            explored_steps: self.explored,
        }
    }
}

/// Serializable snapshot of an agent. The replay buffer is not included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub config: AgentConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub episodes_done: usize,
    pub networks: Networks,
    pub rng: SimRng,
}

/// A learner bundled with its replay memory and private random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    nets: Networks,
    buffer: ReplayBuffer,
    rng: SimRng,
    episodes_done: usize,
}

impl Agent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        relevant: &[usize],
        config: AgentConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate().map_err(|(key, message)| Error::Config { key: format!("agent.{key}"), message })?;
        let mut rng = SimRng::seed_from_u64(seed);
        let nets = Networks::new(state_dim, action_dim, relevant, &config, &mut rng)?;
        Ok(Agent {
            buffer: ReplayBuffer::new(config.replay_capacity),
            config,
            state_dim,
            action_dim,
            nets,
            rng,
            episodes_done: 0,
        })
    }

    pub fn for_env<E: Environment + ?Sized>(env: &E, config: AgentConfig, seed: u64) -> Result<Self> {
        Self::new(env.state_dim(), env.action_dim(), &env.relevant_indices(), config, seed)
    }

    pub fn from_checkpoint(cp: AgentCheckpoint) -> Self {
        Agent {
            buffer: ReplayBuffer::new(cp.config.replay_capacity),
            config: cp.config,
            state_dim: cp.state_dim,
            action_dim: cp.action_dim,
            nets: cp.networks,
            rng: cp.rng,
            episodes_done: cp.episodes_done,
        }
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            config: self.config.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            episodes_done: self.episodes_done,
            networks: self.nets.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn networks(&self) -> &Networks {
        &self.nets
    }

    pub fn networks_mut(&mut self) -> &mut Networks {
        &mut self.nets
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.nets.act(state)
    }

    pub fn explore(&mut self, state: &[f64]) -> Result<Decision> {
        self.nets.explore(state, &self.config, &mut self.rng)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Samples minibatches and updates all networks. Returns `None` until the
    /// replay memory holds the warm-up amount.
    pub fn train_step(&mut self) -> Result<Option<TrainStats>> {
        if self.buffer.len() < self.config.warmup() {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng)?;
        let (critic_loss, actor_objective) = self.nets.update_actor_critic(&batch, &self.config)?;
        let inference_loss = match self.nets.inference.as_mut() {
            Some(model) => {
                let b = self.buffer.sample(self.config.inference_batch_size, &mut self.rng)?;
                Some(model.train(b.states.view(), b.actions.view(), b.next_states.view())?)
            }
            None => None,
        };
        Ok(Some(TrainStats { critic_loss, actor_objective, inference_loss }))
    }

    /// Runs one training episode.
    pub fn run_episode<E: Environment + ?Sized>(
        &mut self,
        env: &mut E,
        env_rng: &mut SimRng,
    ) -> Result<EpisodeMetrics> {
        if env.state_dim() != self.state_dim || env.action_dim() != self.action_dim {
            return Err(Error::Shape { expected: self.state_dim, actual: env.state_dim() });
        }
        let mut acc = EpisodeAccumulator::default();
        let mut state = env.reset(env_rng)?;
        loop {
            let decision = self.explore(&state)?;
            let step = env.step(&decision.action, env_rng)?;
            self.remember(Transition {
                state: std::mem::take(&mut state),
                action: decision.action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                done: step.done,
            });
            let stats = self.train_step()?;
            acc.record(&step, stats, decision.explored);
            state = step.next_state;
            if step.done {
                break;
            }
        }
        let m = acc.finish(self.episodes_done);
        self.episodes_done += 1;
        Ok(m)
    }

    /// Trains for `episodes` episodes, calling `on_episode` after each.
    pub fn train<E, F>(
        &mut self,
        env: &mut E,
        episodes: usize,
        env_rng: &mut SimRng,
        mut on_episode: F,
    ) -> Result<Vec<EpisodeMetrics>>
    where
        E: Environment + ?Sized,
        F: FnMut(&Agent, &EpisodeMetrics) -> Result<()>,
    {
        let mut out = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let m = self.run_episode(env, env_rng)?;
            on_episode(self, &m)?;
            out.push(m);
        }
        Ok(out)
    }
}
