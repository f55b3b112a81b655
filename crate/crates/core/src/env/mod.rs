//! The multi-user VR resource-allocation MDP.
//!
//! State layout (dimension `4K + 6K + 2`):
//!
//! ```text
//! [ N_{k,a}            (K x 4, action-irrelevant)
//! | T_u T_e T_d T_r QoE(t-1) avgQoE   per user (K x 6)
//! | H  L ]
//! ```
//!
//! Only the trailing `6K + 2` entries are action-relevant.

mod action;
mod model;
mod params;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use action::{keyframes_for_ratio, normalize_action, Action, RawAction};
pub use model::{
    communication_latency, data_volumes, hfqoe_from, latency_breakdown, population_std, processing_latency, qoe,
    reward, DataVolumes, DelayBreakdown, FairnessTracker, RewardBreakdown,
};
pub use params::SystemParams;

use crate::channel::{sample_channel, transmission_rate, ChannelRealization};
use crate::error::{Error, Result};
use crate::scene::{attention_snapshot, AttentionSnapshot, SceneTrace, LEVELS};

/// Observable MDP state at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Action-irrelevant block: attention counts per user.
    pub counts: Vec<[u32; LEVELS]>,
    /// Previous slot's delays per user, capped at the slot length.
    pub delays: Vec<[f64; 4]>,
    pub qoe_prev: Vec<f64>,
    pub avg_qoe: Vec<f64>,
    pub high: f64,
    pub low: f64,
}

impl EnvState {
    pub fn dim(users: usize) -> usize {
        LEVELS * users + 6 * users + 2
    }

    /// Indices of the action-relevant block in [`EnvState::to_vec`] order.
    pub fn relevant_indices(users: usize) -> Vec<usize> {
        (LEVELS * users..Self::dim(users)).collect()
    }

    pub fn irrelevant_indices(users: usize) -> Vec<usize> {
        (0..LEVELS * users).collect()
    }

    /// Raw state vector.
    pub fn to_vec(&self) -> Vec<f64> {
        self.encode(1.0, 1.0, 1.0)
    }

    /// Scaled network input: counts over `K - 1`, delays over `T_max`,
    /// QoE values over `ln(xi dt / 2)`.
    pub fn features(&self, params: &SystemParams) -> Vec<f64> {
        let count_scale = (params.users.saturating_sub(1)).max(1) as f64;
        let qoe_scale = (params.xi() * params.slot_seconds / 2.0).ln().max(1e-9);
        self.encode(count_scale, params.t_max, qoe_scale)
    }

    fn encode(&self, count_scale: f64, delay_scale: f64, qoe_scale: f64) -> Vec<f64> {
        let k = self.counts.len();
        let mut v = Vec::with_capacity(Self::dim(k));
        for row in &self.counts {
            v.extend(row.iter().map(|&c| f64::from(c) / count_scale));
        }
        for u in 0..k {
            v.extend(self.delays[u].iter().map(|d| d / delay_scale));
            v.push(self.qoe_prev[u] / qoe_scale);
            v.push(self.avg_qoe[u] / qoe_scale);
        }
        v.push(self.high / qoe_scale);
        v.push(self.low / qoe_scale);
        v
    }
}

/// Everything measured in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoEReport {
    pub slot: usize,
    pub delays: Vec<DelayBreakdown>,
    pub qoe: Vec<f64>,
    pub avg_qoe: Vec<f64>,
    pub high: f64,
    pub low: f64,
    pub sigma_star: f64,
    pub hfqoe: f64,
    pub qoe_flags: Vec<bool>,
    pub hfqoe_flag: bool,
    /// Per-user delivery success (`T_k <= T_max`).
    pub delivered: Vec<bool>,
    pub reward: f64,
}

impl QoEReport {
    pub fn mean_qoe(&self) -> f64 {
        self.qoe.iter().sum::<f64>() / self.qoe.len().max(1) as f64
    }

    pub fn success_rate(&self) -> f64 {
        self.delivered.iter().filter(|&&d| d).count() as f64 / self.delivered.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    pub report: QoEReport,
    pub done: bool,
}

/// One environment instance over one scene trace.
#[derive(Debug, Clone)]
pub struct VrEnv {
    params: SystemParams,
    snapshots: Vec<AttentionSnapshot>,
    slot: usize,
    reconstruction_hz: Vec<f64>,
    fairness: FairnessTracker,
    state: Option<EnvState>,
}

impl VrEnv {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate().map_err(|(key, message)| Error::Config { key: format!("environment.{key}"), message })?;
        let k = params.users;
        Ok(VrEnv {
            params,
            snapshots: Vec::new(),
            slot: 0,
            reconstruction_hz: vec![0.0; k],
            fairness: FairnessTracker::new(k),
            state: None,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn users(&self) -> usize {
        self.params.users
    }

    pub fn state_dim(&self) -> usize {
        EnvState::dim(self.params.users)
    }

    pub fn action_dim(&self) -> usize {
        RawAction::dim(self.params.users)
    }

    /// Current slot index (number of completed steps).
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn horizon(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_done(&self) -> bool {
        self.state.is_none() || self.slot >= self.snapshots.len()
    }

    pub fn reconstruction_hz(&self) -> &[f64] {
        &self.reconstruction_hz
    }

    /// Attention snapshot of the current slot.
    pub fn snapshot(&self) -> Option<&AttentionSnapshot> {
        self.snapshots.get(self.slot)
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn fairness(&self) -> &FairnessTracker {
        &self.fairness
    }

    /// Starts an episode on `trace`; client CPU frequencies are drawn once
    /// per episode from `rng`.
    pub fn reset<R: Rng + ?Sized>(&mut self, trace: &SceneTrace, rng: &mut R) -> Result<EnvState> {
        if trace.is_empty() {
            return Err(Error::domain("empty trace"));
        }
        if trace.users() != self.params.users {
            return Err(Error::Shape { expected: self.params.users, actual: trace.users() });
        }
        self.snapshots = trace.slots.iter().map(|s| attention_snapshot(s)).collect::<Result<_>>()?;
        self.slot = 0;
        let (lo, hi) = (self.params.f_r_min, self.params.f_r_max);
        self.reconstruction_hz =
            (0..self.params.users).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect();
        self.fairness = FairnessTracker::new(self.params.users);
        let k = self.params.users;
        let state = EnvState {
            counts: self.snapshots[0].counts.clone(),
            delays: vec![[0.0; 4]; k],
            qoe_prev: vec![0.0; k],
            avg_qoe: vec![0.0; k],
            high: 0.0,
            low: 0.0,
        };
        self.state = Some(state.clone());
        Ok(state)
    }

    /// Normalizes a raw actor output and advances one slot.
    pub fn step<R: Rng + ?Sized>(&mut self, raw: &RawAction, rng: &mut R) -> Result<StepResult> {
        let action = normalize_action(raw, &self.params)?;
        self.step_action(&action, rng)
    }

    /// Advances one slot with an already feasible allocation.
    pub fn step_action<R: Rng + ?Sized>(&mut self, action: &Action, rng: &mut R) -> Result<StepResult> {
        self.ensure_running()?;
        let channel = sample_channel(&self.params.channel, rng)?;
        self.step_with_channel(action, &channel)
    }

    /// Advances one slot under a given channel realization.
    pub fn step_with_channel(&mut self, action: &Action, channel: &ChannelRealization) -> Result<StepResult> {
        self.ensure_running()?;
        let k = self.params.users;
        if action.users() != k || action.extraction_hz.len() != k || action.keyframes.len() != k {
            return Err(Error::Shape { expected: k, actual: action.users() });
        }
        if channel.g_sq.len() != k {
            return Err(Error::Shape { expected: k, actual: channel.g_sq.len() });
        }
        let p = &self.params;
        let snapshot = &self.snapshots[self.slot];
        let rates = action
            .bandwidth
            .iter()
            .zip(&channel.g_sq)
            .map(|(&b, &g)| transmission_rate(b, &p.channel, g))
            .collect::<Result<Vec<_>>>()?;
        let volumes = data_volumes(snapshot, action, p);
        let delays = latency_breakdown(&volumes, action, &rates, &self.reconstruction_hz, snapshot, p);
        let qoe_k = qoe(snapshot, action, &delays, p);
        self.fairness.observe(&qoe_k);
        let hf = self.fairness.hfqoe();
        let r = reward(&qoe_k, hf, p);

        let report = QoEReport {
            slot: self.slot,
            delivered: delays.iter().map(|d| d.total() <= p.t_max).collect(),
            delays: delays.clone(),
            qoe: qoe_k.clone(),
            avg_qoe: self.fairness.averages(),
            high: self.fairness.high(),
            low: self.fairness.low(),
            sigma_star: self.fairness.sigma_star(),
            hfqoe: hf,
            qoe_flags: r.qoe_flags,
            hfqoe_flag: r.hfqoe_flag,
            reward: r.reward,
        };

        self.slot += 1;
        let done = self.slot >= self.snapshots.len();
        let next_counts = self.snapshots[self.slot.min(self.snapshots.len() - 1)].counts.clone();
        let cap = p.slot_seconds;
        let state = EnvState {
            counts: next_counts,
            delays: delays.iter().map(|d| d.as_array().map(|x| x.min(cap))).collect(),
            qoe_prev: qoe_k,
            avg_qoe: report.avg_qoe.clone(),
            high: report.high,
            low: report.low,
        };
        self.state = Some(state.clone());
        Ok(StepResult { state, reward: report.reward, report, done })
    }

    fn ensure_running(&self) -> Result<()> {
        if self.state.is_none() {
            return Err(Error::Usage("step before reset".into()));
        }
        if self.slot >= self.snapshots.len() {
            return Err(Error::Usage("step after episode end".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_trace, SynthSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace(k: usize, t: usize, seed: u64) -> SceneTrace {
        synth_trace(&SynthSpec { users: k, slots: t, ..Default::default() }, seed).unwrap()
    }

    #[test]
    fn reset_initial_state() {
        let mut env = VrEnv::new(SystemParams::default()).unwrap();
        let s = env.reset(&trace(5, 10, 1), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let v = s.to_vec();
        assert_eq!(v.len(), 52);
        for i in EnvState::relevant_indices(5) {
            assert_eq!(v[i], 0.0);
        }
        assert!(env.reconstruction_hz().iter().all(|f| (1.5e9..=2.5e9).contains(f)));
    }

    #[test]
    fn reset_is_deterministic() {
        let tr = trace(5, 10, 1);
        let mut a = VrEnv::new(SystemParams::default()).unwrap();
        let mut b = a.clone();
        let sa = a.reset(&tr, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let sb = b.reset(&tr, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(a.reconstruction_hz(), b.reconstruction_hz());
    }

    #[test]
    fn masks_partition_state() {
        let mut all = EnvState::relevant_indices(5);
        all.extend(EnvState::irrelevant_indices(5));
        all.sort_unstable();
        assert_eq!(all, (0..52).collect::<Vec<_>>());
    }

    #[test]
    fn empty_trace_rejected() {
        let mut env = VrEnv::new(SystemParams::default()).unwrap();
        let empty = SceneTrace { slots: vec![] };
        assert!(env.reset(&empty, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn episode_length_and_done() {
        let mut env = VrEnv::new(SystemParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&trace(5, 100, 2), &mut rng).unwrap();
        let raw = RawAction::uniform(5, 0.4);
        let mut steps = 0;
        loop {
            let r = env.step(&raw, &mut rng).unwrap();
            steps += 1;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 100);
        assert!(matches!(env.step(&raw, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn overload_zeroes_qoe_and_flags() {
        // a starved user: tiny bandwidth share and full keyframes
        let mut env = VrEnv::new(SystemParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&trace(5, 3, 4), &mut rng).unwrap();
        let mut raw = RawAction::uniform(5, 0.99);
        raw.b_hat[0] = 1e-4;
        let r = env.step(&raw, &mut rng).unwrap();
        assert!(r.report.delays[0].total() > env.params().t_max);
        assert_eq!(r.report.qoe[0], 0.0);
        assert!(r.report.qoe_flags[0]);
        assert!(!r.report.delivered[0]);
    }

    #[test]
    fn identical_runs_identical_reports() {
        let tr = trace(5, 20, 9);
        let run = || {
            let mut env = VrEnv::new(SystemParams::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            env.reset(&tr, &mut rng).unwrap();
            let raw = RawAction::uniform(5, 0.35);
            (0..20).map(|_| env.step(&raw, &mut rng).unwrap().report).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn next_state_carries_slot_statistics() {
        let tr = trace(5, 5, 9);
        let mut env = VrEnv::new(SystemParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        env.reset(&tr, &mut rng).unwrap();
        let r = env.step(&RawAction::uniform(5, 0.3), &mut rng).unwrap();
        assert_eq!(r.state.qoe_prev, r.report.qoe);
        assert_eq!(r.state.delays[2], r.report.delays[2].as_array());
        assert_eq!(r.state.counts, attention_snapshot(&tr.slots[1]).unwrap().counts);
        assert_eq!(r.state.high, r.report.qoe.iter().cloned().fold(f64::MIN, f64::max));
    }
}
