//! Comparison policies and the evaluation loop shared by all of them.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::env::{keyframes_for_ratio, normalize_action, Action, QoEReport, RawAction, SystemParams, VrEnv};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::scene::{SceneTrace, LEVELS};
use crate::SimRng;

/// Serialized by display name, e.g. `"fixed_33"` or `"ps_cddpg"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyKind {
    /// Every frame of every character, no keyframing.
    Original,
    /// Every frame of the characters inside the field of view.
    AttentionOnly,
    /// A fixed keyframe share of the visible characters.
    FixedRatio(f64),
    Ddpg,
    CaiDdpgFullState,
    PsCddpg,
}

impl PolicyKind {
    pub const FIXED_RATIOS: [f64; 3] = [1.0 / 3.0, 0.5, 2.0 / 3.0];

    pub fn is_learned(&self) -> bool {
        matches!(self, PolicyKind::Ddpg | PolicyKind::CaiDdpgFullState | PolicyKind::PsCddpg)
    }

    /// The non-learned comparison set.
    pub fn baselines() -> Vec<PolicyKind> {
        let mut v = vec![PolicyKind::Original, PolicyKind::AttentionOnly];
        v.extend(Self::FIXED_RATIOS.iter().map(|&r| PolicyKind::FixedRatio(r)));
        v
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Original => write!(f, "original"),
            PolicyKind::AttentionOnly => write!(f, "attention_only"),
            PolicyKind::FixedRatio(r) if Self::FIXED_RATIOS.contains(r) => {
                write!(f, "fixed_{}", (r * 100.0).floor() as u32)
            }
            PolicyKind::FixedRatio(r) => write!(f, "fixed:{r}"),
            PolicyKind::Ddpg => write!(f, "ddpg"),
            PolicyKind::CaiDdpgFullState => write!(f, "cai_ddpg_fullstate"),
            PolicyKind::PsCddpg => write!(f, "ps_cddpg"),
        }
    }
}

impl From<PolicyKind> for String {
    fn from(k: PolicyKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// Accepts the display names plus `fixed_<percent>` and `fixed:<ratio>`.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "original" => PolicyKind::Original,
            "attention_only" => PolicyKind::AttentionOnly,
            "fixed_33" => PolicyKind::FixedRatio(1.0 / 3.0),
            "fixed_50" => PolicyKind::FixedRatio(0.5),
            "fixed_66" => PolicyKind::FixedRatio(2.0 / 3.0),
            "ddpg" => PolicyKind::Ddpg,
            "cai_ddpg_fullstate" => PolicyKind::CaiDdpgFullState,
            "ps_cddpg" => PolicyKind::PsCddpg,
            other => {
                let ratio = other
                    .strip_prefix("fixed:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| *r > 0.0 && *r <= 1.0)
                    .ok_or_else(|| Error::Usage(format!("unknown policy `{other}`")))?;
                PolicyKind::FixedRatio(ratio)
            }
        };
        Ok(kind)
    }
}

/// Action of a non-learned policy: uniform bandwidth and extraction CPU.
pub fn baseline_action(kind: PolicyKind, params: &SystemParams) -> Result<Action> {
    let k = params.users;
    let xi = params.fps;
    let (keyframes, transmitted, extraction) = match kind {
        PolicyKind::Original => (xi, [true; LEVELS], false),
        PolicyKind::AttentionOnly => (xi, [false, true, true, true], false),
        PolicyKind::FixedRatio(r) => (keyframes_for_ratio(r, xi), [false, true, true, true], true),
        learned => return Err(Error::Usage(format!("policy `{learned}` needs a trained actor"))),
    };
    Ok(Action {
        bandwidth: vec![params.b_max / k as f64; k],
        extraction_hz: vec![params.f_max / k as f64; k],
        keyframes: vec![[keyframes; LEVELS]; k],
        transmitted,
        extraction,
    })
}

/// A policy ready to act in a [`VrEnv`].
#[derive(Debug, Clone)]
pub enum Policy {
    Baseline(PolicyKind),
    Learned { kind: PolicyKind, actor: Mlp },
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Baseline(k) | Policy::Learned { kind: k, .. } => *k,
        }
    }

    pub fn name(&self) -> String {
        self.kind().to_string()
    }

    /// Allocation for the environment's current slot.
    pub fn action(&self, env: &VrEnv) -> Result<Action> {
        match self {
            Policy::Baseline(kind) => baseline_action(*kind, env.params()),
            Policy::Learned { actor, .. } => {
                let state = env.state().ok_or_else(|| Error::Usage("environment not reset".into()))?;
                let out = actor.forward_one(&state.features(env.params()))?;
                let clipped: Vec<f64> =
                    out.into_iter().map(|v| v.clamp(crate::agent::ACTION_MIN, crate::agent::ACTION_MAX)).collect();
                normalize_action(&RawAction::from_slice(&clipped, env.users())?, env.params())
            }
        }
    }
}

/// Resolves a kind into a policy; learned kinds need an actor.
pub fn policy_for(kind: PolicyKind, actor: Option<Mlp>) -> Result<Policy> {
    if kind.is_learned() {
        let actor = actor.ok_or_else(|| Error::Usage(format!("policy `{kind}` needs a trained model")))?;
        Ok(Policy::Learned { kind, actor })
    } else {
        Ok(Policy::Baseline(kind))
    }
}

/// Metrics of one policy on one trace under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub trace: usize,
    pub seed: u64,
    pub mean_reward: f64,
    pub mean_qoe: f64,
    pub hfqoe: f64,
    pub success_rate: f64,
    pub mean_delays: [f64; 4],
    pub per_user_qoe: Vec<f64>,
}

/// Mean and across-seed variance of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub seed_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub records: Vec<EvalRecord>,
    pub mean_reward: Stat,
    pub mean_qoe: Stat,
    pub hfqoe: Stat,
    pub success_rate: Stat,
    pub mean_delays: [Stat; 4],
}

/// Environment random stream for `(seed, trace)`; shared by all policies so
/// they face identical channels and client CPUs.
pub fn eval_rng(seed: u64, trace: usize) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(trace as u64 + 1);
    rng
}

/// Runs one episode and returns its per-slot reports.
pub fn rollout(policy: &Policy, env: &mut VrEnv, trace: &SceneTrace, rng: &mut SimRng) -> Result<Vec<QoEReport>> {
    env.reset(trace, rng)?;
    let mut reports = Vec::with_capacity(trace.len());
    loop {
        let action = policy.action(env)?;
        let r = env.step_action(&action, rng)?;
        reports.push(r.report);
        if r.done {
            return Ok(reports);
        }
    }
}

fn record_from(trace: usize, seed: u64, reports: &[QoEReport]) -> EvalRecord {
    let slots = reports.len().max(1) as f64;
    let users = reports.first().map_or(0, |r| r.qoe.len());
    let cells = (reports.len() * users).max(1) as f64;
    let mut delays = [0.0; 4];
    let mut per_user = vec![0.0; users];
    for r in reports {
        for (k, d) in r.delays.iter().enumerate() {
            for (acc, v) in delays.iter_mut().zip(d.as_array()) {
                *acc += v;
            }
            per_user[k] += r.qoe[k];
        }
    }
    EvalRecord {
        trace,
        seed,
        mean_reward: reports.iter().map(|r| r.reward).sum::<f64>() / slots,
        mean_qoe: reports.iter().map(|r| r.qoe.iter().sum::<f64>()).sum::<f64>() / cells,
        hfqoe: reports.last().map_or(1.0, |r| r.hfqoe),
        success_rate: reports.iter().map(|r| r.delivered.iter().filter(|&&d| d).count()).sum::<usize>() as f64 / cells,
        mean_delays: delays.map(|d| d / cells),
        per_user_qoe: per_user.iter().map(|q| q / slots).collect(),
    }
}

fn stat(records: &[EvalRecord], seeds: &[u64], metric: impl Fn(&EvalRecord) -> f64) -> Stat {
    let per_seed: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            let vals: Vec<f64> = records.iter().filter(|r| r.seed == s).map(&metric).collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        })
        .collect();
    let n = per_seed.len().max(1) as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let seed_var = if per_seed.len() > 1 {
        per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (per_seed.len() - 1) as f64
    } else {
        0.0
    };
    Stat { mean, seed_var }
}

/// Evaluates `policy` on every `(trace, seed)` pair.
pub fn evaluate(policy: &Policy, traces: &[SceneTrace], params: &SystemParams, seeds: &[u64]) -> Result<EvalSummary> {
    if traces.is_empty() {
        return Err(Error::domain("no evaluation traces"));
    }
    if seeds.is_empty() {
        return Err(Error::domain("no evaluation seeds"));
    }
    let mut env = VrEnv::new(params.clone())?;
    let mut records = Vec::with_capacity(traces.len() * seeds.len());
    for &seed in seeds {
        for (i, trace) in traces.iter().enumerate() {
            let reports = rollout(policy, &mut env, trace, &mut eval_rng(seed, i))?;
            records.push(record_from(i, seed, &reports));
        }
    }
    let delay = |j: usize| stat(&records, seeds, |r| r.mean_delays[j]);
    Ok(EvalSummary {
        policy: policy.name(),
        mean_reward: stat(&records, seeds, |r| r.mean_reward),
        mean_qoe: stat(&records, seeds, |r| r.mean_qoe),
        hfqoe: stat(&records, seeds, |r| r.hfqoe),
        success_rate: stat(&records, seeds, |r| r.success_rate),
        mean_delays: [delay(0), delay(1), delay(2), delay(3)],
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::data_volumes;
    use crate::scene::{synth_trace, AttentionSnapshot, SynthSpec};
    use proptest::prelude::*;

    fn traces(n: usize, slots: usize) -> Vec<SceneTrace> {
        (0..n).map(|i| synth_trace(&SynthSpec { slots, ..Default::default() }, i as u64).unwrap()).collect()
    }

    #[test]
    fn original_allocation() {
        let p = SystemParams::default();
        let a = baseline_action(PolicyKind::Original, &p).unwrap();
        assert!(a.bandwidth.iter().all(|&b| b == p.b_max / 5.0));
        assert!(a.keyframes.iter().flatten().all(|&f| f == 30));
        assert!(a.transmitted.iter().all(|&t| t));
        assert!(!a.extraction);
    }

    #[test]
    fn fixed_half() {
        let p = SystemParams::default();
        let a = baseline_action(PolicyKind::FixedRatio(0.5), &p).unwrap();
        assert!(a.keyframes.iter().all(|row| row[1..].iter().all(|&f| f == 15)));
        assert!(!a.transmitted[0]);
        assert!(a.extraction);
        assert_eq!(baseline_action(PolicyKind::FixedRatio(1.0 / 3.0), &p).unwrap().keyframes[0][3], 10);
        assert_eq!(baseline_action(PolicyKind::FixedRatio(2.0 / 3.0), &p).unwrap().keyframes[0][3], 20);
    }

    #[test]
    fn attention_only_blind_scene_sends_nothing() {
        let p = SystemParams::default();
        let a = baseline_action(PolicyKind::AttentionOnly, &p).unwrap();
        let snap = AttentionSnapshot { counts: vec![[4, 0, 0, 0]; 5] };
        assert!(data_volumes(&snap, &a, &p).iter().all(|v| v.download_bits == 0.0));
    }

    #[test]
    fn names_round_trip() {
        for k in PolicyKind::baselines().into_iter().chain([
            PolicyKind::Ddpg,
            PolicyKind::PsCddpg,
            PolicyKind::CaiDdpgFullState,
        ]) {
            let back: PolicyKind = k.to_string().parse().unwrap();
            assert_eq!(back.to_string(), k.to_string());
        }
        assert_eq!("fixed:0.25".parse::<PolicyKind>().unwrap(), PolicyKind::FixedRatio(0.25));
        assert!("bogus".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn learned_kind_needs_actor() {
        assert!(matches!(policy_for(PolicyKind::PsCddpg, None), Err(Error::Usage(_))));
        assert!(baseline_action(PolicyKind::Ddpg, &SystemParams::default()).is_err());
    }

    #[test]
    fn accounting_and_determinism() {
        let tr = traces(2, 5);
        let p = SystemParams::default();
        let pol = Policy::Baseline(PolicyKind::FixedRatio(0.5));
        let a = evaluate(&pol, &tr, &p, &[1, 2, 3]).unwrap();
        assert_eq!(a.records.len(), 6);
        assert_eq!(a, evaluate(&pol, &tr, &p, &[1, 2, 3]).unwrap());
        assert!(a.success_rate.mean >= 0.0 && a.success_rate.mean <= 1.0);
    }

    #[test]
    fn original_fails_more_than_fixed() {
        let tr = traces(4, 30);
        let p = SystemParams::default();
        let orig = evaluate(&Policy::Baseline(PolicyKind::Original), &tr, &p, &[0]).unwrap();
        let fixed = evaluate(&Policy::Baseline(PolicyKind::FixedRatio(1.0 / 3.0)), &tr, &p, &[0]).unwrap();
        assert!(orig.success_rate.mean < fixed.success_rate.mean);
    }

    #[test]
    fn learned_policy_actions_are_feasible() {
        let mut rng = SimRng::seed_from_u64(0);
        let actor = Mlp::new(&[52, 8, 30], crate::nn::Activation::Sigmoid, &mut rng).unwrap();
        let pol = policy_for(PolicyKind::PsCddpg, Some(actor)).unwrap();
        let p = SystemParams::default();
        let mut env = VrEnv::new(p.clone()).unwrap();
        env.reset(&traces(1, 3)[0], &mut rng).unwrap();
        let a = pol.action(&env).unwrap();
        assert!((a.bandwidth.iter().sum::<f64>() / p.b_max - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn attention_only_never_exceeds_original(counts in prop::collection::vec(prop::array::uniform4(0u32..5), 5)) {
            let p = SystemParams::default();
            let snap = AttentionSnapshot { counts };
            let o = data_volumes(&snap, &baseline_action(PolicyKind::Original, &p).unwrap(), &p);
            let a = data_volumes(&snap, &baseline_action(PolicyKind::AttentionOnly, &p).unwrap(), &p);
            for (x, y) in a.iter().zip(&o) {
                prop_assert!(x.download_bits <= y.download_bits);
            }
        }

        #[test]
        fn baselines_feasible(ratio in 0.01..1.0f64, users in 2usize..6) {
            let p = SystemParams::for_users(users);
            for kind in [PolicyKind::Original, PolicyKind::AttentionOnly, PolicyKind::FixedRatio(ratio)] {
                let a = baseline_action(kind, &p).unwrap();
                prop_assert!((a.bandwidth.iter().sum::<f64>() / p.b_max - 1.0).abs() < 1e-9);
                prop_assert!((a.extraction_hz.iter().sum::<f64>() / p.f_max - 1.0).abs() < 1e-9);
                prop_assert!(a.keyframes.iter().flatten().all(|&f| (2..=p.fps).contains(&f)));
            }
        }
    }
}
