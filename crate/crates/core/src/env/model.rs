//! Closed-form slot model: data volumes, latency terms, QoE, fairness, reward.

use serde::{Deserialize, Serialize};

use super::{Action, SystemParams};
use crate::scene::{AttentionSnapshot, LEVELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataVolumes {
    pub upload_bits: f64,
    pub download_bits: f64,
}

/// Per-user latency terms in seconds. Infinite values mark delivery failure
/// caused by a zero rate or frequency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub t_u: f64,
    pub t_e: f64,
    pub t_d: f64,
    pub t_r: f64,
}

impl DelayBreakdown {
    pub fn total(&self) -> f64 {
        self.t_u + self.t_e + self.t_d + self.t_r
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.t_u, self.t_e, self.t_d, self.t_r]
    }
}

/// Sum over transmitted levels of `N_{k,a} * weight(F_{k,a})`.
fn transmitted_sum(counts: &[u32; LEVELS], action: &Action, k: usize, weight: impl Fn(f64) -> f64) -> f64 {
    (0..LEVELS)
        .filter(|&a| action.transmitted[a])
        .map(|a| f64::from(counts[a]) * weight(f64::from(action.keyframes[k][a])))
        .sum()
}

/// Upload and download volume per user, bits.
pub fn data_volumes(snapshot: &AttentionSnapshot, action: &Action, params: &SystemParams) -> Vec<DataVolumes> {
    let per_frame = params.frame_bits() * params.slot_seconds;
    snapshot
        .counts
        .iter()
        .enumerate()
        .map(|(k, counts)| DataVolumes {
            upload_bits: params.xi() * per_frame,
            download_bits: transmitted_sum(counts, action, k, |f| f) * per_frame,
        })
        .collect()
}

/// `(W_u + W_d) / (omega R)`; infinite for a zero rate with data to send.
pub fn communication_latency(total_bits: f64, compression: f64, rate: f64) -> f64 {
    if total_bits == 0.0 {
        0.0
    } else if rate > 0.0 {
        total_bits / (compression * rate)
    } else {
        f64::INFINITY
    }
}

/// `cycles_per_unit * workload / freq`; infinite for a zero frequency with work to do.
pub fn processing_latency(cycles_per_unit: f64, workload_units: f64, freq: f64) -> f64 {
    if workload_units == 0.0 {
        0.0
    } else if freq > 0.0 {
        cycles_per_unit * workload_units / freq
    } else {
        f64::INFINITY
    }
}

/// Latency terms for every user.
///
/// `rates` are the users' Shannon rates and `reconstruction_hz` their client
/// CPU frequencies. The combined communication delay is split into upload and
/// download in proportion to the two volumes.
pub fn latency_breakdown(
    volumes: &[DataVolumes],
    action: &Action,
    rates: &[f64],
    reconstruction_hz: &[f64],
    snapshot: &AttentionSnapshot,
    params: &SystemParams,
) -> Vec<DelayBreakdown> {
    let per_frame = params.frame_units() * params.slot_seconds;
    let xi = params.xi();
    volumes
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let total_bits = v.upload_bits + v.download_bits;
            let comm = communication_latency(total_bits, params.compression, rates[k]);
            let (t_u, t_d) = if total_bits == 0.0 {
                (0.0, 0.0)
            } else if comm.is_infinite() {
                let side = |w: f64| if w > 0.0 { f64::INFINITY } else { 0.0 };
                (side(v.upload_bits), side(v.download_bits))
            } else {
                (comm * v.upload_bits / total_bits, comm * v.download_bits / total_bits)
            };

            let counts = &snapshot.counts[k];
            let t_e = if action.extraction {
                let work = transmitted_sum(counts, action, k, |f| f) * per_frame;
                processing_latency(params.c_e, work, action.extraction_hz[k])
            } else {
                0.0
            };
            let reconstruct = transmitted_sum(counts, action, k, |f| xi - f) * per_frame;
            let render = xi * per_frame;
            let cycles = params.c_r1 * reconstruct + params.c_r2 * render;
            let t_r = processing_latency(1.0, cycles, reconstruction_hz[k]);
            DelayBreakdown { t_u, t_e, t_d, t_r }
        })
        .collect()
}

/// Per-user QoE: zero on delivery failure, otherwise the latency headroom
/// times the attention-weighted log keyframe utility.
pub fn qoe(
    snapshot: &AttentionSnapshot,
    action: &Action,
    delays: &[DelayBreakdown],
    params: &SystemParams,
) -> Vec<f64> {
    snapshot
        .counts
        .iter()
        .enumerate()
        .map(|(k, counts)| {
            let n_k = params.users.saturating_sub(1) as f64;
            let t = delays[k].total();
            if n_k == 0.0 || !(t < params.t_max) {
                return 0.0;
            }
            let utility: f64 = (0..LEVELS)
                .map(|a| {
                    let f = f64::from(action.keyframes[k][a]);
                    a as f64 * f64::from(counts[a]) / n_k * (f * params.slot_seconds / 2.0).ln()
                })
                .sum();
            (1.0 - t / params.t_max) * utility
        })
        .collect()
}

/// Running statistics behind the horizon-fairness metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessTracker {
    slots: usize,
    sums: Vec<f64>,
    high: f64,
    low: f64,
}

impl FairnessTracker {
    pub fn new(users: usize) -> Self {
        FairnessTracker { slots: 0, sums: vec![0.0; users], high: f64::NEG_INFINITY, low: f64::INFINITY }
    }

    pub fn observe(&mut self, qoe: &[f64]) {
        self.slots += 1;
        for (s, q) in self.sums.iter_mut().zip(qoe) {
            *s += q;
            self.high = self.high.max(*q);
            self.low = self.low.min(*q);
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Per-user mean QoE so far (zeros before any observation).
    pub fn averages(&self) -> Vec<f64> {
        let n = self.slots.max(1) as f64;
        self.sums.iter().map(|s| s / n).collect()
    }

    /// Running maximum, zero before any observation.
    pub fn high(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.high
        }
    }

    pub fn low(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.low
        }
    }

    /// Population standard deviation of the per-user averages.
    pub fn sigma_star(&self) -> f64 {
        population_std(&self.averages())
    }

    /// `1 - 2 sigma* / (H - L)`, defined as 1 when `H == L`.
    pub fn hfqoe(&self) -> f64 {
        hfqoe_from(self.sigma_star(), self.high(), self.low())
    }
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn hfqoe_from(sigma_star: f64, high: f64, low: f64) -> f64 {
    if high - low <= 0.0 {
        1.0
    } else {
        1.0 - 2.0 * sigma_star / (high - low)
    }
}

/// Penalty flags and reward for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub qoe_flags: Vec<bool>,
    pub hfqoe_flag: bool,
    pub reward: f64,
}

/// `sum QoE - w1 * #(QoE < QoE_th) - w2 * [hfQoE < hfQoE_th]`.
pub fn reward(qoe: &[f64], hfqoe: f64, params: &SystemParams) -> RewardBreakdown {
    let qoe_flags: Vec<bool> = qoe.iter().map(|&q| q < params.qoe_th).collect();
    let hfqoe_flag = hfqoe < params.hfqoe_th;
    let violations = qoe_flags.iter().filter(|&&f| f).count() as f64;
    let reward = qoe.iter().sum::<f64>() - params.w1 * violations - if hfqoe_flag { params.w2 } else { 0.0 };
    RewardBreakdown { qoe_flags, hfqoe_flag, reward }
}
