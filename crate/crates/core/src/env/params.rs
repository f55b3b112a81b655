use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;

/// System constants of the multi-user VR interaction model.
///
/// Data volumes are tracked in bits. Processing workloads for keyframe
/// extraction and reconstruction are counted in units of
/// `compute_unit_bits` bits, so the `c_*` coefficients are cycles per unit
/// (per byte by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub users: usize,
    /// Frames per second, `xi`.
    pub fps: u32,
    /// Size of one frame of one character, bytes.
    pub frame_bytes: f64,
    /// Slot duration, seconds.
    pub slot_seconds: f64,
    /// Extraction cycles per processing unit.
    pub c_e: f64,
    /// Reconstruction cycles per processing unit.
    pub c_r1: f64,
    /// Rendering cycles per processing unit.
    pub c_r2: f64,
    pub compute_unit_bits: f64,
    /// Compression ratio of motion data.
    pub compression: f64,
    /// Latency threshold, seconds.
    pub t_max: f64,
    /// Total bandwidth, Hz.
    pub b_max: f64,
    /// Total server extraction frequency, Hz.
    pub f_max: f64,
    /// Range of client reconstruction frequency, Hz, sampled per episode.
    pub f_r_min: f64,
    pub f_r_max: f64,
    pub qoe_th: f64,
    pub hfqoe_th: f64,
    /// Penalty per user below `qoe_th`.
    pub w1: f64,
    /// Penalty when fairness falls below `hfqoe_th`.
    pub w2: f64,
    /// Whether the adaptive scheme sends blind-spot characters.
    pub blind_spot_transmitted: bool,
    pub channel: ChannelParams,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            users: 5,
            fps: 30,
            frame_bytes: 10_000.0,
            slot_seconds: 1.0,
            c_e: 30.0,
            c_r1: 50.0,
            c_r2: 240.0,
            compute_unit_bits: 8.0,
            compression: 3.0,
            t_max: 0.150,
            b_max: 10e6,
            f_max: 10e9,
            f_r_min: 1.5e9,
            f_r_max: 2.5e9,
            qoe_th: 0.2,
            hfqoe_th: 0.6,
            w1: 0.5,
            w2: 0.5,
            blind_spot_transmitted: false,
            channel: ChannelParams::default(),
        }
    }
}

impl SystemParams {
    /// Defaults for `k` users, taking the first `k` default user positions.
    pub fn for_users(k: usize) -> Self {
        SystemParams { users: k, channel: ChannelParams::for_users(k), ..SystemParams::default() }
    }

    pub fn frame_bits(&self) -> f64 {
        self.frame_bytes * 8.0
    }

    /// Frame size in processing units.
    pub fn frame_units(&self) -> f64 {
        self.frame_bits() / self.compute_unit_bits
    }

    pub fn xi(&self) -> f64 {
        f64::from(self.fps)
    }

    /// Largest attainable per-user QoE, `3 ln(xi dt / 2)`.
    pub fn qoe_upper_bound(&self) -> f64 {
        3.0 * (self.xi() * self.slot_seconds / 2.0).ln()
    }

    /// Checks invariants; on failure returns `(key, message)` relative to the
    /// `environment` section.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let positive = [
            ("users", self.users as f64),
            ("fps", f64::from(self.fps)),
            ("frame_bytes", self.frame_bytes),
            ("slot_seconds", self.slot_seconds),
            ("c_e", self.c_e),
            ("c_r1", self.c_r1),
            ("c_r2", self.c_r2),
            ("compute_unit_bits", self.compute_unit_bits),
            ("compression", self.compression),
            ("t_max", self.t_max),
            ("b_max", self.b_max),
            ("f_max", self.f_max),
            ("f_r_min", self.f_r_min),
            ("f_r_max", self.f_r_max),
            ("qoe_th", self.qoe_th),
            ("hfqoe_th", self.hfqoe_th),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err((key.into(), format!("must be positive, got {v}")));
            }
        }
        if self.users < 2 {
            return Err(("users".into(), "need at least 2 users".into()));
        }
        if self.fps < 2 {
            return Err(("fps".into(), "need at least 2 frames per second".into()));
        }
        for (key, v) in [("w1", self.w1), ("w2", self.w2)] {
            if !(v >= 0.0) {
                return Err((key.into(), format!("must be non-negative, got {v}")));
            }
        }
        if self.t_max >= self.slot_seconds {
            return Err(("t_max".into(), "must be shorter than the slot".into()));
        }
        if self.f_r_min > self.f_r_max {
            return Err(("f_r_min".into(), "exceeds f_r_max".into()));
        }
        if self.channel.user_distances.len() != self.users {
            return Err((
                "channel.user_distances".into(),
                format!("has {} entries for {} users", self.channel.user_distances.len(), self.users),
            ));
        }
        self.channel.validate().map_err(|(k, m)| (format!("channel.{k}"), m))
    }
}
