//! Virtual-scene poses and visual-attention classification.

pub mod bvh;
mod gaze;
mod synth;
mod trace_io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bvh::{parse_bvh, Channel, Joint, MotionClip};
pub use gaze::{gaze_and_position, trace_from_clips, JointNames};
pub use synth::{synth_trace, SynthSpec};
pub use trace_io::{parse_trace_str, read_trace, read_trace_dir, write_trace, write_trace_string};

/// Number of attention levels (blind spot, monocular, peripheral, central).
pub const LEVELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub width: f64,
    pub height: f64,
}

impl Default for SceneBounds {
    fn default() -> Self {
        SceneBounds { width: 10.0, height: 10.0 }
    }
}

impl SceneBounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.width).contains(&p[0]) && (0.0..=self.height).contains(&p[1])
    }

    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(0.0, self.width), p[1].clamp(0.0, self.height)]
    }
}

/// A user's avatar in the shared scene during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    pub id: u32,
    pub pos: [f64; 2],
    pub gaze: [f64; 2],
}

impl ScenePose {
    /// Builds a pose, normalizing `gaze` to unit length.
    pub fn new(id: u32, pos: [f64; 2], gaze: [f64; 2]) -> Result<Self> {
        let n = gaze[0].hypot(gaze[1]);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::domain(format!("gaze of user {id} has zero length")));
        }
        Ok(ScenePose { id, pos, gaze: [gaze[0] / n, gaze[1] / n] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTrace {
    pub slots: Vec<Vec<ScenePose>>,
}

impl SceneTrace {
    pub fn new(slots: Vec<Vec<ScenePose>>) -> Result<Self> {
        let k = slots.first().map(|s| s.len()).ok_or_else(|| Error::domain("trace has no slots"))?;
        if let Some((t, s)) = slots.iter().enumerate().find(|(_, s)| s.len() != k) {
            return Err(Error::domain(format!("slot {t} has {} poses, expected {k}", s.len())));
        }
        Ok(SceneTrace { slots })
    }

    pub fn users(&self) -> usize {
        self.slots.first().map_or(0, |s| s.len())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Per-user character counts by attention level, `counts[k][a] = N_{k,a}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionSnapshot {
    pub counts: Vec<[u32; LEVELS]>,
}

impl AttentionSnapshot {
    pub fn users(&self) -> usize {
        self.counts.len()
    }

    /// `N_k`, the number of characters user `k` observes.
    pub fn total(&self, k: usize) -> u32 {
        self.counts[k].iter().sum()
    }
}

/// Maps the horizontal angle between gaze and bearing to an attention level.
///
/// Intervals are half-open at the upper bound: `[0,30) -> 3`, `[30,60) -> 2`,
/// `[60,90) -> 1`, `[90,180] -> 0`.
pub fn attention_level(angle_deg: f64) -> Result<usize> {
    if !(0.0..=180.0).contains(&angle_deg) {
        return Err(Error::domain(format!("angle {angle_deg} outside [0, 180]")));
    }
    Ok(match angle_deg {
        a if a < 30.0 => 3,
        a if a < 60.0 => 2,
        a if a < 90.0 => 1,
        _ => 0,
    })
}

/// Angle in degrees between `gaze` and the direction from `from` to `to`.
/// Returns `None` for coincident positions.
pub fn bearing_angle(from: [f64; 2], gaze: [f64; 2], to: [f64; 2]) -> Option<f64> {
    let v = [to[0] - from[0], to[1] - from[1]];
    if v[0] == 0.0 && v[1] == 0.0 {
        return None;
    }
    let cross = gaze[0] * v[1] - gaze[1] * v[0];
    let dot = gaze[0] * v[0] + gaze[1] * v[1];
    Some(cross.abs().atan2(dot).to_degrees().clamp(0.0, 180.0))
}

/// Classifies every other avatar in a slot for every user.
pub fn attention_snapshot(poses: &[ScenePose]) -> Result<AttentionSnapshot> {
    if poses.len() < 2 {
        return Err(Error::domain("attention snapshot needs at least two users"));
    }
    let mut counts = vec![[0u32; LEVELS]; poses.len()];
    for (k, me) in poses.iter().enumerate() {
        for (j, other) in poses.iter().enumerate() {
            if j == k {
                continue;
            }
            let level = match bearing_angle(me.pos, me.gaze, other.pos) {
                Some(angle) => attention_level(angle)?,
                // coincident avatars get central attention
                None => 3,
            };
            counts[k][level] += 1;
        }
    }
    Ok(AttentionSnapshot { counts })
}
