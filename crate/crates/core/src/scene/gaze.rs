use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MotionClip, SceneBounds, ScenePose, SceneTrace};
use crate::error::{Error, Result};

/// Joint names used to derive a user's facing direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointNames {
    pub head: String,
    pub left_shoulder: String,
    pub right_shoulder: String,
}

impl Default for JointNames {
    fn default() -> Self {
        JointNames { head: "Head".into(), left_shoulder: "LeftShoulder".into(), right_shoulder: "RightShoulder".into() }
    }
}

/// Extracts a ground-plane pose from one frame of a clip.
///
/// The file is assumed Y-up; the ground plane is `(x, z)`. Position is the
/// root joint scaled by `scale` (file units to meters). Gaze is the horizontal
/// normal of the shoulder axis pointing towards the head. When the head sits
/// exactly over the shoulder midpoint the right-handed normal `up × (R − L)`
/// is used.
pub fn gaze_and_position(
    clip: &MotionClip,
    frame: usize,
    names: &JointNames,
    scale: f64,
    id: u32,
) -> Result<ScenePose> {
    let lookup = |n: &str| clip.joint_index(n);
    let (head, left, right) = match (lookup(&names.head), lookup(&names.left_shoulder), lookup(&names.right_shoulder)) {
        (Some(h), Some(l), Some(r)) => (h, l, r),
        (h, l, r) => {
            let missing = [(h, &names.head), (l, &names.left_shoulder), (r, &names.right_shoulder)]
                .into_iter()
                .filter(|(i, _)| i.is_none())
                .map(|(_, n)| n.clone())
                .collect();
            return Err(Error::MissingJoints { missing });
        }
    };

    let p = clip.forward_kinematics(frame)?;
    let axis = [p[right][0] - p[left][0], p[right][2] - p[left][2]];
    let len = axis[0].hypot(axis[1]);
    if len < 1e-12 {
        return Err(Error::domain("shoulder joints coincide in the ground plane"));
    }
    let mut normal = [axis[1] / len, -axis[0] / len];
    let mid = [(p[right][0] + p[left][0]) / 2.0, (p[right][2] + p[left][2]) / 2.0];
    let to_head = [p[head][0] - mid[0], p[head][2] - mid[1]];
    if normal[0] * to_head[0] + normal[1] * to_head[1] < 0.0 {
        normal = [-normal[0], -normal[1]];
    }
    ScenePose::new(id, [p[0][0] * scale, p[0][2] * scale], normal)
}

/// Builds a multi-user trace from motion clips, one clip per user.
///
/// Each clip gets a random rotation about the vertical axis and a random
/// translation; positions are clamped to `bounds`. Slot `t` samples the frame
/// nearest to `t * slot_seconds`.
pub fn trace_from_clips<R: Rng + ?Sized>(
    clips: &[MotionClip],
    names: &JointNames,
    scale: f64,
    bounds: SceneBounds,
    slots: usize,
    slot_seconds: f64,
    rng: &mut R,
) -> Result<SceneTrace> {
    if clips.len() < 2 {
        return Err(Error::domain("need at least two clips"));
    }
    let mut per_user = Vec::with_capacity(clips.len());
    for (u, clip) in clips.iter().enumerate() {
        let needed = ((slots.saturating_sub(1)) as f64 * slot_seconds / clip.frame_time).round() as usize + 1;
        if clip.frame_count() < needed {
            return Err(Error::domain(format!(
                "clip {u} has {} frames, {needed} needed for {slots} slots",
                clip.frame_count()
            )));
        }
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        let shift = [rng.random_range(0.0..bounds.width), rng.random_range(0.0..bounds.height)];
        let first = gaze_and_position(clip, 0, names, scale, u as u32)?;
        let mut poses = Vec::with_capacity(slots);
        for t in 0..slots {
            let frame = (t as f64 * slot_seconds / clip.frame_time).round() as usize;
            let raw = gaze_and_position(clip, frame, names, scale, u as u32)?;
            let rel = [raw.pos[0] - first.pos[0], raw.pos[1] - first.pos[1]];
            let pos = [c * rel[0] - s * rel[1] + shift[0], s * rel[0] + c * rel[1] + shift[1]];
            let gaze = [c * raw.gaze[0] - s * raw.gaze[1], s * raw.gaze[0] + c * raw.gaze[1]];
            poses.push(ScenePose::new(u as u32, bounds.clamp(pos), gaze)?);
        }
        per_user.push(poses);
    }
    let slots = (0..slots).map(|t| per_user.iter().map(|p| p[t]).collect()).collect();
    SceneTrace::new(slots)
}
