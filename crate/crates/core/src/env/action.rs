use serde::{Deserialize, Serialize};

use super::SystemParams;
use crate::error::{Error, Result};
use crate::scene::LEVELS;

/// Actor output before normalization; every component lies in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAction {
    pub b_hat: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub keyframe_hat: Vec<[f64; LEVELS]>,
}

impl RawAction {
    /// Action-vector length for `k` users: `2k + 4k`.
    pub fn dim(k: usize) -> usize {
        2 * k + LEVELS * k
    }

    /// Splits a flat vector laid out as `[b_hat; f_hat; F_hat row-major]`.
    pub fn from_slice(v: &[f64], k: usize) -> Result<Self> {
        if v.len() != Self::dim(k) {
            return Err(Error::Shape { expected: Self::dim(k), actual: v.len() });
        }
        let keyframe_hat = v[2 * k..].chunks_exact(LEVELS).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        Ok(RawAction { b_hat: v[..k].to_vec(), f_hat: v[k..2 * k].to_vec(), keyframe_hat })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.b_hat.len()));
        v.extend_from_slice(&self.b_hat);
        v.extend_from_slice(&self.f_hat);
        for row in &self.keyframe_hat {
            v.extend_from_slice(row);
        }
        v
    }

    /// A constant raw action.
    pub fn uniform(k: usize, value: f64) -> Self {
        RawAction { b_hat: vec![value; k], f_hat: vec![value; k], keyframe_hat: vec![[value; LEVELS]; k] }
    }
}

/// A feasible allocation for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Bandwidth per user, Hz.
    pub bandwidth: Vec<f64>,
    /// Server extraction frequency per user, Hz.
    pub extraction_hz: Vec<f64>,
    /// Keyframes per second per user and attention level.
    pub keyframes: Vec<[u32; LEVELS]>,
    /// Which attention levels are transmitted at all.
    pub transmitted: [bool; LEVELS],
    /// Whether keyframes are extracted on the server (false means full frames).
    pub extraction: bool,
}

impl Action {
    pub fn users(&self) -> usize {
        self.bandwidth.len()
    }
}

/// Keyframe count for a ratio: `ceil(ratio * xi)` clamped to `[2, xi]`.
pub fn keyframes_for_ratio(ratio: f64, fps: u32) -> u32 {
    let xi = f64::from(fps);
    ((ratio * xi).ceil()).clamp(2.0, xi) as u32
}

/// Maps a raw actor output to a feasible allocation.
///
/// Bandwidth and extraction frequency are shares of `b_max` and `f_max`;
/// keyframe ratios are discretized by `ceil(F_hat * xi)` and clamped to
/// `[2, xi]`.
pub fn normalize_action(raw: &RawAction, params: &SystemParams) -> Result<Action> {
    let k = params.users;
    if raw.b_hat.len() != k || raw.f_hat.len() != k || raw.keyframe_hat.len() != k {
        return Err(Error::Shape { expected: RawAction::dim(k), actual: raw.to_vec().len() });
    }
    let in_open_unit = |x: &f64| *x > 0.0 && *x < 1.0;
    if !raw.b_hat.iter().chain(&raw.f_hat).chain(raw.keyframe_hat.iter().flatten()).all(in_open_unit) {
        return Err(Error::domain("raw action components must lie in (0, 1)"));
    }
    let share = |v: &[f64], total: f64| -> Result<Vec<f64>> {
        let s: f64 = v.iter().sum();
        if !(s > 0.0) {
            return Err(Error::domain("raw allocation sums to zero"));
        }
        Ok(v.iter().map(|x| total * x / s).collect())
    };
    let keyframes = raw.keyframe_hat.iter().map(|row| row.map(|r| keyframes_for_ratio(r, params.fps))).collect();
    Ok(Action {
        bandwidth: share(&raw.b_hat, params.b_max)?,
        extraction_hz: share(&raw.f_hat, params.f_max)?,
        keyframes,
        transmitted: [params.blind_spot_transmitted, true, true, true],
        extraction: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_shares() {
        let p = SystemParams::default();
        let a = normalize_action(&RawAction::uniform(5, 0.3), &p).unwrap();
        for b in &a.bandwidth {
            assert!(((b - p.b_max / 5.0) / p.b_max).abs() < 1e-12);
        }
    }

    #[test]
    fn two_user_shares() {
        let p = SystemParams::for_users(2);
        let mut raw = RawAction::uniform(2, 0.5);
        raw.b_hat = vec![0.9, 0.3];
        let a = normalize_action(&raw, &p).unwrap();
        assert!((a.bandwidth[0] / p.b_max - 0.75).abs() < 1e-12);
        assert!((a.bandwidth[1] / p.b_max - 0.25).abs() < 1e-12);
    }

    #[test]
    fn keyframe_ceiling_and_clamp() {
        assert_eq!(keyframes_for_ratio(0.5, 30), 15);
        assert_eq!(keyframes_for_ratio(0.01, 30), 2);
        assert_eq!(keyframes_for_ratio(0.999, 30), 30);
        assert_eq!(keyframes_for_ratio(1.0 / 3.0, 30), 10);
        assert_eq!(keyframes_for_ratio(2.0 / 3.0, 30), 20);
    }

    #[test]
    fn rejects_out_of_range() {
        let p = SystemParams::default();
        let mut raw = RawAction::uniform(5, 0.5);
        raw.f_hat[2] = 0.0;
        assert!(normalize_action(&raw, &p).is_err());
        raw.f_hat[2] = 1.0;
        assert!(normalize_action(&raw, &p).is_err());
    }

    #[test]
    fn flat_layout_round_trip() {
        let v: Vec<f64> = (0..30).map(|i| (i as f64 + 0.5) / 31.0).collect();
        let raw = RawAction::from_slice(&v, 5).unwrap();
        assert_eq!(raw.keyframe_hat[1][2], v[10 + 4 + 2]);
        assert_eq!(raw.to_vec(), v);
        assert!(RawAction::from_slice(&v[..29], 5).is_err());
    }

    proptest! {
        #[test]
        fn feasibility(v in prop::collection::vec(1e-6..(1.0 - 1e-6f64), 30)) {
            let p = SystemParams::default();
            let a = normalize_action(&RawAction::from_slice(&v, 5).unwrap(), &p).unwrap();
            let sb: f64 = a.bandwidth.iter().sum();
            let sf: f64 = a.extraction_hz.iter().sum();
            prop_assert!(((sb - p.b_max) / p.b_max).abs() < 1e-9);
            prop_assert!(((sf - p.f_max) / p.f_max).abs() < 1e-9);
            for f in a.keyframes.iter().flatten() {
                prop_assert!((2..=30).contains(f));
            }
        }
    }
}
