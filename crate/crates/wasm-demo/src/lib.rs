//! Browser demo: scene attention, per-baseline latency versus bandwidth and
//! the link-rate curve. Every export returns a JSON string.

use rand::SeedableRng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use vrqoe::baselines::{baseline_action, PolicyKind};
use vrqoe::channel::{path_loss_db, transmission_rate, ChannelParams, ChannelRealization};
use vrqoe::env::{SystemParams, VrEnv};
use vrqoe::scene::{attention_snapshot, synth_trace, SynthSpec};
use vrqoe::units::db_to_linear;
use vrqoe::{Result, SimRng};

#[derive(Debug, Serialize)]
pub struct Avatar {
    pub pos: [f64; 2],
    pub gaze: [f64; 2],
    /// Characters seen at each attention level, blind spot first.
    pub counts: [u32; 4],
}

#[derive(Debug, Serialize)]
pub struct BandwidthPoint {
    pub b_mhz: f64,
    pub latency_ms: f64,
    pub qoe: f64,
    pub success: f64,
    pub reward: f64,
}

#[derive(Debug, Serialize)]
pub struct PolicyCurve {
    pub policy: String,
    pub points: Vec<BandwidthPoint>,
}

#[derive(Debug, Serialize)]
pub struct RatePoint {
    pub distance_m: f64,
    pub path_loss_db: f64,
    pub rate_mbps: f64,
}

/// First slot of a seeded synthetic scene with each avatar's attention counts.
pub fn scene(seed: u64, users: usize) -> Result<Vec<Avatar>> {
    let trace = synth_trace(&SynthSpec { users, slots: 1, ..SynthSpec::default() }, seed)?;
    let poses = &trace.slots[0];
    let snap = attention_snapshot(poses)?;
    Ok(poses.iter().zip(&snap.counts).map(|(p, c)| Avatar { pos: p.pos, gaze: p.gaze, counts: *c }).collect())
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| lo + step * i as f64)
}

/// One slot of every baseline on a seeded scene under the mean channel, for
/// total bandwidths spread over `[lo_mhz, hi_mhz]`.
pub fn bandwidth_sweep(seed: u64, lo_mhz: f64, hi_mhz: f64, points: usize) -> Result<Vec<PolicyCurve>> {
    let base = SystemParams::default();
    let trace = synth_trace(&SynthSpec { users: base.users, slots: 1, ..SynthSpec::default() }, seed)?;
    let channel = ChannelRealization::deterministic(&base.channel)?;
    PolicyKind::baselines()
        .into_iter()
        .map(|kind| {
            let points = linspace(lo_mhz, hi_mhz, points)
                .map(|b_mhz| {
                    let params = SystemParams { b_max: b_mhz * 1e6, ..base.clone() };
                    let mut env = VrEnv::new(params)?;
                    env.reset(&trace, &mut SimRng::seed_from_u64(seed))?;
                    let action = baseline_action(kind, env.params())?;
                    let r = env.step_with_channel(&action, &channel)?.report;
                    let latency = r.delays.iter().map(|d| d.total()).sum::<f64>() / r.delays.len() as f64;
                    Ok(BandwidthPoint {
                        b_mhz,
                        latency_ms: latency * 1e3,
                        qoe: r.mean_qoe(),
                        success: r.success_rate(),
                        reward: r.reward,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(PolicyCurve { policy: kind.to_string(), points })
        })
        .collect()
}

/// Path loss without shadowing and the Shannon rate with unit fading.
pub fn rate_curve(b_mhz: f64, max_distance: f64, points: usize) -> Result<Vec<RatePoint>> {
    let params = ChannelParams::default();
    linspace(params.d0 * 2.0, max_distance, points)
        .map(|d| {
            let pl = path_loss_db(d, &params, 0.0)?;
            let rate = transmission_rate(b_mhz * 1e6, &params, db_to_linear(-pl))?;
            Ok(RatePoint { distance_m: d, path_loss_db: pl, rate_mbps: rate / 1e6 })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T>) -> Result<String, JsValue> {
    r.and_then(|v| Ok(serde_json::to_string(&v)?)).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = sceneSnapshot)]
pub fn scene_snapshot(seed: u32, users: u32) -> Result<String, JsValue> {
    to_js(scene(u64::from(seed), users as usize))
}

#[wasm_bindgen(js_name = bandwidthSweep)]
pub fn bandwidth_sweep_js(seed: u32, lo_mhz: f64, hi_mhz: f64, points: u32) -> Result<String, JsValue> {
    to_js(bandwidth_sweep(u64::from(seed), lo_mhz, hi_mhz, points as usize))
}

#[wasm_bindgen(js_name = rateCurve)]
pub fn rate_curve_js(b_mhz: f64, max_distance: f64, points: u32) -> Result<String, JsValue> {
    to_js(rate_curve(b_mhz, max_distance, points as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_counts_cover_others() {
        let avatars = scene(4, 5).unwrap();
        assert_eq!(avatars.len(), 5);
        assert!(avatars.iter().all(|a| a.counts.iter().sum::<u32>() == 4));
    }

    #[test]
    fn more_bandwidth_never_slower() {
        let curves = bandwidth_sweep(1, 2.0, 20.0, 5).unwrap();
        assert_eq!(curves.len(), 5);
        for c in &curves {
            assert!(c.points.windows(2).all(|w| w[1].latency_ms <= w[0].latency_ms + 1e-9), "{}", c.policy);
        }
    }

    #[test]
    fn rate_falls_with_distance() {
        let pts = rate_curve(2.0, 500.0, 20).unwrap();
        assert!(pts.windows(2).all(|w| w[1].rate_mbps < w[0].rate_mbps && w[1].path_loss_db > w[0].path_loss_db));
        assert!(rate_curve(-1.0, 500.0, 3).is_err());
    }
}
