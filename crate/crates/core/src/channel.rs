//! Sub-6 GHz link model: log-distance path loss with log-normal shadowing,
//! Rayleigh small-scale fading and the Shannon rate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_watts};

/// Physical distances of the default five users from the access point at the
/// origin (positions P1..P5).
pub const DEFAULT_USER_POSITIONS: [[f64; 2]; 5] =
    [[150.0, 250.0], [-120.0, 300.0], [0.0, -300.0], [-280.0, -50.0], [100.0, -320.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Reference distance, meters.
    pub d0: f64,
    /// Free-space loss at `d0`, dB.
    pub pl_d0: f64,
    /// Path-loss slope in dB per decade (`10 n`).
    pub slope_db_per_decade: f64,
    /// Shadow-fading standard deviation, dB.
    pub shadow_sigma: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    /// Per-user distance to the access point, meters.
    pub user_distances: Vec<f64>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            d0: 1.0,
            pl_d0: 49.12,
            slope_db_per_decade: 12.4,
            shadow_sigma: 0.9,
            tx_power_dbm: 20.0,
            noise_dbm: -110.0,
            user_distances: DEFAULT_USER_POSITIONS.iter().map(|p| p[0].hypot(p[1])).collect(),
        }
    }
}

impl ChannelParams {
    /// Default parameters restricted to the first `k` default users.
    pub fn for_users(k: usize) -> Self {
        let user_distances = (0..k)
            .map(|i| {
                let q = DEFAULT_USER_POSITIONS[i % DEFAULT_USER_POSITIONS.len()];
                q[0].hypot(q[1])
            })
            .collect();
        ChannelParams { user_distances, ..ChannelParams::default() }
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if !(self.d0 > 0.0) {
            return Err(("d0".into(), "must be positive".into()));
        }
        if !(self.shadow_sigma >= 0.0) {
            return Err(("shadow_sigma".into(), "must be non-negative".into()));
        }
        if let Some(d) = self.user_distances.iter().find(|&&d| !(d > self.d0)) {
            return Err(("user_distances".into(), format!("distance {d} must exceed d0")));
        }
        Ok(())
    }
}

/// Path loss in dB at distance `d` with an explicit shadowing sample.
pub fn path_loss_db(d: f64, params: &ChannelParams, shadow_db: f64) -> Result<f64> {
    if !(d > params.d0) {
        return Err(Error::domain(format!("distance {d} must exceed reference distance {}", params.d0)));
    }
    Ok(params.pl_d0 + params.slope_db_per_decade * (d / params.d0).log10() + shadow_db)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Linear large-scale gain per user.
    pub beta: Vec<f64>,
    /// Small-scale coefficient `(re, im)` per user.
    pub h: Vec<(f64, f64)>,
    /// `|g|^2 = beta |h|^2` per user.
    pub g_sq: Vec<f64>,
}

impl ChannelRealization {
    pub fn from_parts(beta: Vec<f64>, h: Vec<(f64, f64)>) -> Self {
        let g_sq = beta.iter().zip(&h).map(|(b, (re, im))| b * (re * re + im * im)).collect();
        ChannelRealization { beta, h, g_sq }
    }

    /// Realization with unit small-scale fading and no shadowing.
    pub fn deterministic(params: &ChannelParams) -> Result<Self> {
        let beta = params
            .user_distances
            .iter()
            .map(|&d| path_loss_db(d, params, 0.0).map(|pl| db_to_linear(-pl)))
            .collect::<Result<Vec<_>>>()?;
        let h = vec![(1.0, 0.0); beta.len()];
        Ok(Self::from_parts(beta, h))
    }
}

/// Draws one slot's channel: independent shadowing and `CN(0,1)` fading per user.
pub fn sample_channel<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<ChannelRealization> {
    let n = params.user_distances.len();
    let mut beta = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for &d in &params.user_distances {
        let z: f64 = rng.sample(StandardNormal);
        let pl = path_loss_db(d, params, params.shadow_sigma * z)?;
        beta.push(db_to_linear(-pl));
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        h.push((re * half, im * half));
    }
    Ok(ChannelRealization::from_parts(beta, h))
}

/// Shannon rate in bit/s for bandwidth `b` Hz and channel power gain `g_sq`.
pub fn transmission_rate(b: f64, params: &ChannelParams, g_sq: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::domain(format!("bandwidth {b} must be non-negative")));
    }
    Ok(b * (1.0 + snr(params, g_sq)).log2())
}

/// Linear receive SNR `P |g|^2 / sigma^2`.
pub fn snr(params: &ChannelParams, g_sq: f64) -> f64 {
    dbm_to_watts(params.tx_power_dbm) * g_sq / dbm_to_watts(params.noise_dbm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn path_loss_reference_values() {
        let p = ChannelParams::default();
        assert!(rel(path_loss_db(1.0 + 1e-12, &p, 0.0).unwrap(), 49.12) < 1e-9);
        assert!(rel(path_loss_db(10.0, &p, 0.0).unwrap(), 61.52) < 1e-9);
        let d1 = 150f64.hypot(250.0);
        let expected = 49.12 + 12.4 * d1.log10();
        assert!(rel(path_loss_db(d1, &p, 0.0).unwrap(), expected) < 1e-12);
        assert!((expected - 79.68).abs() < 0.01);
        assert!(path_loss_db(1.0, &p, 0.0).is_err());
        assert!(path_loss_db(0.5, &p, 0.0).is_err());
    }

    #[test]
    fn path_loss_increasing() {
        let p = ChannelParams::default();
        let mut last = f64::NEG_INFINITY;
        for i in 1..200 {
            let pl = path_loss_db(1.0 + i as f64 * 2.5, &p, 0.0).unwrap();
            assert!(pl > last);
            last = pl;
        }
    }

    #[test]
    fn rate_examples() {
        let p = ChannelParams::default();
        // choose g_sq so that the SNR term equals 1 and 3
        let unit = dbm_to_watts(p.noise_dbm) / dbm_to_watts(p.tx_power_dbm);
        assert!(rel(transmission_rate(1e6, &p, unit).unwrap(), 1e6) < 1e-9);
        assert!(rel(transmission_rate(1e6, &p, 3.0 * unit).unwrap(), 2e6) < 1e-9);
        assert_eq!(transmission_rate(0.0, &p, unit).unwrap(), 0.0);
        assert!(transmission_rate(-1.0, &p, unit).is_err());
    }

    #[test]
    fn rate_monotone() {
        let p = ChannelParams::default();
        let g = 1e-8;
        let mut last = 0.0;
        for i in 1..50 {
            let r = transmission_rate(i as f64 * 1e5, &p, g).unwrap();
            assert!(r > last);
            last = r;
        }
        let mut last = 0.0;
        for i in 0..50 {
            let r = transmission_rate(1e6, &p, i as f64 * 1e-10).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn no_fading_gain_matches_path_loss() {
        let p = ChannelParams { shadow_sigma: 0.0, ..ChannelParams::default() };
        let real = ChannelRealization::deterministic(&p).unwrap();
        for (g, d) in real.g_sq.iter().zip(&p.user_distances) {
            let expected = 10f64.powf(-path_loss_db(*d, &p, 0.0).unwrap() / 10.0);
            assert!(rel(*g, expected) < 1e-12);
        }
    }

    #[test]
    fn fading_has_unit_mean() {
        let p = ChannelParams::for_users(1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let r = sample_channel(&p, &mut rng).unwrap();
                r.g_sq[0] / r.beta[0]
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = ChannelParams::default();
        let a = sample_channel(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_channel(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.beta.iter().all(|&b| b > 0.0));
    }
}
