//! Probabilistic transition model and causal action influence (CAI) scores.

mod two_regime;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use two_regime::{TwoRegimeEnv, TwoRegimeParams};

use crate::error::{Error, Result};
use crate::nn::{split_gaussian, Activation, Adam, GaussianPrediction, Mlp};

/// Exploration-side CAI settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaiConfig {
    /// Candidate actions per exploration step.
    pub candidates: usize,
    /// Monte-Carlo samples per dimension for the mixture KL.
    pub mc_samples: usize,
    /// Variance of the Gaussian exploration noise.
    pub noise_var: f64,
}

impl Default for CaiConfig {
    fn default() -> Self {
        CaiConfig { candidates: 64, mc_samples: 32, noise_var: 0.01 }
    }
}

impl CaiConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.candidates < 2 {
            return Err(("candidates".into(), "need at least 2 candidates".into()));
        }
        if self.mc_samples < 1 {
            return Err(("mc_samples".into(), "need at least 1 sample".into()));
        }
        if !(self.noise_var >= 0.0) {
            return Err(("noise_var".into(), "must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean Gaussian negative log-likelihood (without the `ln 2pi` constant)
/// over all rows and dimensions, with gradients w.r.t. mean and variance.
pub fn nll_loss(pred: &GaussianPrediction, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if pred.mean.dim() != target.dim() {
        return Err(Error::Shape { expected: pred.mean.len(), actual: target.len() });
    }
    if !target.iter().all(|t| t.is_finite()) {
        return Err(Error::domain("non-finite target"));
    }
    let n = target.len() as f64;
    let diff = &target - &pred.mean;
    let loss =
        ndarray::Zip::from(&diff).and(&pred.var).fold(0.0, |acc, &d, &v| acc + d * d / (2.0 * v) + 0.5 * v.ln()) / n;
    let d_mean = ndarray::Zip::from(&diff).and(&pred.var).map_collect(|&d, &v| -d / v / n);
    let d_var = ndarray::Zip::from(&diff).and(&pred.var).map_collect(|&d, &v| (0.5 / v - d * d / (2.0 * v * v)) / n);
    Ok((loss, d_mean, d_var))
}

/// Closed-form `KL(N(m1, v1) || N(m2, v2))`.
pub fn kl_gaussian_pair(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::domain("variances must be positive"));
    }
    Ok(0.5 * (v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / (2.0 * v2) - 0.5)
}

/// Anything that predicts a diagonal Gaussian over next-state dimensions.
pub trait TransitionModel {
    fn predict(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<GaussianPrediction>;

    /// Predictions for one state under each row of `actions`.
    fn predict_actions(&self, state: &[f64], actions: ArrayView2<f64>) -> Result<GaussianPrediction> {
        let states = ndarray::ArrayView1::from(state)
            .insert_axis(Axis(0))
            .broadcast((actions.nrows(), state.len()))
            .ok_or_else(|| Error::domain("bad state"))?
            .to_owned();
        self.predict(states.view(), actions)
    }
}

/// Learned transition model over a subset of next-state dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceModel {
    net: Mlp,
    optimizer: Adam,
    mask: Vec<usize>,
    state_dim: usize,
    action_dim: usize,
}

impl InferenceModel {
    /// `mask` lists the next-state indices that get Gaussian heads.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        mask: Vec<usize>,
        hidden: &[usize],
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if mask.is_empty() || mask.iter().any(|&i| i >= state_dim) {
            return Err(Error::domain("inference mask must be a nonempty subset of state indices"));
        }
        let mut widths = vec![state_dim + action_dim];
        widths.extend_from_slice(hidden);
        widths.push(2 * mask.len());
        let net = Mlp::new(&widths, Activation::Identity, rng)?;
        let optimizer = Adam::new(&net, lr);
        Ok(InferenceModel { net, optimizer, mask, state_dim, action_dim })
    }

    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    pub fn heads(&self) -> usize {
        self.mask.len()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.optimizer.steps()
    }

    fn input(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.state_dim {
            return Err(Error::Shape { expected: self.state_dim, actual: states.ncols() });
        }
        if actions.ncols() != self.action_dim {
            return Err(Error::Shape { expected: self.action_dim, actual: actions.ncols() });
        }
        if states.nrows() != actions.nrows() {
            return Err(Error::Shape { expected: states.nrows(), actual: actions.nrows() });
        }
        ndarray::concatenate(Axis(1), &[states, actions]).map_err(|e| Error::domain(e.to_string()))
    }

    /// One optimizer step on the NLL of `next_states` (full state rows,
    /// masked here). Returns the loss before the step.
    pub fn train(
        &mut self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        next_states: ArrayView2<f64>,
    ) -> Result<f64> {
        if states.nrows() == 0 {
            return Err(Error::domain("empty training batch"));
        }
        if next_states.ncols() != self.state_dim || next_states.nrows() != states.nrows() {
            return Err(Error::Shape { expected: self.state_dim, actual: next_states.ncols() });
        }
        let x = self.input(states, actions)?;
        let target = next_states.select(Axis(1), &self.mask);
        let cache = self.net.forward_cached(x.view())?;
        let pred = split_gaussian(cache.output().view())?;
        let (loss, d_mean, d_var) = nll_loss(&pred, target.view())?;
        let grad_out = pred.raw_gradient(cache.output().view(), d_mean.view(), d_var.view());
        let (grads, _) = self.net.backward(&cache, grad_out.view())?;
        self.optimizer.step(&mut self.net, &grads)?;
        Ok(loss)
    }

    /// NLL without updating.
    pub fn evaluate(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        next_states: ArrayView2<f64>,
    ) -> Result<f64> {
        let pred = self.predict(states, actions)?;
        let target = next_states.select(Axis(1), &self.mask);
        Ok(nll_loss(&pred, target.view())?.0)
    }
}

impl TransitionModel for InferenceModel {
    fn predict(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<GaussianPrediction> {
        let x = self.input(states, actions)?;
        split_gaussian(self.net.forward(x.view())?.view())
    }
}

/// Monte-Carlo CAI estimate for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaiEstimate {
    pub score: f64,
    /// Per-dimension KL estimates.
    pub per_dim: Vec<f64>,
    pub std_error: f64,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// Standard-normal draws, dimension-major, shared across all scored actions.
fn draw_normals<R: Rng + ?Sized>(dims: usize, samples: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((dims, samples), || rng.sample(StandardNormal))
}

/// KL of row `row` of `p` against the equal-weight mixture of all rows of `mix`.
fn kl_to_mixture(p: &GaussianPrediction, row: usize, mix: &GaussianPrediction, z: &Array2<f64>) -> CaiEstimate {
    let dims = p.dims();
    let samples = z.ncols();
    let log_n = (mix.rows() as f64).ln();
    let mut per_dim = Vec::with_capacity(dims);
    let mut var_sum = 0.0;
    let mut terms = vec![0.0; mix.rows()];
    for j in 0..dims {
        let (m, v) = (p.mean[[row, j]], p.var[[row, j]]);
        let sd = v.sqrt();
        let mut ys = Vec::with_capacity(samples);
        for l in 0..samples {
            let x = m + sd * z[[j, l]];
            for (n, t) in terms.iter_mut().enumerate() {
                *t = log_normal(x, mix.mean[[n, j]], mix.var[[n, j]]);
            }
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_mix = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln() - log_n;
            ys.push(log_normal(x, m, v) - log_mix);
        }
        let mean = ys.iter().sum::<f64>() / samples as f64;
        if samples > 1 {
            var_sum += ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (samples - 1) as f64 / samples as f64;
        }
        per_dim.push(mean);
    }
    let score = per_dim.iter().sum::<f64>() / dims as f64;
    CaiEstimate { score, per_dim, std_error: var_sum.sqrt() / dims as f64 }
}

/// CAI of `action` in `state`: mean over predicted dimensions of
/// `KL(p(.|s,a) || (1/N) sum_n p(.|s,a_n))` over the candidate actions.
///
/// The integrand is sampled with `mc_samples` standard-normal draws per
/// dimension taken from `rng` in dimension-major order.
pub fn cai_score<M: TransitionModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    state: &[f64],
    action: &[f64],
    candidates: ArrayView2<f64>,
    mc_samples: usize,
    rng: &mut R,
) -> Result<CaiEstimate> {
    if candidates.nrows() == 0 {
        return Err(Error::domain("no candidate actions"));
    }
    let a = ndarray::ArrayView2::from_shape((1, action.len()), action).map_err(|e| Error::domain(e.to_string()))?;
    let p = model.predict_actions(state, a)?;
    let mix = model.predict_actions(state, candidates)?;
    let z = draw_normals(p.dims(), mc_samples.max(1), rng);
    Ok(kl_to_mixture(&p, 0, &mix, &z))
}

/// CAI of every candidate against the mixture over all candidates, with one
/// shared set of draws. This is the form used for exploration.
pub fn cai_scores<M: TransitionModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    state: &[f64],
    candidates: ArrayView2<f64>,
    mc_samples: usize,
    rng: &mut R,
) -> Result<Vec<CaiEstimate>> {
    if candidates.nrows() == 0 {
        return Err(Error::domain("no candidate actions"));
    }
    let pred = model.predict_actions(state, candidates)?;
    let z = draw_normals(pred.dims(), mc_samples.max(1), rng);
    Ok((0..pred.rows()).map(|i| kl_to_mixture(&pred, i, &pred, &z)).collect())
}
