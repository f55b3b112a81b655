use ndarray::{s, Array2, ArrayView2, Zip};

use super::mlp::{sigmoid, Mlp};
use crate::error::{Error, Result};

/// Lower bound on predicted variances.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Per-dimension diagonal Gaussian, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
}

impl GaussianPrediction {
    pub fn dims(&self) -> usize {
        self.mean.ncols()
    }

    pub fn rows(&self) -> usize {
        self.mean.nrows()
    }

    /// Maps gradients w.r.t. mean and variance back to the raw network output.
    pub fn raw_gradient(&self, raw: ArrayView2<f64>, d_mean: ArrayView2<f64>, d_var: ArrayView2<f64>) -> Array2<f64> {
        let d = self.dims();
        let mut g = Array2::zeros(raw.raw_dim());
        g.slice_mut(s![.., ..d]).assign(&d_mean);
        Zip::from(g.slice_mut(s![.., d..]))
            .and(raw.slice(s![.., d..]))
            .and(d_var)
            .for_each(|g, &z, &dv| *g = dv * sigmoid(z));
        g
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Splits raw output `[means | variance pre-activations]` into a prediction.
pub fn split_gaussian(raw: ArrayView2<f64>) -> Result<GaussianPrediction> {
    if !raw.ncols().is_multiple_of(2) || raw.ncols() == 0 {
        return Err(Error::Shape { expected: raw.ncols() + 1, actual: raw.ncols() });
    }
    let d = raw.ncols() / 2;
    Ok(GaussianPrediction {
        mean: raw.slice(s![.., ..d]).to_owned(),
        var: raw.slice(s![.., d..]).mapv(|z| softplus(z) + VARIANCE_FLOOR),
    })
}

/// Prediction for a single `(state, action)` input.
pub fn gaussian_forward(net: &Mlp, state: &[f64], action: &[f64]) -> Result<GaussianPrediction> {
    let width = state.len() + action.len();
    if width != net.input_dim() {
        return Err(Error::Shape { expected: net.input_dim(), actual: width });
    }
    let x =
        Array2::from_shape_fn((1, width), |(_, j)| if j < state.len() { state[j] } else { action[j - state.len()] });
    split_gaussian(net.forward(x.view())?.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn floor_in_the_limit() {
        let p = split_gaussian(array![[0.3, -1e6]].view()).unwrap();
        assert_eq!(p.var[[0, 0]], VARIANCE_FLOOR);
        assert_eq!(p.mean[[0, 0]], 0.3);
    }

    #[test]
    fn softplus_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn shapes_follow_head_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[5 + 3, 16, 2 * 4], Activation::Identity, &mut rng).unwrap();
        let p = gaussian_forward(&net, &[0.1; 5], &[0.2; 3]).unwrap();
        assert_eq!(p.dims(), 4);
        assert!(p.var.iter().all(|&v| v >= VARIANCE_FLOOR));
        assert_eq!(p, gaussian_forward(&net, &[0.1; 5], &[0.2; 3]).unwrap());
        assert!(gaussian_forward(&net, &[0.1; 4], &[0.2; 3]).is_err());
        assert!(split_gaussian(array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn variance_gradient_chain() {
        let raw = array![[0.0, 0.7]];
        let p = split_gaussian(raw.view()).unwrap();
        let g = p.raw_gradient(raw.view(), array![[2.0]].view(), array![[1.0]].view());
        let h = 1e-6;
        let numeric = (softplus(0.7 + h) - softplus(0.7 - h)) / (2.0 * h);
        assert_eq!(g[[0, 0]], 2.0);
        assert!((g[[0, 1]] - numeric).abs() < 1e-8);
    }
}
