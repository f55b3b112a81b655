//! Small dense networks with manual backprop, Adam and Gaussian heads.

mod gaussian;
mod mlp;

use std::path::Path;

use ndarray::Zip;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use gaussian::{gaussian_forward, softplus, split_gaussian, GaussianPrediction, VARIANCE_FLOOR};
pub use mlp::{soft_update, Activation, ForwardCache, Gradients, Layer, Mlp};

use crate::error::{Error, Result};

/// Adaptive moment estimation with the usual defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = |l: &Layer| Layer {
            weight: ndarray::Array2::zeros(l.weight.raw_dim()),
            bias: ndarray::Array1::zeros(l.bias.len()),
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: net.layers().iter().map(zeros).collect(),
            v: net.layers().iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one descent step with `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        grads.check_finite()?;
        if grads.layers.len() != self.m.len() || net.layers().len() != self.m.len() {
            return Err(Error::Shape { expected: self.m.len(), actual: grads.layers.len() });
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let t = self.step as f64;
        let lr_t = self.lr * (1.0 - b2.powf(t)).sqrt() / (1.0 - b1.powf(t));
        for (((p, g), m), v) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            if p.weight.dim() != g.weight.dim() || p.bias.len() != g.bias.len() {
                return Err(Error::Shape { expected: p.weight.len(), actual: g.weight.len() });
            }
            let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + eps);
            };
            Zip::from(&mut p.weight).and(&g.weight).and(&mut m.weight).and(&mut v.weight).for_each(update);
            Zip::from(&mut p.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(update);
        }
        Ok(())
    }
}

/// Current on-disk checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    version: u32,
    payload: T,
}

/// Writes `value` as versioned JSON. Floats round-trip exactly.
pub fn save_checkpoint<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(&Versioned { version: CHECKPOINT_VERSION, payload: value })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Versioned<T> = serde_json::from_str(&text)?;
    if v.version != CHECKPOINT_VERSION {
        return Err(Error::Serde(format!("unsupported checkpoint version {}", v.version)));
    }
    Ok(v.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, ArrayView2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // loss = 0.5 * sum((y - t)^2) / batch
    fn loss(net: &Mlp, x: ArrayView2<f64>, t: &Array2<f64>) -> f64 {
        let y = net.forward(x).unwrap();
        0.5 * (&y - t).mapv(|d| d * d).sum() / x.nrows() as f64
    }

    fn check_gradients(seed: u64, output: Activation) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::new(&[4, 6, 5, 3], output, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((7, 4), || rng.random_range(-2.0..2.0));
        let t = Array2::from_shape_simple_fn((7, 3), || rng.random_range(-1.0..1.0));
        let cache = net.forward_cached(x.view()).unwrap();
        let grad_out = (cache.output() - &t) / x.nrows() as f64;
        let (grads, grad_in) = net.backward(&cache, grad_out.view()).unwrap();

        let h = 1e-6;
        let close = |a: f64, n: f64| (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) || (a - n).abs() < 1e-8;
        for li in 0..net.layers().len() {
            let (rows, cols) = net.layers()[li].weight.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let orig = net.layers()[li].weight[[r, c]];
                    net.layers_mut()[li].weight[[r, c]] = orig + h;
                    let up = loss(&net, x.view(), &t);
                    net.layers_mut()[li].weight[[r, c]] = orig - h;
                    let down = loss(&net, x.view(), &t);
                    net.layers_mut()[li].weight[[r, c]] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.layers[li].weight[[r, c]];
                    assert!(close(analytic, numeric), "seed {seed} w{li}[{r},{c}]: {analytic} vs {numeric}");
                }
            }
            for c in 0..cols {
                let orig = net.layers()[li].bias[c];
                net.layers_mut()[li].bias[c] = orig + h;
                let up = loss(&net, x.view(), &t);
                net.layers_mut()[li].bias[c] = orig - h;
                let down = loss(&net, x.view(), &t);
                net.layers_mut()[li].bias[c] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(close(grads.layers[li].bias[c], numeric), "seed {seed} b{li}[{c}]");
            }
        }
        let mut xp = x.clone();
        for r in 0..x.nrows() {
            for c in 0..x.ncols() {
                let orig = x[[r, c]];
                xp[[r, c]] = orig + h;
                let up = loss(&net, xp.view(), &t);
                xp[[r, c]] = orig - h;
                let down = loss(&net, xp.view(), &t);
                xp[[r, c]] = orig;
                assert!(close(grad_in[[r, c]], (up - down) / (2.0 * h)), "seed {seed} x[{r},{c}]");
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for seed in 0..10 {
            check_gradients(seed, Activation::Identity);
            check_gradients(100 + seed, Activation::Sigmoid);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, 1e-2);
        let zero = Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: ndarray::Array1::zeros(l.bias.len()),
                })
                .collect(),
        };
        opt.step(&mut net, &zero).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn identical_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 5, 2], Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_simple_fn((6, 2), || rng.random_range(-1.0..1.0));
        let run = || {
            let mut n = net.clone();
            let mut opt = Adam::new(&n, 1e-3);
            for _ in 0..20 {
                let cache = n.forward_cached(x.view()).unwrap();
                let g = (cache.output() - &t) / 6.0;
                let (grads, _) = n.backward(&cache, g.view()).unwrap();
                opt.step(&mut n, &grads).unwrap();
            }
            (n, opt)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::new(&[2, 16, 1], Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((32, 2), || rng.random_range(-1.0..1.0));
        let t = x.map_axis(ndarray::Axis(1), |r| r[0] - 2.0 * r[1]).insert_axis(ndarray::Axis(1));
        let start = loss(&net, x.view(), &t);
        let mut opt = Adam::new(&net, 1e-2);
        for _ in 0..500 {
            let cache = net.forward_cached(x.view()).unwrap();
            let g = (cache.output() - &t) / 32.0;
            let (grads, _) = net.backward(&cache, g.view()).unwrap();
            opt.step(&mut net, &grads).unwrap();
        }
        assert!(loss(&net, x.view(), &t) < 0.01 * start);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::new(&[3, 8, 2], Activation::Sigmoid, &mut rng).unwrap();
        let opt = Adam::new(&net, 3e-4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_checkpoint(&path, &(&net, &opt)).unwrap();
        let (n2, o2): (Mlp, Adam) = load_checkpoint(&path).unwrap();
        assert_eq!(n2, net);
        assert_eq!(o2, opt);
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"version":99,"payload":null}"#).unwrap();
        assert!(load_checkpoint::<Option<Mlp>>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn soft_update_stays_between(tau in 0.0..=1.0f64, a in -5.0..5.0f64, b in -5.0..5.0f64) {
            let mk = |v: f64| Mlp::from_layers(
                vec![Layer { weight: ndarray::array![[v]], bias: ndarray::array![v] }],
                Activation::Identity,
            ).unwrap();
            let mut t = mk(a);
            soft_update(&mut t, &mk(b), tau).unwrap();
            let w = t.layers()[0].weight[[0, 0]];
            prop_assert!(w >= a.min(b) - 1e-12 && w <= a.max(b) + 1e-12);
        }
    }
}
