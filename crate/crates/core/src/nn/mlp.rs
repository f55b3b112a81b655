use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output nonlinearity. Hidden layers always use the rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine layer, `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer { weight: Array2::zeros(self.weight.raw_dim()), bias: Array1::zeros(self.bias.len()) }
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.len() == other.bias.len()
    }
}

/// Multilayer perceptron with rectifier hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    output: Activation,
}

/// Activations recorded by [`Mlp::forward_cached`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers.iter().map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// Errors with the index of the first layer holding a non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if !l.weight.iter().chain(l.bias.iter()).all(|g| g.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
        }
        Ok(())
    }
}

impl Mlp {
    /// Network with the given layer widths (input first) and fan-in scaled
    /// uniform initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)),
                    bias: Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Mlp { layers, output })
    }

    pub fn zeros(widths: &[usize], output: Activation) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Layer { weight: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        Ok(Mlp { layers, output })
    }

    pub fn from_layers(layers: Vec<Layer>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.ncols() != l.bias.len() {
                return Err(Error::Shape { expected: l.weight.ncols(), actual: l.bias.len() });
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weight.nrows() != l.weight.ncols() {
                    return Err(Error::Shape { expected: l.weight.ncols(), actual: next.weight.nrows() });
                }
            }
        }
        Ok(Mlp { layers, output })
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::domain(format!("invalid layer widths {widths:?}")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.ncols()));
        w
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.output == other.output
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.weight);
            z += &l.bias;
            h = if i == last { self.apply_output(z) } else { z.mapv_into(|v| v.max(0.0)) };
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::domain("bad input"))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.weight);
            z += &l.bias;
            let next = if i == last { self.apply_output(z.clone()) } else { z.mapv(|v| v.max(0.0)) };
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        Ok(ForwardCache { inputs, pre, output: h })
    }

    /// Backpropagates `grad_out = dL/d(output)` through the cached pass.
    /// Returns parameter gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::Shape { expected: cache.output.len(), actual: grad_out.len() });
        }
        let mut delta = match self.output {
            Activation::Identity => grad_out.to_owned(),
            Activation::Sigmoid => {
                let mut d = grad_out.to_owned();
                Zip::from(&mut d).and(&cache.output).for_each(|g, &y| *g *= y * (1.0 - y));
                d
            }
        };
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for i in (0..self.layers.len()).rev() {
            grads[i].weight = cache.inputs[i].t().dot(&delta);
            grads[i].bias = delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&self.layers[i].weight.t());
            if i > 0 {
                Zip::from(&mut upstream).and(&cache.pre[i - 1]).for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = upstream;
        }
        let grads = Gradients { layers: grads };
        grads.check_finite()?;
        Ok((grads, delta))
    }

    fn apply_output(&self, z: Array2<f64>) -> Array2<f64> {
        match self.output {
            Activation::Identity => z,
            Activation::Sigmoid => z.mapv_into(sigmoid),
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), actual: x.ncols() });
        }
        Ok(())
    }
}

/// Blends target parameters toward the online network:
/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::domain("soft update between different architectures"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::domain(format!("tau {tau} outside [0, 1]")));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weight).and(&o.weight).for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_nets() {
        let x = array![[1.0, -2.0, 3.0]];
        let id = Mlp::zeros(&[3, 4, 2], Activation::Identity).unwrap();
        assert_eq!(id.forward(x.view()).unwrap(), array![[0.0, 0.0]]);
        let sg = Mlp::zeros(&[3, 4, 2], Activation::Sigmoid).unwrap();
        assert_eq!(sg.forward(x.view()).unwrap(), array![[0.5, 0.5]]);
    }

    #[test]
    fn hand_affine() {
        let net =
            Mlp::from_layers(vec![Layer { weight: array![[2.0]], bias: array![1.0] }], Activation::Identity).unwrap();
        assert_eq!(net.forward_one(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 2], Activation::Identity).unwrap();
        assert!(matches!(net.forward_one(&[1.0]), Err(Error::Shape { expected: 3, actual: 1 })));
        let bad = vec![
            Layer { weight: Array2::zeros((2, 3)), bias: Array1::zeros(3) },
            Layer { weight: Array2::zeros((4, 1)), bias: Array1::zeros(1) },
        ];
        assert!(Mlp::from_layers(bad, Activation::Identity).is_err());
        assert!(Mlp::zeros(&[3], Activation::Identity).is_err());
    }

    #[test]
    fn sigmoid_outputs_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 3], Activation::Sigmoid, &mut rng).unwrap();
        let x = Array2::from_shape_fn((50, 4), |(i, j)| (i as f64 - 25.0) / 8.0 * (j as f64 + 1.0));
        assert!(net.forward(x.view()).unwrap().iter().all(|&y| y > 0.0 && y < 1.0));
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::new(&[5, 7, 2], Activation::Identity, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = Mlp::new(&[5, 7, 2], Activation::Identity, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn soft_update_cases() {
        let online =
            Mlp::from_layers(vec![Layer { weight: array![[1.0]], bias: array![1.0] }], Activation::Identity).unwrap();
        let zero = Mlp::zeros(&[1, 1], Activation::Identity).unwrap();

        let mut t = zero.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = zero.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, zero);

        let mut t = zero.clone();
        soft_update(&mut t, &online, 0.01).unwrap();
        assert!((t.layers()[0].weight[[0, 0]] - 0.01).abs() < 1e-15);

        let mut wrong = Mlp::zeros(&[1, 2], Activation::Identity).unwrap();
        assert!(soft_update(&mut wrong, &online, 0.5).is_err());
    }

    #[test]
    fn soft_update_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let online = Mlp::new(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let mut target = Mlp::new(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let dist = |a: &Mlp, b: &Mlp| {
            a.layers()
                .iter()
                .zip(b.layers())
                .map(|(x, y)| (&x.weight - &y.weight).mapv(|v| v * v).sum() + (&x.bias - &y.bias).mapv(|v| v * v).sum())
                .sum::<f64>()
        };
        let before = dist(&target, &online);
        soft_update(&mut target, &online, 0.3).unwrap();
        let after = dist(&target, &online);
        assert!((after - 0.49 * before).abs() < 1e-12 * before.max(1.0));
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let net = Mlp::zeros(&[2, 3, 1], Activation::Identity).unwrap();
        let x = array![[f64::NAN, 1.0]];
        let cache = net.forward_cached(x.view()).unwrap();
        let err = net.backward(&cache, array![[1.0]].view()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 0 }), "{err}");
    }
}
