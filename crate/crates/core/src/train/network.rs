//! Fully-connected ReLU networks with softmax cross-entropy backprop.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::dataset::Label;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Affine map `z = W·a + b` followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<T>,
    bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(
        inputs: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        activation: Activation,
    ) -> Result<Self, TrainError> {
        let outputs = bias.len();
        if inputs == 0 || outputs == 0 || weights.len() != inputs * outputs {
            return Err(TrainError::InvalidNetwork(format!(
                "layer has {} weights for {outputs}×{inputs}",
                weights.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(TrainError::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Layer {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], bias: Vec<T>, activation: Activation) -> Result<Self, TrainError> {
        let inputs = rows.first().map(Vec::len).unwrap_or(0);
        if rows.len() != bias.len() || rows.iter().any(|r| r.len() != inputs) {
            return Err(TrainError::InvalidNetwork("ragged weight matrix".into()));
        }
        Self::new(inputs, rows.concat(), bias, activation)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize) -> T {
        self.weights[o * self.inputs + i]
    }

    pub fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    /// Pre-activation `W·a + b`.
    pub fn affine(&self, a: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                self.row(o)
                    .iter()
                    .zip(a)
                    .fold(self.bias[o], |acc, (&w, &v)| acc + w * v)
            })
            .collect()
    }

    pub fn activate(&self, z: &mut [T]) {
        if self.activation == Activation::Relu {
            for v in z {
                *v = v.max(T::zero());
            }
        }
    }
}

/// Feed-forward classifier `R^m → R^2`; logit 0 is `neg`, logit 1 `pos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "NetworkFile<T>", into = "NetworkFile<T>")]
pub struct Network<T: Scalar> {
    input_dim: usize,
    layers: Vec<Layer<T>>,
}

/// Number of logits.
pub const CLASSES: usize = 2;

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self, TrainError> {
        let first = layers
            .first()
            .ok_or_else(|| TrainError::InvalidNetwork("no layers".into()))?;
        let input_dim = first.inputs;
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(TrainError::InvalidNetwork(format!(
                    "layer {k} emits {} values but layer {} takes {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        let last = layers.last().unwrap();
        if last.activation != Activation::None {
            return Err(TrainError::InvalidNetwork("final layer must be linear".into()));
        }
        if last.outputs != CLASSES {
            return Err(TrainError::InvalidNetwork(format!(
                "network must have {CLASSES} outputs, found {}",
                last.outputs
            )));
        }
        Ok(Network { input_dim, layers })
    }

    /// Seeded initialization: weights uniform in `±1/√fan_in`, zero bias.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self, TrainError> {
        let mut r = rng::stream(seed, "init", 0);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        let widths: Vec<usize> = hidden.iter().copied().chain([CLASSES]).collect();
        for (k, &width) in widths.iter().enumerate() {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let weights = (0..width * fan_in)
                .map(|_| T::of(r.gen_range(-bound..=bound)))
                .collect();
            let activation = if k + 1 == widths.len() {
                Activation::None
            } else {
                Activation::Relu
            };
            layers.push(Layer::new(fan_in, weights, vec![T::zero(); width], activation)?);
            fan_in = width;
        }
        Network::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_dim(&self, x: &[T]) -> Result<(), TrainError> {
        if x.len() != self.input_dim {
            return Err(TrainError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, TrainError> {
        self.check_dim(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[T]) -> Vec<T> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.affine(&a);
            layer.activate(&mut a);
        }
        a
    }

    /// Argmax of the logits; ties go to `neg`.
    pub fn classify(&self, x: &[T]) -> Result<Label, TrainError> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Softmax cross-entropy of `x` against `label`.
    pub fn loss(&self, x: &[T], label: Label) -> Result<T, TrainError> {
        Ok(cross_entropy(&self.forward(x)?, label))
    }

    /// Exact gradients of the cross-entropy loss by backpropagation.
    pub fn grad(&self, x: &[T], label: Label) -> Result<Gradients<T>, TrainError> {
        self.check_dim(x)?;
        // activations[k] is the input of layer k; pre[k] its pre-activation.
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.affine(activations.last().unwrap());
            let mut a = z.clone();
            layer.activate(&mut a);
            pre.push(z);
            activations.push(a);
        }
        let logits = activations.pop().unwrap();
        let loss = cross_entropy(&logits, label);
        let mut delta = softmax(&logits);
        delta[label.index()] -= T::one();

        let mut weights = vec![Vec::new(); self.layers.len()];
        let mut biases = vec![Vec::new(); self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                for (d, &z) in delta.iter_mut().zip(&pre[k]) {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let input = &activations[k];
            let mut gw = vec![T::zero(); layer.weights.len()];
            for (o, &d) in delta.iter().enumerate() {
                if d != T::zero() {
                    for (g, &a) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                        *g = d * a;
                    }
                }
            }
            let mut back = vec![T::zero(); layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != T::zero() {
                    for (b, &w) in back.iter_mut().zip(layer.row(o)) {
                        *b += w * d;
                    }
                }
            }
            weights[k] = gw;
            biases[k] = delta;
            delta = back;
        }
        Ok(Gradients {
            loss,
            weights,
            biases,
            input: delta,
        })
    }

    /// `θ ← θ − rate·g`.
    pub(crate) fn step(&mut self, g: &Gradients<T>, rate: T) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(g.weights.iter().zip(&g.biases)) {
            for (w, &d) in layer.weights.iter_mut().zip(gw) {
                *w -= rate * d;
            }
            for (b, &d) in layer.bias.iter_mut().zip(gb) {
                *b -= rate * d;
            }
        }
    }

    /// Reads a network; `T` must match the precision the caller wants.
    pub fn from_json(s: &str) -> Result<Self, TrainError> {
        serde_json::from_str(s).map_err(|e| TrainError::InvalidNetwork(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }
}

/// Loss gradients with respect to every parameter and to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub loss: T,
    /// Per layer, row-major like the weights.
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
    pub input: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Gradients {
            loss: T::zero(),
            weights: net.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
            input: vec![T::zero(); net.input_dim],
        }
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) {
        self.loss += other.loss;
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
        self.input.iter_mut().zip(&other.input).for_each(|(x, &y)| *x += y);
    }
}

pub fn argmax<T: Scalar>(logits: &[T]) -> Label {
    if logits[1] > logits[0] {
        Label::Pos
    } else {
        Label::Neg
    }
}

fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

pub fn cross_entropy<T: Scalar>(logits: &[T], label: Label) -> T {
    log_sum_exp(logits) - logits[label.index()]
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct LayerFile<T> {
    weights: Vec<Vec<T>>,
    bias: Vec<T>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct NetworkFile<T> {
    input_dim: usize,
    layers: Vec<LayerFile<T>>,
}

impl<T: Scalar> From<Network<T>> for NetworkFile<T> {
    fn from(n: Network<T>) -> Self {
        NetworkFile {
            input_dim: n.input_dim,
            layers: n
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    weights: l.weights.chunks(l.inputs).map(<[T]>::to_vec).collect(),
                    bias: l.bias,
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

impl<T: Scalar> TryFrom<NetworkFile<T>> for Network<T> {
    type Error = TrainError;

    fn try_from(f: NetworkFile<T>) -> Result<Self, TrainError> {
        let layers = f
            .layers
            .into_iter()
            .map(|l| Layer::from_rows(&l.weights, l.bias, l.activation))
            .collect::<Result<Vec<_>, _>>()?;
        let net = Network::new(layers)?;
        if net.input_dim != f.input_dim {
            return Err(TrainError::DimensionMismatch {
                expected: f.input_dim,
                found: net.input_dim,
            });
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(rows: &[&[f64]], bias: &[f64], act: Activation) -> Layer<f64> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Layer::from_rows(&rows, bias.to_vec(), act).unwrap()
    }

    #[test]
    fn forward_examples() {
        let id = Network::new(vec![layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], Activation::None)]).unwrap();
        assert_eq!(id.forward(&[1.0, -2.0]).unwrap(), [1.0, -2.0]);

        let zero = Network::new(vec![layer(&[&[0.0, 0.0], &[0.0, 0.0]], &[0.3, -0.7], Activation::None)]).unwrap();
        assert_eq!(zero.forward(&[5.0, 9.0]).unwrap(), [0.3, -0.7]);

        // h = relu([[1,2],[-3,1]]·(1,1) + (0,1)) = relu(3, -1) = (3, 0)
        // y = [[1,-1],[0.5,2]]·(3,0) + (1,0) = (4, 1.5)
        let net = Network::new(vec![
            layer(&[&[1.0, 2.0], &[-3.0, 1.0]], &[0.0, 1.0], Activation::Relu),
            layer(&[&[1.0, -1.0], &[0.5, 2.0]], &[1.0, 0.0], Activation::None),
        ])
        .unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), [4.0, 1.5]);
        assert_eq!(net.classify(&[1.0, 1.0]).unwrap(), Label::Neg);
        assert!(matches!(net.forward(&[1.0]), Err(TrainError::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_networks_are_rejected() {
        let relu_last = Network::new(vec![layer(&[&[1.0], &[1.0]], &[0.0, 0.0], Activation::Relu)]);
        assert!(relu_last.is_err());
        let three = Network::new(vec![layer(&[&[1.0], &[1.0], &[1.0]], &[0.0; 3], Activation::None)]);
        assert!(three.is_err());
        let broken = Network::new(vec![
            layer(&[&[1.0], &[1.0], &[1.0]], &[0.0; 3], Activation::Relu),
            layer(&[&[1.0, 1.0], &[1.0, 1.0]], &[0.0; 2], Activation::None),
        ]);
        assert!(broken.is_err());
    }

    fn finite_difference(net: &Network<f64>, x: &[f64], label: Label, h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (net.loss(&a, label).unwrap() - net.loss(&b, label).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn input_gradient_matches_central_difference() {
        let net = Network::<f64>::init(4, &[6, 5], 17).unwrap();
        let x = [0.3, -0.2, 0.8, 0.1];
        for label in [Label::Pos, Label::Neg] {
            let g = net.grad(&x, label).unwrap();
            let fd = finite_difference(&net, &x, label, 1e-5);
            for (a, n) in g.input.iter().zip(&fd) {
                assert!((a - n).abs() <= 1e-7 * (1.0 + n.abs()), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn logit_gradient_is_softmax_minus_onehot() {
        let net = Network::new(vec![layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], Activation::None)]).unwrap();
        let x = [0.4, -1.1];
        let g = net.grad(&x, Label::Pos).unwrap();
        let p = softmax(&x);
        assert!((g.input[0] - p[0]).abs() < 1e-15);
        assert!((g.input[1] - (p[1] - 1.0)).abs() < 1e-15);
        assert_eq!(g.biases[0], g.input);
    }

    #[test]
    fn saturated_prediction_has_vanishing_gradient() {
        let net = Network::new(vec![layer(&[&[-100.0, 0.0], &[100.0, 0.0]], &[0.0, 0.0], Activation::None)]).unwrap();
        let g = net.grad(&[1.0, 0.0], Label::Pos).unwrap();
        assert!(g.input.iter().all(|v| v.abs() < 1e-60));
        assert!(g.loss.is_finite() && g.loss < 1e-80);
    }

    #[test]
    fn json_round_trip_and_shape() {
        let net = Network::<f64>::init(3, &[4], 2).unwrap();
        let json = net.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["input_dim"], 3);
        assert_eq!(v["layers"][0]["activation"], "relu");
        assert_eq!(v["layers"][1]["activation"], "none");
        assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 4);
        assert_eq!(Network::<f64>::from_json(&json).unwrap(), net);
        let wrong_dim = json.replacen("\"input_dim\":3", "\"input_dim\":5", 1);
        assert!(Network::<f64>::from_json(&wrong_dim).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Network::<f64>::init(30, &[128], 5).unwrap();
        assert_eq!(a, Network::init(30, &[128], 5).unwrap());
        assert_ne!(a, Network::init(30, &[128], 6).unwrap());
        let bound = 1.0 / 30f64.sqrt();
        assert!(a.layers()[0].weights().iter().all(|w| w.abs() <= bound));
        assert_eq!(a.parameter_count(), 30 * 128 + 128 + 128 * 2 + 2);
    }

    #[test]
    fn extreme_logits_keep_loss_finite() {
        let z = [1e300f64, -1e300];
        assert!(cross_entropy(&z, Label::Neg).is_finite());
        assert!(cross_entropy(&z, Label::Pos).is_finite());
        let z32 = [80.0f32, -80.0];
        assert!(cross_entropy(&z32, Label::Pos).is_finite());
    }

    proptest! {
        #[test]
        fn forward_is_affine_within_an_activation_pattern(
            seed in 0u64..500,
            x in proptest::collection::vec(-1.0f64..1.0, 3),
            d in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let net = Network::<f64>::init(3, &[5], seed).unwrap();
            let pattern = |p: &[f64]| -> Vec<bool> {
                net.layers()[0].affine(p).iter().map(|&z| z > 0.0).collect()
            };
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + 1e-3 * b).collect();
            prop_assume!(pattern(&x) == pattern(&y));
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a + b) / 2.0).collect();
            let (fx, fy, fm) = (net.forward(&x).unwrap(), net.forward(&y).unwrap(), net.forward(&mid).unwrap());
            for k in 0..2 {
                prop_assert!((fm[k] - (fx[k] + fy[k]) / 2.0).abs() < 1e-12);
            }
        }
    }
}
