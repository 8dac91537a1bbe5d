//! Multilayer perceptron with exact reverse-mode gradients for parameters and
//! inputs, plus the SGD and Adam update rules used to train it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};

/// Anything that maps a feature vector to a vector of outputs.
///
/// Explainers, metrics and regularizers only need this much of a model, so
/// they work for closures as well as for [`MlpModel`].
pub trait Predictor {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// A predictor that can report `d f(x)[output] / d x`.
pub trait InputGradient: Predictor {
    fn input_gradient(&self, x: &[f64], output_index: usize) -> Result<Vec<f64>>;
}

/// Wraps a closure as a [`Predictor`].
pub struct FnPredictor<F> {
    input_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        Self {
            input_dim,
            output_dim,
            f,
        }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("input", x.len(), self.input_dim)?;
        let y = (self.f)(x);
        check_len("output", y.len(), self.output_dim)?;
        Ok(y)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::BadShape(format!("{what} has length {got}, expected {want}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative from the output `a` alone (relu: `a > 0` iff `z > 0`).
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            // subgradient 0 at the kink
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

/// One affine layer, `z = W a + b`, with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, a: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, a) + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    /// Row-major `out x in`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    layer_sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<LayerRepr>,
}

impl From<MlpModel> for ModelRepr {
    fn from(m: MlpModel) -> Self {
        ModelRepr {
            layer_sizes: m.layer_sizes,
            activation: m.activation,
            layers: m
                .layers
                .into_iter()
                .map(|l| LayerRepr {
                    weights: l.weights.as_slice().to_vec(),
                    biases: l.biases,
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelRepr> for MlpModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        validate_sizes(&r.layer_sizes)?;
        if r.layers.len() + 1 != r.layer_sizes.len() {
            return Err(Error::BadShape(format!(
                "{} layers for {} layer sizes",
                r.layers.len(),
                r.layer_sizes.len()
            )));
        }
        let layers = r
            .layers
            .into_iter()
            .zip(r.layer_sizes.windows(2))
            .map(|(l, w)| {
                check_len("bias vector", l.biases.len(), w[1])?;
                if let Some(b) = l.biases.iter().find(|b| !b.is_finite()) {
                    return Err(Error::BadParameter(format!("non-finite bias {b}")));
                }
                Ok(Layer {
                    weights: Matrix::from_vec(w[1], w[0], l.weights)?,
                    biases: l.biases,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MlpModel {
            layer_sizes: r.layer_sizes,
            activation: r.activation,
            layers,
        })
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::BadShape(format!(
            "layer sizes {sizes:?} need at least two entries, all >= 1"
        )));
    }
    Ok(())
}

/// Per-layer values kept from a forward pass for the backward pass.
/// Per-layer inputs of a batched forward pass; the last entry holds the outputs.
#[derive(Clone, Debug)]
pub struct BatchTrace {
    inputs: Vec<Matrix>,
}

impl BatchTrace {
    /// Model outputs, one row per point.
    pub fn outputs(&self) -> &Matrix {
        self.inputs.last().expect("at least the input layer")
    }
}

struct Trace {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Gaussian weights with variance `1/fan_in` (tanh) or `2/fan_in` (relu); zero biases.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = match activation {
            Activation::Tanh => 1.0,
            Activation::Relu => 2.0,
        };
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let scale = (gain / w[0] as f64).sqrt();
                for i in 0..w[1] {
                    for v in layer.weights.row_mut(i) {
                        *v = scale * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                layer
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            layers,
        })
    }

    /// Builds a model from explicit layers; sizes are inferred from the weights.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::BadShape("a model needs at least one layer".into()));
        };
        let mut sizes = vec![first.weights.cols()];
        for l in &layers {
            if l.weights.cols() != *sizes.last().unwrap() || l.biases.len() != l.weights.rows() {
                return Err(Error::BadShape("layer shapes do not chain".into()));
            }
            sizes.push(l.weights.rows());
        }
        validate_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            activation,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters, layer by layer: weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        check_len("parameter vector", params.len(), self.param_count())?;
        let mut rest = params;
        for l in &mut self.layers {
            let (r, c) = (l.weights.rows(), l.weights.cols());
            let (w, tail) = rest.split_at(r * c);
            l.weights = Matrix::from_vec(r, c, w.to_vec())?;
            let (b, tail) = tail.split_at(r);
            l.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        check_len("input", x.len(), self.layer_sizes[0])?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&inputs[l]);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre_activations.push(z);
            inputs.push(a);
        }
        Ok(Trace {
            inputs,
            pre_activations,
        })
    }

    /// `f(x)`; raw logits for classifiers.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("input", x.len(), self.layer_sizes[0])?;
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.affine(&a);
            if l != last {
                a.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(a)
    }

    /// Reverse-mode gradients of `upstream . f(x)` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<GradientTape> {
        let mut tape = GradientTape::zeros_like(self);
        self.backward_into(x, upstream, 1.0, &mut tape)?;
        Ok(tape)
    }

    /// Adds `scale * d(upstream . f(x))/d(theta)` into `tape`, overwriting its
    /// input gradient.
    pub fn backward_into(
        &self,
        x: &[f64],
        upstream: &[f64],
        scale: f64,
        tape: &mut GradientTape,
    ) -> Result<()> {
        check_len("upstream gradient", upstream.len(), self.output_dim())?;
        tape.check_shape(self)?;
        let trace = self.trace(x)?;
        let mut delta: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let grad = &mut tape.layers[l];
            for (i, &di) in delta.iter().enumerate() {
                if di != 0.0 {
                    axpy(di, input, grad.weights.row_mut(i));
                }
                grad.biases[i] += di;
            }
            let back = self.layers[l].weights.tr_matvec(&delta)?;
            delta = if l > 0 {
                back.iter()
                    .zip(&trace.pre_activations[l - 1])
                    .zip(input)
                    .map(|((b, &z), &a)| b * self.activation.derivative(z, a))
                    .collect()
            } else {
                back
            };
        }
        tape.input_gradient = delta;
        Ok(())
    }

    /// Forward pass over every row of `points`, keeping what a later
    /// [`backward_batch`](Self::backward_batch) needs.
    pub fn forward_batch(&self, points: &Matrix) -> Result<BatchTrace> {
        check_len("input", points.cols(), self.layer_sizes[0])?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        inputs.push(points.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let a = &inputs[l];
            let mut z = Matrix::zeros(a.rows(), layer.biases.len());
            for r in 0..a.rows() {
                let row = a.row(r);
                for (out, (w, b)) in z.row_mut(r).iter_mut().zip(layer.weights.iter_rows().zip(&layer.biases)) {
                    let v = dot(w, row) + b;
                    *out = if l == last { v } else { self.activation.apply(v) };
                }
            }
            inputs.push(z);
        }
        Ok(BatchTrace { inputs })
    }

    /// Adds `scale * sum_r d(upstream_r . f(points_r))/d(theta)` into `tape`.
    /// The tape's input gradient is left as is.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        upstream: &Matrix,
        scale: f64,
        tape: &mut GradientTape,
    ) -> Result<()> {
        tape.check_shape(self)?;
        let outputs = trace.outputs();
        if upstream.rows() != outputs.rows() || upstream.cols() != outputs.cols() {
            return Err(Error::BadShape(format!(
                "upstream is {}x{}, batch output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                outputs.rows(),
                outputs.cols()
            )));
        }
        let mut delta = upstream.clone();
        delta.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let grad = &mut tape.layers[l];
            for r in 0..delta.rows() {
                let a = input.row(r);
                for (i, &di) in delta.row(r).iter().enumerate() {
                    if di != 0.0 {
                        axpy(di, a, grad.weights.row_mut(i));
                        grad.biases[i] += di;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.layers[l].weights;
            let mut back = Matrix::zeros(delta.rows(), weights.cols());
            for r in 0..delta.rows() {
                let out = back.row_mut(r);
                for (i, &di) in delta.row(r).iter().enumerate() {
                    if di != 0.0 {
                        axpy(di, weights.row(i), out);
                    }
                }
                for (b, &a) in out.iter_mut().zip(input.row(r)) {
                    *b *= self.activation.derivative_from_output(a);
                }
            }
            delta = back;
        }
        Ok(())
    }

    /// Signed input gradient of one output; the magnitude is taken only for display.
    pub fn saliency(&self, x: &[f64], class_index: usize) -> Result<Vec<f64>> {
        if class_index >= self.output_dim() {
            return Err(Error::BadShape(format!(
                "class index {class_index} for a model with {} outputs",
                self.output_dim()
            )));
        }
        let mut upstream = vec![0.0; self.output_dim()];
        upstream[class_index] = 1.0;
        Ok(self.backward(x, &upstream)?.input_gradient)
    }

    pub fn sgd_step(&mut self, tape: &GradientTape, learning_rate: f64) -> Result<()> {
        tape.check_shape(self)?;
        for (layer, grad) in self.layers.iter_mut().zip(&tape.layers) {
            let w = weights_mut(&mut layer.weights);
            axpy(-learning_rate, grad.weights.as_slice(), w);
            axpy(-learning_rate, &grad.biases, &mut layer.biases);
        }
        Ok(())
    }

    pub fn adam_step(&mut self, tape: &GradientTape, state: &mut AdamState, hp: &AdamConfig) -> Result<()> {
        tape.check_shape(self)?;
        state.m.check_shape(self)?;
        state.v.check_shape(self)?;
        state.t += 1;
        let t = state.t as i32;
        let bias1 = 1.0 - hp.beta1.powi(t);
        let bias2 = 1.0 - hp.beta2.powi(t);
        let layers = self.layers.iter_mut().zip(&tape.layers);
        let moments = state.m.layers.iter_mut().zip(state.v.layers.iter_mut());
        for ((layer, grad), (m, v)) in layers.zip(moments) {
            let params = [weights_mut(&mut layer.weights), &mut layer.biases[..]];
            let grads = [grad.weights.as_slice(), &grad.biases[..]];
            let firsts = [weights_mut(&mut m.weights), &mut m.biases[..]];
            let seconds = [weights_mut(&mut v.weights), &mut v.biases[..]];
            for (((p, g), m), v) in params.into_iter().zip(grads).zip(firsts).zip(seconds) {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                    *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
                }
            }
        }
        Ok(())
    }
}

fn weights_mut(m: &mut Matrix) -> &mut [f64] {
    m.as_mut_slice()
}

impl Predictor for MlpModel {
    fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }
}

impl InputGradient for MlpModel {
    fn input_gradient(&self, x: &[f64], output_index: usize) -> Result<Vec<f64>> {
        self.saliency(x, output_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Gradients mirroring an [`MlpModel`]'s parameters, plus the input gradient
/// of the most recent backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTape {
    pub layers: Vec<LayerGradient>,
    pub input_gradient: Vec<f64>,
}

impl GradientTape {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
            input_gradient: vec![0.0; model.input_dim()],
        }
    }

    fn check_shape(&self, model: &MlpModel) -> Result<()> {
        let ok = self.layers.len() == model.layers.len()
            && self.layers.iter().zip(&model.layers).all(|(g, l)| {
                g.weights.rows() == l.weights.rows()
                    && g.weights.cols() == l.weights.cols()
                    && g.biases.len() == l.biases.len()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::BadShape("gradient tape does not mirror the model".into()))
        }
    }

    /// Parameter gradients in the order of [`MlpModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// `self += scale * other` over parameter gradients.
    pub fn add_scaled(&mut self, other: &GradientTape, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(scale, b.weights.as_slice(), weights_mut(&mut a.weights));
            axpy(scale, &b.biases, &mut a.biases);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            weights_mut(&mut l.weights).iter_mut().for_each(|v| *v *= factor);
            l.biases.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    m: GradientTape,
    v: GradientTape,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        Self {
            m: GradientTape::zeros_like(model),
            v: GradientTape::zeros_like(model),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}
