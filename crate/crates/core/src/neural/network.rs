use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{
    conv_geometry, Activation, ActivationLayer, BatchNorm1d, Conv1d, Dense, Flatten, MaxPool1d, Mode, Padding, Param,
    BATCHNORM_EPS, BATCHNORM_MOMENTUM,
};
use super::lstm::Lstm;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{domain, CounterRng};

pub const LSTM_FORGET_BIAS: f64 = 1.0;
pub const INIT_SCHEME: &str = "glorot_uniform weights; zero biases; lstm forget-gate bias 1.0; batchnorm gamma 1, beta 0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv1d,
    MaxPool1d,
    BatchNorm1d,
    Lstm,
    Activation,
    Flatten,
}

/// Architecture description of one layer; input sizes are inferred from
/// the incoming shape when a network is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense { units: usize },
    Conv1d { filters: usize, kernel_size: usize, stride: usize, padding: Padding },
    MaxPool1d { size: usize },
    BatchNorm1d { momentum: f64, eps: f64 },
    Lstm { hidden: usize, return_sequences: bool, cell_activation: Activation },
    Activation { function: Activation },
    Flatten,
}

impl LayerSpec {
    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn conv_same(filters: usize, kernel_size: usize) -> Self {
        LayerSpec::Conv1d { filters, kernel_size, stride: 1, padding: Padding::Same }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm1d { momentum: BATCHNORM_MOMENTUM, eps: BATCHNORM_EPS }
    }

    pub fn lstm(hidden: usize, return_sequences: bool) -> Self {
        LayerSpec::Lstm { hidden, return_sequences, cell_activation: Activation::Tanh }
    }

    pub fn act(function: Activation) -> Self {
        LayerSpec::Activation { function }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Conv1d { .. } => LayerKind::Conv1d,
            LayerSpec::MaxPool1d { .. } => LayerKind::MaxPool1d,
            LayerSpec::BatchNorm1d { .. } => LayerKind::BatchNorm1d,
            LayerSpec::Lstm { .. } => LayerKind::Lstm,
            LayerSpec::Activation { .. } => LayerKind::Activation,
            LayerSpec::Flatten => LayerKind::Flatten,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let seq = |what: &str| -> Result<(usize, usize)> {
            match *input {
                [len] => Ok((len, 1)),
                [len, ch] => Ok((len, ch)),
                _ => Err(Error::shape(format!("{what} needs a [len] or [len, ch] input, got {input:?}"))),
            }
        };
        match *self {
            LayerSpec::Dense { units } => match *input {
                [_] if units > 0 => Ok(vec![units]),
                _ => Err(Error::shape(format!("dense needs a flat input and units > 0, got {input:?}"))),
            },
            LayerSpec::Conv1d { filters, kernel_size, stride, padding } => {
                let (len, _) = seq("conv1d")?;
                let (len_out, _) = conv_geometry(len, kernel_size, stride, padding)?;
                Ok(vec![len_out, filters])
            }
            LayerSpec::MaxPool1d { size } => {
                let (len, ch) = seq("maxpool1d")?;
                if size == 0 || len / size == 0 {
                    return Err(Error::shape(format!("pool size {size} empties length {len}")));
                }
                Ok(vec![len / size, ch])
            }
            LayerSpec::BatchNorm1d { .. } | LayerSpec::Activation { .. } => Ok(input.to_vec()),
            LayerSpec::Lstm { hidden, return_sequences, .. } => {
                let (steps, _) = seq("lstm")?;
                Ok(if return_sequences { vec![steps, hidden] } else { vec![hidden] })
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn build(&self, input: &[usize], init: &mut Initializer) -> Result<LayerNode> {
        let channels = || input.last().copied().filter(|_| input.len() == 2).unwrap_or(1);
        Ok(match *self {
            LayerSpec::Dense { units } => {
                let fan_in = input[0];
                let w = init.glorot(vec![fan_in, units], fan_in, units);
                LayerNode::Dense(Dense::new(w, Tensor::zeros(vec![units]))?)
            }
            LayerSpec::Conv1d { filters, kernel_size, stride, padding } => {
                let ci = channels();
                let w = init.glorot(vec![kernel_size, ci, filters], kernel_size * ci, kernel_size * filters);
                LayerNode::Conv1d(Conv1d::new(w, Tensor::zeros(vec![filters]), stride, padding)?)
            }
            LayerSpec::MaxPool1d { size } => LayerNode::MaxPool1d(MaxPool1d::new(size)?),
            LayerSpec::BatchNorm1d { momentum, eps } => {
                let ch = *input.last().ok_or_else(|| Error::shape("batchnorm on empty shape"))?;
                LayerNode::BatchNorm1d(BatchNorm1d::new(ch, momentum, eps))
            }
            LayerSpec::Lstm { hidden, return_sequences, cell_activation } => {
                let n_in = channels();
                let w_x = init.glorot(vec![n_in, 4 * hidden], n_in, 4 * hidden);
                let w_h = init.glorot(vec![hidden, 4 * hidden], hidden, 4 * hidden);
                let mut bias = vec![0.0; 4 * hidden];
                bias[..hidden].iter_mut().for_each(|b| *b = LSTM_FORGET_BIAS);
                LayerNode::Lstm(Lstm::new(
                    w_x,
                    w_h,
                    Tensor::new(vec![4 * hidden], bias)?,
                    return_sequences,
                    cell_activation,
                )?)
            }
            LayerSpec::Activation { function } => LayerNode::Activation(ActivationLayer::new(function)),
            LayerSpec::Flatten => LayerNode::Flatten(Flatten::default()),
        })
    }
}

/// Glorot-uniform draws, one counter stream per weight tensor.
struct Initializer {
    rng: CounterRng,
    tensors: u64,
}

impl Initializer {
    fn glorot(&mut self, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut stream = self.rng.stream(domain::INIT, self.tensors);
        self.tensors += 1;
        let n = shape.iter().product();
        let data = (0..n).map(|_| stream.uniform(-limit, limit)).collect();
        Tensor::new(shape, data).expect("shape product matches")
    }
}

#[derive(Debug, Clone)]
pub enum LayerNode {
    Dense(Dense),
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    BatchNorm1d(BatchNorm1d),
    Lstm(Lstm),
    Activation(ActivationLayer),
    Flatten(Flatten),
}

impl LayerNode {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            LayerNode::Dense(l) => l.forward(x),
            LayerNode::Conv1d(l) => l.forward(x),
            LayerNode::MaxPool1d(l) => l.forward(x),
            LayerNode::BatchNorm1d(l) => l.forward(x, mode),
            LayerNode::Lstm(l) => l.forward(x),
            LayerNode::Activation(l) => l.forward(x),
            LayerNode::Flatten(l) => l.forward(x),
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            LayerNode::Dense(l) => l.backward(grad),
            LayerNode::Conv1d(l) => l.backward(grad),
            LayerNode::MaxPool1d(l) => l.backward(grad),
            LayerNode::BatchNorm1d(l) => l.backward(grad),
            LayerNode::Lstm(l) => l.backward(grad),
            LayerNode::Activation(l) => l.backward(grad),
            LayerNode::Flatten(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            LayerNode::Dense(l) => vec![&l.weight, &l.bias],
            LayerNode::Conv1d(l) => vec![&l.kernel, &l.bias],
            LayerNode::BatchNorm1d(l) => vec![&l.gamma, &l.beta, &l.running_mean, &l.running_var],
            LayerNode::Lstm(l) => vec![&l.w_input, &l.w_recurrent, &l.bias],
            LayerNode::MaxPool1d(_) | LayerNode::Activation(_) | LayerNode::Flatten(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            LayerNode::Dense(l) => vec![&mut l.weight, &mut l.bias],
            LayerNode::Conv1d(l) => vec![&mut l.kernel, &mut l.bias],
            LayerNode::BatchNorm1d(l) => vec![&mut l.gamma, &mut l.beta, &mut l.running_mean, &mut l.running_var],
            LayerNode::Lstm(l) => vec![&mut l.w_input, &mut l.w_recurrent, &mut l.bias],
            LayerNode::MaxPool1d(_) | LayerNode::Activation(_) | LayerNode::Flatten(_) => Vec::new(),
        }
    }
}

/// Sequential stack of layers with cached activations for reverse mode.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    layers: Vec<LayerNode>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    init_seed: u64,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, init_seed: u64) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut init = Initializer { rng: CounterRng::new(init_seed), tensors: 0 };
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in &specs {
            let next = spec.output_shape(&shape)?;
            layers.push(spec.build(&shape, &mut init)?);
            shape = next;
        }
        Ok(Self { specs, layers, input_shape, output_shape: shape, init_seed })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[LayerNode] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn input_width(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_width(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Per-layer output shapes (per sample).
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        self.specs
            .iter()
            .map(|s| {
                shape = s.output_shape(&shape).expect("validated at construction");
                shape.clone()
            })
            .collect()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let batch = x.batch();
        if x.shape().len() < 2 || x.row_len() != self.input_width() {
            return Err(Error::shape(format!(
                "network expects input [batch, {:?}], got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.input_shape);
        let mut h = x.clone().reshaped(shape)?;
        for layer in &mut self.layers {
            h = layer.forward(&h, mode)?;
        }
        if !h.all_finite() {
            return Err(Error::Domain("non-finite network output".into()));
        }
        Ok(h)
    }

    /// Backpropagates `grad_out` through the cached forward pass,
    /// accumulating into every non-frozen parameter gradient. Returns the
    /// gradient with respect to the network input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Forward in eval mode over `x` in chunks of `batch_size` rows.
    pub fn predict(&mut self, x: &Tensor, batch_size: usize) -> Result<Tensor> {
        let n = x.batch();
        let mut out = Vec::with_capacity(n * self.output_width());
        let rows: Vec<usize> = (0..n).collect();
        for chunk in rows.chunks(batch_size.max(1)) {
            out.extend(self.forward(&x.select_rows(chunk), Mode::Eval)?.into_data());
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&self.output_shape);
        Tensor::new(shape, out)
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    /// `(qualified name, param)` pairs, e.g. `3.weight`.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().into_iter().map(move |p| (format!("{i}.{}", p.name), p)))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Param::zero_grad);
    }

    /// Drops every gradient buffer; optimizers then leave the network untouched.
    pub fn freeze(&mut self) {
        self.params_mut().for_each(Param::freeze);
    }

    pub fn is_frozen(&self) -> bool {
        self.params().filter(|p| p.trainable).all(Param::is_frozen)
    }

    pub fn frozen_flags(&self) -> Vec<bool> {
        self.params().map(|p| !p.trainable || p.is_frozen()).collect()
    }

    /// SHA-256 over every parameter and buffer value (little-endian f64).
    pub fn parameter_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, p) in self.named_params() {
            hasher.update(name.as_bytes());
            for v in p.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        let params: Vec<&mut Param> = self.params_mut().collect();
        if params.len() != snapshot.len() {
            return Err(Error::shape("snapshot does not match network"));
        }
        for (p, v) in params.into_iter().zip(snapshot) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape(format!("snapshot shape {:?} vs {:?}", v.shape(), p.value.shape())));
            }
            p.value = v.clone();
        }
        Ok(())
    }
}

/// Mean over all elements of the squared difference.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.len() != target.len() || pred.batch() != target.batch() {
        return Err(Error::shape(format!("mse of {:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::shape("mse of empty tensors"));
    }
    Ok(crate::optics::mse_slices(pred.data(), target.data()))
}

/// `d mse / d pred = 2 (pred - target) / N`.
pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("mse of {:?} vs {:?}", pred.shape(), target.shape())));
    }
    let scale = 2.0 / pred.len() as f64;
    let data = pred.data().iter().zip(target.data()).map(|(p, t)| scale * (p - t)).collect();
    Tensor::new(pred.shape().to_vec(), data)
}

/// Loss and parameter gradients for one batch, in train mode.
pub fn loss_and_backward(network: &mut Network, x: &Tensor, target: &Tensor) -> Result<f64> {
    let y = network.forward(x, Mode::Train)?;
    let loss = mse(&y, target)?;
    network.backward(&mse_grad(&y, target)?)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates checked per parameter tensor; larger tensors are sampled.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { epsilon: 1e-5, max_coords_per_param: 40, seed: 0 }
    }
}

/// Maximum relative error between reverse-mode gradients and central
/// differences `(L(θ+ε) - L(θ-ε)) / 2ε`, relative error being
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn gradient_check(network: &mut Network, x: &Tensor, target: &Tensor, epsilon: f64) -> Result<f64> {
    gradient_check_with(network, x, target, GradCheckOptions { epsilon, ..GradCheckOptions::default() })
}

pub fn gradient_check_with(network: &mut Network, x: &Tensor, target: &Tensor, opts: GradCheckOptions) -> Result<f64> {
    let original = network.snapshot();
    network.zero_grad();
    loss_and_backward(network, x, target)?;
    let analytic: Vec<Option<Vec<f64>>> = network.params().map(|p| p.grad.clone()).collect();

    let mut worst = 0.0f64;
    let mut picker = CounterRng::new(opts.seed).stream(domain::TEST, 0);
    for (pi, grads) in analytic.iter().enumerate() {
        let Some(grads) = grads else { continue };
        let coords: Vec<usize> = if grads.len() <= opts.max_coords_per_param {
            (0..grads.len()).collect()
        } else {
            (0..opts.max_coords_per_param).map(|_| picker.below_usize(grads.len())).collect()
        };
        for ci in coords {
            let mut eval = |delta: f64| -> Result<f64> {
                network.restore(&original)?;
                let p = network.params_mut().nth(pi).expect("param index");
                p.value.data_mut()[ci] += delta;
                let y = network.forward(x, Mode::Train)?;
                mse(&y, target)
            };
            let numeric = (eval(opts.epsilon)? - eval(-opts.epsilon)?) / (2.0 * opts.epsilon);
            let a = grads[ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    network.restore(&original)?;
    Ok(worst)
}
