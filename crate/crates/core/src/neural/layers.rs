use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Mat, Tensor};
use crate::error::{Error, Result};

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through input `x` and output `y = f(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Validation(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation by name.
pub fn activation(name: &str, x: &Tensor) -> Result<Tensor> {
    let f: Activation = name.parse()?;
    let data = x.data().iter().map(|&v| f.apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// A named parameter tensor with its gradient accumulator.
///
/// Frozen parameters carry no gradient buffer. Non-trainable parameters
/// (batch-norm running statistics) are state that optimizers skip.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    pub trainable: bool,
}

impl Param {
    pub fn trainable(name: &str, value: Tensor) -> Self {
        let grad = Some(vec![0.0; value.len()]);
        Self { name: name.to_string(), value, grad, trainable: true }
    }

    pub fn buffer(name: &str, value: Tensor) -> Self {
        Self { name: name.to_string(), value, grad: None, trainable: false }
    }

    pub fn is_frozen(&self) -> bool {
        self.trainable && self.grad.is_none()
    }

    pub fn freeze(&mut self) {
        self.grad = None;
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn need_cache<'a, T>(cache: &'a Option<T>, layer: &str) -> Result<&'a T> {
    cache
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("{layer}: backward called before forward")))
}

/// `[batch, len, ch]` view of a rank-2 (`ch = 1`) or rank-3 tensor.
pub(crate) fn as_sequence(x: &Tensor, layer: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, l] => Ok((b, l, 1)),
        [b, l, c] => Ok((b, l, c)),
        ref s => Err(Error::shape(format!("{layer} expects [batch, len] or [batch, len, ch], got {s:?}"))),
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (&[inputs, outputs], &[nb]) = (weight.shape(), bias.shape()) else {
            return Err(Error::shape("dense weight must be [in, out] and bias [out]"));
        };
        if nb != outputs || inputs == 0 {
            return Err(Error::shape(format!("dense bias {nb} vs outputs {outputs}")));
        }
        Ok(Self { weight: Param::trainable("weight", weight), bias: Param::trainable("bias", bias), cache: None })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = dense_forward(x, &self.weight.value, &self.bias.value)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = need_cache(&self.cache, "dense")?;
        let (b, i, o) = (x.batch(), self.inputs(), self.outputs());
        if grad.shape() != [b, o] {
            return Err(Error::shape(format!("dense grad {:?}, expected [{b}, {o}]", grad.shape())));
        }
        if let Some(gw) = self.weight.grad.as_mut() {
            gemm(Mat::new(x.data(), b, i).t(), Mat::new(grad.data(), b, o), 1.0, gw);
        }
        if let Some(gb) = self.bias.grad.as_mut() {
            for row in grad.data().chunks_exact(o) {
                gb.iter_mut().zip(row).for_each(|(acc, g)| *acc += g);
            }
        }
        let mut dx = vec![0.0; b * i];
        gemm(Mat::new(grad.data(), b, o), Mat::new(self.weight.value.data(), i, o).t(), 0.0, &mut dx);
        Tensor::new(vec![b, i], dx)
    }
}

/// `y = x W + b` for `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let &[i, o] = weight.shape() else {
        return Err(Error::shape("dense weight must be rank 2"));
    };
    let &[b, xi] = x.shape() else {
        return Err(Error::shape(format!("dense input must be [batch, features], got {:?}", x.shape())));
    };
    if xi != i || bias.shape() != [o] {
        return Err(Error::shape(format!(
            "dense input width {xi} / bias {:?} vs weight [{i}, {o}]",
            bias.shape()
        )));
    }
    let mut y = Vec::with_capacity(b * o);
    for _ in 0..b {
        y.extend_from_slice(bias.data());
    }
    gemm(Mat::new(x.data(), b, i), Mat::new(weight.data(), i, o), 1.0, &mut y);
    Tensor::new(vec![b, o], y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// Output length and left zero-padding of a 1-D convolution.
pub fn conv_geometry(len: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if stride == 0 || kernel == 0 {
        return Err(Error::shape("kernel size and stride must be >= 1"));
    }
    match padding {
        Padding::Same => {
            if kernel % 2 == 0 {
                return Err(Error::shape(format!("same padding needs an odd kernel, got {kernel}")));
            }
            Ok((len.div_ceil(stride), (kernel - 1) / 2))
        }
        Padding::Valid => {
            if len < kernel {
                return Err(Error::shape(format!("input length {len} shorter than kernel {kernel}")));
            }
            Ok(((len - kernel) / stride + 1, 0))
        }
    }
}

/// Cross-correlation over `[batch, len, ch_in]` with kernels `[k, ch_in, ch_out]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: Padding,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Vec<f64>,
    in_shape: Vec<usize>,
    len_out: usize,
    pad: usize,
}

impl Conv1d {
    pub fn new(kernel: Tensor, bias: Tensor, stride: usize, padding: Padding) -> Result<Self> {
        let (&[k, _, co], &[nb]) = (kernel.shape(), bias.shape()) else {
            return Err(Error::shape("conv kernel must be [k, ch_in, ch_out] and bias [ch_out]"));
        };
        if nb != co {
            return Err(Error::shape(format!("conv bias {nb} vs ch_out {co}")));
        }
        if stride == 0 {
            return Err(Error::shape("stride must be >= 1"));
        }
        conv_geometry(k, k, stride, padding)?;
        Ok(Self {
            kernel: Param::trainable("kernel", kernel),
            bias: Param::trainable("bias", bias),
            stride,
            padding,
            cache: None,
        })
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.kernel.value.shape();
        (s[0], s[1], s[2])
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, len, ci) = as_sequence(x, "conv1d")?;
        let (k, kci, co) = self.dims();
        if ci != kci {
            return Err(Error::shape(format!("conv1d expects {kci} input channels, got {ci}")));
        }
        let (len_out, pad) = conv_geometry(len, k, self.stride, self.padding)?;
        let width = k * ci;
        let mut cols = vec![0.0; b * len_out * width];
        let xd = x.data();
        for bi in 0..b {
            for o in 0..len_out {
                let row = &mut cols[(bi * len_out + o) * width..][..width];
                for kk in 0..k {
                    let pos = (o * self.stride + kk) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        let src = &xd[(bi * len + pos as usize) * ci..][..ci];
                        row[kk * ci..(kk + 1) * ci].copy_from_slice(src);
                    }
                }
            }
        }
        let mut y = Vec::with_capacity(b * len_out * co);
        for _ in 0..b * len_out {
            y.extend_from_slice(self.bias.value.data());
        }
        gemm(
            Mat::new(&cols, b * len_out, width),
            Mat::new(self.kernel.value.data(), width, co),
            1.0,
            &mut y,
        );
        self.cache = Some(ConvCache { cols, in_shape: x.shape().to_vec(), len_out, pad });
        Tensor::new(vec![b, len_out, co], y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (k, ci, co) = self.dims();
        let stride = self.stride;
        let cache = need_cache(&self.cache, "conv1d")?;
        let b = cache.in_shape[0];
        let len = cache.in_shape[1];
        let rows = b * cache.len_out;
        let width = k * ci;
        if grad.shape() != [b, cache.len_out, co] {
            return Err(Error::shape(format!("conv1d grad {:?}", grad.shape())));
        }
        if let Some(gk) = self.kernel.grad.as_mut() {
            gemm(Mat::new(&cache.cols, rows, width).t(), Mat::new(grad.data(), rows, co), 1.0, gk);
        }
        if let Some(gb) = self.bias.grad.as_mut() {
            for row in grad.data().chunks_exact(co) {
                gb.iter_mut().zip(row).for_each(|(acc, g)| *acc += g);
            }
        }
        let mut dcols = vec![0.0; rows * width];
        gemm(Mat::new(grad.data(), rows, co), Mat::new(self.kernel.value.data(), width, co).t(), 0.0, &mut dcols);
        let mut dx = vec![0.0; b * len * ci];
        for bi in 0..b {
            for o in 0..cache.len_out {
                let row = &dcols[(bi * cache.len_out + o) * width..][..width];
                for kk in 0..k {
                    let pos = (o * stride + kk) as isize - cache.pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        let dst = &mut dx[(bi * len + pos as usize) * ci..][..ci];
                        dst.iter_mut().zip(&row[kk * ci..(kk + 1) * ci]).for_each(|(d, g)| *d += g);
                    }
                }
            }
        }
        Tensor::new(cache.in_shape.clone(), dx)
    }
}

/// Non-overlapping max pooling along the length axis; trailing remainder dropped.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::shape("pool size must be >= 1"));
        }
        Ok(Self { size, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, len, c) = as_sequence(x, "maxpool1d")?;
        let out_len = len / self.size;
        let xd = x.data();
        let mut y = Vec::with_capacity(b * out_len * c);
        let mut argmax = Vec::with_capacity(b * out_len * c);
        for bi in 0..b {
            for o in 0..out_len {
                for ch in 0..c {
                    let mut best = (bi * len + o * self.size) * c + ch;
                    for w in 1..self.size {
                        let idx = (bi * len + o * self.size + w) * c + ch;
                        // strict comparison keeps the first maximum on ties
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    y.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        self.cache = Some((argmax, x.shape().to_vec()));
        Tensor::new(vec![b, out_len, c], y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (argmax, in_shape) = need_cache(&self.cache, "maxpool1d")?;
        if grad.len() != argmax.len() {
            return Err(Error::shape("maxpool1d grad size"));
        }
        let mut dx = vec![0.0; in_shape.iter().product()];
        for (&idx, &g) in argmax.iter().zip(grad.data()) {
            dx[idx] += g;
        }
        Tensor::new(in_shape.clone(), dx)
    }
}

pub const BATCHNORM_MOMENTUM: f64 = 0.9;
pub const BATCHNORM_EPS: f64 = 1e-5;

/// Per-channel batch normalization over `[batch, (len,) ch]`.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`
/// with the biased batch variance.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm1d {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Param::trainable("gamma", Tensor::new(vec![channels], vec![1.0; channels]).unwrap()),
            beta: Param::trainable("beta", Tensor::zeros(vec![channels])),
            running_mean: Param::buffer("running_mean", Tensor::zeros(vec![channels])),
            running_var: Param::buffer("running_var", Tensor::new(vec![channels], vec![1.0; channels]).unwrap()),
            momentum,
            eps,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = self.channels();
        if x.shape().last() != Some(&c) || x.shape().len() < 2 {
            return Err(Error::shape(format!("batchnorm expects {c} channels, got {:?}", x.shape())));
        }
        let batch = x.batch();
        let n = x.len() / c;
        let xd = x.data();
        let (mean, inv_std) = match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(Error::shape("batchnorm in train mode needs a batch of at least 2"));
                }
                let mut mean = vec![0.0; c];
                for row in xd.chunks_exact(c) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; c];
                for row in xd.chunks_exact(c) {
                    for ch in 0..c {
                        let d = row[ch] - mean[ch];
                        var[ch] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let rm = self.running_mean.value.data_mut();
                for ch in 0..c {
                    rm[ch] = self.momentum * rm[ch] + (1.0 - self.momentum) * mean[ch];
                }
                let rv = self.running_var.value.data_mut();
                for ch in 0..c {
                    rv[ch] = self.momentum * rv[ch] + (1.0 - self.momentum) * var[ch];
                }
                let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                (mean, inv)
            }
            Mode::Eval => {
                let inv = self.running_var.value.data().iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                (self.running_mean.value.data().to_vec(), inv)
            }
        };
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        let mut xhat = Vec::with_capacity(xd.len());
        let mut y = Vec::with_capacity(xd.len());
        for row in xd.chunks_exact(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                y.push(gamma[ch] * h + beta[ch]);
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Tensor::new(x.shape().to_vec(), y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let c = self.channels();
        let cache = need_cache(&self.cache, "batchnorm1d")?;
        if grad.len() != cache.xhat.len() {
            return Err(Error::shape("batchnorm grad size"));
        }
        let n = (grad.len() / c) as f64;
        let gd = grad.data();
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (row, xh) in gd.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                sum_g[ch] += row[ch];
                sum_gx[ch] += row[ch] * xh[ch];
            }
        }
        if let Some(gg) = self.gamma.grad.as_mut() {
            gg.iter_mut().zip(&sum_gx).for_each(|(a, v)| *a += v);
        }
        if let Some(gb) = self.beta.grad.as_mut() {
            gb.iter_mut().zip(&sum_g).for_each(|(a, v)| *a += v);
        }
        let gamma = self.gamma.value.data();
        let mut dx = Vec::with_capacity(gd.len());
        for (row, xh) in gd.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                let scale = gamma[ch] * cache.inv_std[ch];
                dx.push(match cache.mode {
                    Mode::Train => scale * (row[ch] - sum_g[ch] / n - xh[ch] * sum_gx[ch] / n),
                    Mode::Eval => scale * row[ch],
                });
            }
        }
        Tensor::new(grad.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone)]
pub struct ActivationLayer {
    pub function: Activation,
    cache: Option<(Tensor, Tensor)>,
}

impl ActivationLayer {
    pub fn new(function: Activation) -> Self {
        Self { function, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let f = self.function;
        let y = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f.apply(v)).collect())?;
        self.cache = Some((x.clone(), y.clone()));
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (x, y) = need_cache(&self.cache, "activation")?;
        if grad.shape() != x.shape() {
            return Err(Error::shape("activation grad shape"));
        }
        let f = self.function;
        let dx = grad
            .data()
            .iter()
            .zip(x.data().iter().zip(y.data()))
            .map(|(g, (&xi, &yi))| g * f.derivative(xi, yi))
            .collect();
        Tensor::new(x.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Flatten {
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.in_shape = Some(x.shape().to_vec());
        let (b, w) = (x.batch(), x.row_len());
        x.clone().reshaped(vec![b, w])
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = need_cache(&self.in_shape, "flatten")?.clone();
        grad.clone().reshaped(shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn dense_identity_and_arithmetic() {
        let x = t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let eye = t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let y = dense_forward(&x, &eye, &Tensor::zeros(vec![2])).unwrap();
        assert_eq!(y, x);
        let y = dense_forward(
            &t(vec![1, 2], vec![1.0, 2.0]),
            &t(vec![2, 1], vec![1.0, 1.0]),
            &t(vec![1], vec![0.5]),
        )
        .unwrap();
        assert_eq!(y.data(), &[3.5]);
        assert!(dense_forward(&x, &t(vec![3, 1], vec![0.0; 3]), &Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn conv_identity_kernel() {
        let mut conv = Conv1d::new(t(vec![1, 1, 1], vec![1.0]), Tensor::zeros(vec![1]), 1, Padding::Same).unwrap();
        let x = t(vec![1, 4], vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(conv.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn conv_same_padding_hand_example() {
        let mut conv = Conv1d::new(t(vec![3, 1, 1], vec![1.0; 3]), Tensor::zeros(vec![1]), 1, Padding::Same).unwrap();
        let y = conv.forward(&t(vec![1, 3], vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_preserves_length_401_with_kernel_11() {
        let mut conv =
            Conv1d::new(Tensor::zeros(vec![11, 1, 2]), Tensor::zeros(vec![2]), 1, Padding::Same).unwrap();
        let y = conv.forward(&Tensor::zeros(vec![2, 401, 1])).unwrap();
        assert_eq!(y.shape(), &[2, 401, 2]);
    }

    #[test]
    fn conv_valid_and_strided_geometry() {
        assert_eq!(conv_geometry(10, 3, 1, Padding::Valid).unwrap(), (8, 0));
        assert_eq!(conv_geometry(10, 3, 2, Padding::Same).unwrap(), (5, 1));
        assert!(conv_geometry(10, 4, 1, Padding::Same).is_err());
        assert!(conv_geometry(2, 3, 1, Padding::Valid).is_err());
    }

    #[test]
    fn maxpool_values_and_floor() {
        let mut pool = MaxPool1d::new(2).unwrap();
        let y = pool.forward(&t(vec![1, 4], vec![1.0, 3.0, 2.0, 5.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
        let y = pool.forward(&Tensor::zeros(vec![1, 401, 3])).unwrap();
        assert_eq!(y.shape(), &[1, 200, 3]);
    }

    #[test]
    fn maxpool_ties_route_to_first_element() {
        let mut pool = MaxPool1d::new(2).unwrap();
        let y = pool.forward(&t(vec![1, 4], vec![7.0; 4])).unwrap();
        assert_eq!(y.data(), &[7.0, 7.0]);
        let dx = pool.backward(&t(vec![1, 2, 1], vec![1.0, 2.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn batchnorm_train_normalizes_each_channel() {
        let mut bn = BatchNorm1d::new(2, BATCHNORM_MOMENTUM, BATCHNORM_EPS);
        let x = t(vec![4, 2], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 6.0, 60.0]);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..2 {
            let col: Vec<f64> = y.data().iter().skip(ch).step_by(2).copied().collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-7);
            assert!((var - 1.0).abs() < 1e-5 * 10.0, "var {var}");
        }
    }

    #[test]
    fn batchnorm_passes_standardized_batch_through() {
        let mut bn = BatchNorm1d::new(1, BATCHNORM_MOMENTUM, BATCHNORM_EPS);
        let x = t(vec![2, 1], vec![-1.0, 1.0]);
        let y = bn.forward(&x, Mode::Train).unwrap();
        let scale = 1.0 / (1.0 + BATCHNORM_EPS).sqrt();
        assert!((y.data()[0] + scale).abs() < 1e-15);
        assert!(y.max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm1d::new(2, BATCHNORM_MOMENTUM, BATCHNORM_EPS);
        bn.running_mean.value = t(vec![2], vec![0.5, -1.0]);
        bn.running_var.value = t(vec![2], vec![4.0, 0.25]);
        bn.gamma.value = t(vec![2], vec![2.0, 3.0]);
        bn.beta.value = t(vec![2], vec![0.1, -0.2]);
        let x = t(vec![1, 2], vec![1.5, 0.0]);
        let y = bn.forward(&x, Mode::Eval).unwrap();
        let want0 = 2.0 * (1.5 - 0.5) / (4.0 + BATCHNORM_EPS).sqrt() + 0.1;
        let want1 = 3.0 * (0.0 + 1.0) / (0.25 + BATCHNORM_EPS).sqrt() - 0.2;
        assert!((y.data()[0] - want0).abs() < 1e-12);
        assert!((y.data()[1] - want1).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_rejects_single_sample_training_batch() {
        let mut bn = BatchNorm1d::new(1, BATCHNORM_MOMENTUM, BATCHNORM_EPS);
        assert!(bn.forward(&t(vec![1, 1], vec![1.0]), Mode::Train).is_err());
        assert!(bn.forward(&t(vec![1, 1], vec![1.0]), Mode::Eval).is_ok());
    }

    #[test]
    fn activations() {
        let x = t(vec![1, 2], vec![-1.0, 2.0]);
        assert_eq!(activation("relu", &x).unwrap().data(), &[0.0, 2.0]);
        assert_eq!(activation("sigmoid", &t(vec![1], vec![0.0])).unwrap().data(), &[0.5]);
        let lr = activation("leaky_relu", &t(vec![1], vec![-3.0])).unwrap();
        assert!((lr.data()[0] + 0.03).abs() < 1e-15);
        assert!(activation("gelu", &x).is_err());
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }
}
