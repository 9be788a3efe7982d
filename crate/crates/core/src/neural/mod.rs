//! Minimal sequential neural-network library: dense, 1-D convolution,
//! pooling, batch norm and LSTM layers with reverse-mode gradients, Adam,
//! and a binary checkpoint format.

mod adam;
mod checkpoint;
mod layers;
mod lstm;
mod network;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{checkpoint_hash, round_to_storage, Checkpoint, MAGIC};
pub use layers::{
    activation, conv_geometry, dense_forward, sigmoid, Activation, ActivationLayer, BatchNorm1d, Conv1d, Dense,
    Flatten, MaxPool1d, Mode, Padding, Param, BATCHNORM_EPS, BATCHNORM_MOMENTUM, LEAKY_RELU_SLOPE,
};
pub use lstm::{GateValues, Lstm};
pub use network::{
    gradient_check, gradient_check_with, loss_and_backward, mse, mse_grad, GradCheckOptions, LayerKind, LayerNode,
    LayerSpec, Network, INIT_SCHEME, LSTM_FORGET_BIAS,
};
pub use tensor::Tensor;
