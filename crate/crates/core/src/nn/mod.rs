//! Minimal layer engine with backpropagation, the MLP and CNN builders,
//! mini-batch training and gradient verification.

pub mod gradcheck;
mod layers;
mod model;
mod tensor;
mod train;

pub use layers::{
    bce_batch_loss, bce_loss, conv2d_forward, dense_forward, dropout_forward, maxpool_forward,
    relu, sigmoid, sigmoid_scalar, Conv2d, Dense, Layer, LayerGrad, LayerKind, Mode, BCE_EPSILON,
};
pub use model::{
    build_cnn, build_cnn_with, build_mlp, build_mlp_with, Architecture, Backprop, Gradients,
    NetModel, CNN_DROPOUT, CNN_FILTERS,
};
pub use tensor::Tensor;
pub use train::{history_csv, train, Adam, EpochRecord, TrainConfig};
