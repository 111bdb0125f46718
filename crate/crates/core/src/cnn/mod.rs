//! A from-scratch tensor engine and the patch classification network.

mod checkpoint;
mod dense;
mod kernels;
pub mod layers;
mod network;
mod scalar;
mod tensor;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use dense::{infer_dense, infer_placement};
pub use layers::{
    relu, relu_backward, ConvLayer, EdgeRule, FcLayer, PoolLayer, PoolMode, PoolOutput,
};
pub use network::{
    cross_entropy, softmax_normalize, NetConfig, Network, ShapeChain, AVG_POOL, CONV1_FILTERS,
    CONV2_FILTERS, FC1_UNITS, FC2_UNITS, MAX_POOL,
};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{accuracy, train, InMemorySet, LossTrace, PatchSet, TrainParams, TrainingSet};
