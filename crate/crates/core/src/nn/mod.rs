//! A small tensor engine with hand-written forward and backward passes, Adam,
//! and seeded initialization. Generic over `f32` (training) and `f64`
//! (gradient checking).

mod adam;
mod checkpoint;
mod init;
mod layers;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use init::seeded_init;
pub use layers::{
    one_hot, relu, relu_backward, softmax, softmax_cross_entropy, softmax_cross_entropy_backward,
    Conv2d, ConvCache, Dense, LayerParams, MaxPool2d, ParamGrads, PoolCache,
};
pub use tensor::{Scalar, Tensor};
