//! Object-conditioned part network at desk scale: tensors, convolutions, the
//! object embedding pyramid, the toy encoder-decoder and its training loop.

mod conv;
mod embed;
mod net;
mod params;
mod tensor;
mod train;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrad, ConvLayer};
pub use embed::{embed_objects, EmbeddingConfig};
pub use net::{
    concat_condition, conditioned_level, toy_backward, toy_forward, toy_forward_cached,
    Conditioning, ForwardCache, ToyGrads, ToyNetConfig, ToyParams,
};
pub use params::{
    decode_params, encode_params, load_params, save_params, PARAMS_MAGIC, PARAMS_VERSION,
};
pub use tensor::{
    concat_channels, match_spatial, relu, softmax, softmax_backward, split_channels, upsample2,
    Tensor,
};
pub use train::{evaluate, predict, train_from, train_toy, Sample, TrainConfig, TrainOutcome};
