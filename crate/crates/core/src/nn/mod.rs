//! Layers with hand-derived backward passes, the residual TCN block and the
//! model builders.

mod block;
mod io;
mod layers;
mod model;
mod spec;
#[cfg(test)]
pub(crate) mod test_support;

pub use block::{residual_block_backward, residual_block_forward, BlockCache, BlockGrads, BlockParams, ConvParams};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION};
pub use layers::{
    conv1d_causal_backward, conv1d_causal_forward, dense_backward, dense_forward, dropout_backward, dropout_forward,
    flatten, relu_backward, relu_forward, softmax_xent_backward, softmax_xent_forward, unflatten, ConvCache,
    ConvGrads, DenseGrads, Mode,
};
pub use model::{argmax, ForwardPass, Model};
pub use spec::{build_cnn_baseline, build_tcn, receptive_field, ArchConfig, BuildConfig, LayerSpec, ModelKind, ModelSpec};
