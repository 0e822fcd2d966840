//! The operator set. Everything is a pure function from tensors to a new
//! tensor with the backward rule recorded on the tape. Reductions use fixed
//! orders, so results are bit-identical across runs and thread counts.

mod attention;
mod basic;
mod conv;
mod matmul;
mod norm;
mod pool;
mod softmax;

pub use attention::{multi_head_self_attention, AttentionParams};
pub use basic::{
    add_bias_channels, add_broadcast_rows, add_broadcast_tokens, concat_channels, gather_class,
    permute, sum_per_channel, sum_spatial,
};
pub use conv::conv3d;
pub use matmul::{bmm, linear, matmul};
pub use norm::{batch_norm, layer_norm, BatchNormMode, BatchNormUpdate};
pub use pool::{extract_patches, max_pool3d, tokens_to_volume, trilinear_upsample};
pub use softmax::{log_softmax, softmax};
