//! Dense 2-D tensors, the convolution kernels the network needs, a
//! recording tape for reverse-mode gradients, and Adam.

mod adam;
mod kernels;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use kernels::{
    add, conv1d_dilated, conv1d_dilated_backward, mask_mul, pointwise_conv,
    pointwise_conv_backward, relu, sigmoid,
};
pub use tape::{Gradients, NodeId, ParamId, ParamSet, ParamTensor, Tape};
pub use tensor::Tensor2;
