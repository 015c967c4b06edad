//! Classical neural-network building blocks with explicit forward and
//! backward passes. No autodiff tape: the layer set is small and fixed, and
//! hand-written backward passes are straightforward to validate against
//! numerical gradients.

pub mod batchnorm;
pub mod conv;
pub mod loss;
pub mod ops;
pub mod tensor;

pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormState};
pub use conv::{conv2d_backward, conv2d_forward, separable_conv_forward, ConvKernels, Pad};
pub use loss::{
    cross_entropy_grad_probs, cross_entropy_loss, mse_loss, softmax_backward, softmax_batch,
    softmax_vec,
};
pub use ops::{
    avg_pool_backward, avg_pool_forward, dense_backward_batch, dense_forward,
    dense_forward_batch, dropout_backward, dropout_forward, dropout_forward_seeded,
    elu_backward, elu_forward, ActivationConfig, DenseLayer, DropoutMask,
};
pub use tensor::Tensor4;
