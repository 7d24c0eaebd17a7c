//! Tensors and the convolutional network.
//!
//! Every layer is a pair of free functions (forward, backward) over
//! single-sample tensors; [`Network`] chains them according to a
//! [`NetworkSpec`]. Backward passes are derived by hand and verified against
//! finite differences in [`gradcheck`].

mod conv;
mod dense;
pub mod gradcheck;
mod init;
mod lrn;
mod model_io;
mod network;
mod pool;
mod scalar;
mod spec;
mod tensor;

pub use self::conv::{conv2d_backward, conv2d_forward, conv_output_extent, ConvGeometry, ConvGrads};
pub use self::dense::{
    check_dropout_rate, dropout, dropout_backward, fc_backward, fc_forward, relu_backward, relu_forward, softmax,
    softmax_xent, DropoutMode, FcGrads,
};
pub use self::init::{fans, glorot_uniform};
pub use self::lrn::{lrn_backward, lrn_forward, LrnParams};
pub use self::model_io::{load_network, save_network, MODEL_MAGIC, MODEL_VERSION};
pub use self::network::{BatchOutcome, ForwardMode, Gradients, Network, Params};
pub use self::pool::{maxpool_backward, maxpool_forward, pool_output_extent, PoolGeometry};
pub use self::scalar::Scalar;
pub use self::spec::{LayerSpec, NetworkSpec, Width};
pub use self::tensor::Tensor;

/// Output of the last hidden layer for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f32>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}
