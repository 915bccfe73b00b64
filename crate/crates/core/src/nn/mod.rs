//! From-scratch 1D-CNN kernel: layers, analytic gradients, initialisation
//! and the Adam optimiser.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod model;
pub mod pool;

pub use activation::{relu, relu_backward};
pub use adam::{AdamState, ParamSet};
pub use conv::{window_output_len, Conv1d, ConvGrads};
pub use dense::{Dense, DenseGrads};
pub use dropout::{dropout_mask, DropoutLayer, Mode};
pub use loss::{softmax, softmax_cross_entropy};
pub use model::{init_params, Architecture, ForwardCache, Gradients, ModelParams};
pub use pool::{maxpool1d_backward, MaxPool1d, PoolIndices};
