//! Dense arrays, MLPs with explicit backprop, Adam, distribution heads and
//! running normalization.

mod adam;
mod dist;
mod mlp;
mod normalize;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use dist::{gaussian_log_density, log_softmax, CategoricalHead, GaussianHead, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{sigmoid, ForwardCache, HiddenActivation, Linear, MlpGradients, MlpModel, OutputTransform};
pub use normalize::RunningNormalizer;
pub use tensor::DenseArray;

