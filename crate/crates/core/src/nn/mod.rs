//! Feed-forward convolutional classifiers with hand-written backprop.

mod forward;
mod io;
mod model;
mod spec;

pub use forward::{backward, forward, predict_proba, ActivationCache, Mode};
pub use io::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use model::{transfer_weights, ModelMetadata, ParamSet, TrainedModel};
pub use spec::{LayerSpec, ModelSpec, Shape};
