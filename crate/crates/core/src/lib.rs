pub mod conv;
pub mod data;
pub mod dd;
pub mod error;
pub mod metrics;
pub mod network;
pub mod recurrent;
pub mod rng;
pub mod tensor;

pub use data::{HsiCube, LabelMap, PatchSet};
pub use error::{Error, LoadError, Result};
pub use metrics::ConfusionMatrix;
pub use network::{ArchConfig, HssnbModel, TrainConfig};
pub use rng::Rng;
pub use tensor::Tensor;
