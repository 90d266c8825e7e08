//! Deep LSTM models for nonlinear system identification with an incremental
//! input-to-state stability (δISS) certificate on the weights.
//!
//! - [`model`]: the multi-layer LSTM and its free-run simulation
//! - [`certifier`]: gate bounds, the `ν` stability conditions and the gain
//! - [`trainer`]: truncated BPTT with a stability penalty and RMSProp
//! - [`datasets`]: surrogate experiment generation, normalization and splits
//! - [`evaluation`]: FIT index and test traces

pub mod certifier;
pub mod config;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod model;
pub mod persist;
pub mod pipeline;
pub mod trainer;

pub use certifier::{certify, iss_gain, nu, StabilityCertificate};
pub use config::{ModelConfig, PipelineConfig};
pub use error::{Error, Result};
pub use evaluation::{evaluate, fit_index, EvalResult};
pub use model::{DeepLstmModel, LayerWeights, ModelState};
pub use persist::{load_model, save_model};
pub use trainer::{train, TrainConfig, TrainReport};
