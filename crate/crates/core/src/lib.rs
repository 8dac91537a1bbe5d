pub mod bounds;
pub mod data;
pub mod error;
pub mod explainers;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod neighborhood;
pub mod regularizers;
pub mod harness;

pub use data::{Dataset, Task};
pub use error::{Error, ErrorClass, Result};
pub use explainers::{Explainer, Explanation, ExplanationKind};
pub use linalg::Matrix;
pub use model::{Activation, InputGradient, MlpModel, Predictor};
pub use neighborhood::{NeighborhoodKind, NeighborhoodSpec};
pub use regularizers::{RegularizerConfig, RegularizerKind};
