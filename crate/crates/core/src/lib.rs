//! Large margin distribution machines: kernel and linear solvers, margin
//! analysis, cross-validated model selection and a text model format.

pub mod analysis;
pub mod data;
pub mod error;
pub mod kernel;
pub mod kernel_ldm;
pub mod linear_ldm;
pub mod model_file;
pub mod model_selection;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synthetic;

pub use data::{Label, LabeledDataset, NormalizationMap, SparseVector};
pub use error::{LdmError, Result};
pub use kernel::{GramMatrix, KernelSpec};
pub use kernel_ldm::{KernelLdmModel, KernelLdmParams};
pub use linear_ldm::{LinearLdmParams, LinearModel};
pub use model_file::{Hyperparameters, ModelFile, TrainedModel};
pub use report::SolverReport;
