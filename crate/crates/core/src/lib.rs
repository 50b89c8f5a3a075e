//! Correlation explanation (CorEx): learning hierarchies of discrete latent
//! factors that explain the total correlation among observed variables.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod info;
pub mod layer;
pub mod model;
pub mod synthetic;

pub use data::{DataMatrix, MISSING};
pub use error::{Error, Result};
pub use hierarchy::{fit_hierarchy, ClusterAssignment, Hierarchy};
pub use layer::{fit_layer, CorexConfig, CorexLayer, SoftLabels};
pub use model::Model;
pub use synthetic::{generate, GroundTruth, LatentTreeSpec};
