//! Material-driven reform of multi-component furniture meshes.

pub mod assembly;
pub mod config_opt;
pub mod error;
pub mod exemplar_db;
pub mod fabrication;
pub mod geometry;
pub mod inference;
pub mod part_analysis;
pub mod pipeline;
pub mod preprocess;
pub mod similarity;
pub mod structure;
pub mod synthetic;

pub use error::{ReformError, Result};
