//! HetMiGen: probabilistic cellular-automata growth of heterogeneous
//! microstructures on a voxel grid.
//!
//! Each microstructure is described by one CSV record of growth controls
//! (seed counts, per-phase growth thresholds, decay, proximity and
//! clustering flags). Phases grow from randomly placed seeds under the
//! von Neumann neighborhood until their target volume fractions are met,
//! then optionally get reduced to their largest connected component.

mod generator;
mod params;

pub use generator::{apply_clustering, generate, GenerationOutcome, GeneratorState};
pub use params::{parse_params_csv, GenerationParams};

/// Errors from CSV parsing and generation.
#[derive(Debug, thiserror::Error)]
pub enum HetmigenError {
    #[error("line {line}, column {column}: {message}")]
    Csv {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Voxel(#[from] voxel_core::VoxelError),
}

pub type Result<T> = std::result::Result<T, HetmigenError>;
