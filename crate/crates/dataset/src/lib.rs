//! Storage, curation and sampling of microstructure evolution sequences:
//! a bit-exact binary file format, quality filtering by mineral clustering,
//! deterministic stratified train/val/test splits, and volume-fraction
//! balanced batch sampling with octahedral augmentation.

mod format;
mod manifest;
mod sampler;

pub use format::{read_evolution, read_evolution_with_id, write_evolution, EVOLUTION_MAGIC};
pub use manifest::{
    build_manifest, quality_filter, BinSpec, DatasetManifest, ManifestEntry, Split,
};
pub use sampler::{sample_batch, SequenceStore, TrainingSample};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: bad magic at byte 0: expected \"OVXE\"")]
    BadMagic { path: String },
    #[error("{path}: unsupported format version {version} at byte 4")]
    Version { path: String, version: u32 },
    #[error("{path}: invalid header field {field} = {value} at byte {offset}")]
    Header {
        path: String,
        field: &'static str,
        value: u64,
        offset: usize,
    },
    #[error("{path}: truncated: expected {expected} bytes, got {got}")]
    Truncated {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: label {label} at byte {offset} out of range ({n_phases} phases)")]
    Label {
        path: String,
        label: u8,
        offset: usize,
        n_phases: u32,
    },
    #[error("no files passed the quality filter")]
    NoUsableFiles,
    #[error("split {split:?} has no entry usable at horizon {horizon}")]
    NoEligibleEntries { split: Split, horizon: u32 },
    #[error("manifest parse error: {0}")]
    ManifestParse(#[from] toml::de::Error),
    #[error("manifest serialize error: {0}")]
    ManifestSerialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Voxel(#[from] voxel_core::VoxelError),
    #[error(transparent)]
    Degradation(#[from] degradation::DegradationError),
}

pub type Result<T> = std::result::Result<T, DatasetError>;
