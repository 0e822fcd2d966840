//! Dense 3D segmented images (voxel grids of categorical phase labels)
//! together with the geometry operations every other crate builds on:
//! volume fractions, connected components, overlap/distance metrics,
//! nearest-neighbor resampling and octahedral symmetry transforms.
//!
//! Voxel layout is x-fastest: `offset = (z * ny + y) * nx + x`.

mod components;
mod grid;
mod metrics;
mod symmetry;

pub use components::{connected_components, largest_component_fraction, ComponentLabeling};
pub use grid::VoxelGrid;
pub use metrics::{dice, hausdorff, HausdorffMode};
pub use symmetry::{apply_symmetry, SymmetryElement};

/// Marrow / background label.
pub const BACKGROUND: u8 = 0;
/// Bone mineral label in the two-phase grids used throughout.
pub const MINERAL: u8 = 1;

/// Voxel adjacency used by components, surfaces and the growth rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Face adjacency (von Neumann neighborhood, 6 neighbors).
    #[default]
    Face6,
    /// Face, edge and corner adjacency (Moore neighborhood, 26 neighbors).
    Full26,
}

impl Connectivity {
    /// Neighbor offsets for this connectivity.
    pub fn offsets(self) -> &'static [(i64, i64, i64)] {
        const FACE6: [(i64, i64, i64); 6] = [
            (-1, 0, 0),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ];
        const FULL26: [(i64, i64, i64); 26] = full26();
        match self {
            Connectivity::Face6 => &FACE6,
            Connectivity::Full26 => &FULL26,
        }
    }
}

const fn full26() -> [(i64, i64, i64); 26] {
    let mut out = [(0, 0, 0); 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out[n] = (dx, dy, dz);
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
}

/// Errors raised by grid construction and the voxel operations.
#[derive(Debug, thiserror::Error)]
pub enum VoxelError {
    #[error("phase {phase} out of range: grid has {n_phases} phases")]
    InvalidPhase { phase: u8, n_phases: u8 },
    #[error("label {label} at voxel {index} out of range: grid has {n_phases} phases")]
    InvalidLabel { label: u8, index: usize, n_phases: u8 },
    #[error("grid dims {a:?} and {b:?} do not match")]
    DimMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
    #[error("data length {len} does not match dims {dims:?}")]
    DataLength { len: usize, dims: (usize, usize, usize) },
    #[error("dims must be positive, got {dims:?}")]
    ZeroDim { dims: (usize, usize, usize) },
    #[error("phase {phase} has no voxels")]
    EmptyPhase { phase: u8 },
    #[error("operation requires a cubic grid, got dims {dims:?}")]
    NotCubic { dims: (usize, usize, usize) },
    #[error("symmetry element index {index} out of range [0, 48)")]
    InvalidSymmetry { index: u8 },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, VoxelError>;
