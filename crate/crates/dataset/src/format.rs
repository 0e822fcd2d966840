use std::path::Path;

use degradation::EvolutionSequence;
use voxel_core::VoxelGrid;

use crate::{DatasetError, Result};

/// File magic of the evolution format.
pub const EVOLUTION_MAGIC: &[u8; 4] = b"OVXE";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

/// Writes a sequence in the evolution format: magic, version, dims,
/// timestep count and phase count as u32 little-endian, followed by the
/// frames as raw label bytes (x-fastest).
pub fn write_evolution(seq: &EvolutionSequence, path: &Path) -> Result<()> {
    let (nx, ny, nz) = seq.dims();
    let n_phases = seq.frames[0].n_phases();
    let mut bytes = Vec::with_capacity(HEADER_LEN + seq.n_timesteps() * nx * ny * nz);
    bytes.extend_from_slice(EVOLUTION_MAGIC);
    for v in [
        VERSION,
        nx as u32,
        ny as u32,
        nz as u32,
        seq.n_timesteps() as u32,
        u32::from(n_phases),
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for frame in &seq.frames {
        bytes.extend_from_slice(frame.data());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads and validates an evolution file. The sequence's source id is not
/// part of the format; see [`read_evolution_with_id`].
pub fn read_evolution(path: &Path) -> Result<EvolutionSequence> {
    read_evolution_with_id(path, 0)
}

pub fn read_evolution_with_id(path: &Path, source_id: u64) -> Result<EvolutionSequence> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(DatasetError::Truncated {
            path: display,
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    if &bytes[0..4] != EVOLUTION_MAGIC {
        return Err(DatasetError::BadMagic { path: display });
    }
    let u32_at = |offset: usize| -> u32 {
        u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
    };
    let version = u32_at(4);
    if version != VERSION {
        return Err(DatasetError::Version {
            path: display,
            version,
        });
    }
    let nx = u32_at(8) as usize;
    let ny = u32_at(12) as usize;
    let nz = u32_at(16) as usize;
    let n_timesteps = u32_at(20) as usize;
    let n_phases = u32_at(24);

    let header_check: [(&'static str, u64, usize); 5] = [
        ("nx", nx as u64, 8),
        ("ny", ny as u64, 12),
        ("nz", nz as u64, 16),
        ("n_timesteps", n_timesteps as u64, 20),
        ("n_phases", u64::from(n_phases), 24),
    ];
    for (field, value, offset) in header_check {
        if value == 0 {
            return Err(DatasetError::Header {
                path: display,
                field,
                value,
                offset,
            });
        }
    }
    if n_phases > 255 {
        return Err(DatasetError::Header {
            path: display,
            field: "n_phases",
            value: u64::from(n_phases),
            offset: 24,
        });
    }

    let frame_len = nx * ny * nz;
    let expected = HEADER_LEN + n_timesteps * frame_len;
    if bytes.len() != expected {
        return Err(DatasetError::Truncated {
            path: display,
            expected,
            got: bytes.len(),
        });
    }
    let mut frames = Vec::with_capacity(n_timesteps);
    for t in 0..n_timesteps {
        let start = HEADER_LEN + t * frame_len;
        let data = bytes[start..start + frame_len].to_vec();
        if let Some(k) = data.iter().position(|&l| u32::from(l) >= n_phases) {
            return Err(DatasetError::Label {
                path: display,
                label: data[k],
                offset: start + k,
                n_phases,
            });
        }
        frames.push(VoxelGrid::from_data((nx, ny, nz), n_phases as u8, data)?);
    }
    Ok(EvolutionSequence::new(source_id, frames, None)?)
}
