use crate::{Result, VoxelError};

/// Dense 3D segmented image. Each voxel carries a phase label in
/// `0..n_phases`; label 0 is the marrow/background phase.
///
/// Data is stored x-fastest: `offset = (z * ny + y) * nx + x`. Dims are
/// fixed at construction; the grid is safe to share across threads once
/// built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    nx: usize,
    ny: usize,
    nz: usize,
    n_phases: u8,
    data: Vec<u8>,
}

impl VoxelGrid {
    /// All-background grid of the given dims.
    pub fn new(dims: (usize, usize, usize), n_phases: u8) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VoxelError::ZeroDim { dims });
        }
        assert!(n_phases >= 1, "n_phases must be at least 1");
        Ok(Self {
            nx,
            ny,
            nz,
            n_phases,
            data: vec![0; nx * ny * nz],
        })
    }

    /// Wraps an existing label buffer, validating length and label range.
    pub fn from_data(dims: (usize, usize, usize), n_phases: u8, data: Vec<u8>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VoxelError::ZeroDim { dims });
        }
        if data.len() != nx * ny * nz {
            return Err(VoxelError::DataLength {
                len: data.len(),
                dims,
            });
        }
        if let Some(index) = data.iter().position(|&l| l >= n_phases) {
            return Err(VoxelError::InvalidLabel {
                label: data[index],
                index,
                n_phases,
            });
        }
        Ok(Self {
            nx,
            ny,
            nz,
            n_phases,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn n_phases(&self) -> u8 {
        self.n_phases
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of voxel (x, y, z).
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        (z * self.ny + y) * self.nx + x
    }

    /// Inverse of [`VoxelGrid::index`].
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let rest = index / self.nx;
        (x, rest % self.ny, rest / self.ny)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }

    /// Sets one voxel label. Panics on an out-of-range label; grids owned
    /// exclusively during construction are the intended call sites.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        assert!(label < self.n_phases, "label {label} out of range");
        let i = self.index(x, y, z);
        self.data[i] = label;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Label at a neighbor offset, or `None` outside the domain.
    #[inline]
    pub fn neighbor(&self, x: usize, y: usize, z: usize, d: (i64, i64, i64)) -> Option<u8> {
        let nx = x as i64 + d.0;
        let ny = y as i64 + d.1;
        let nz = z as i64 + d.2;
        if nx < 0
            || ny < 0
            || nz < 0
            || nx >= self.nx as i64
            || ny >= self.ny as i64
            || nz >= self.nz as i64
        {
            return None;
        }
        Some(self.data[self.index(nx as usize, ny as usize, nz as usize)])
    }

    fn check_phase(&self, phase: u8) -> Result<()> {
        if phase >= self.n_phases {
            return Err(VoxelError::InvalidPhase {
                phase,
                n_phases: self.n_phases,
            });
        }
        Ok(())
    }

    /// Number of voxels carrying `phase`.
    pub fn count_phase(&self, phase: u8) -> usize {
        self.data.iter().filter(|&&l| l == phase).count()
    }

    /// Fraction of voxels carrying `phase`.
    pub fn volume_fraction(&self, phase: u8) -> Result<f64> {
        self.check_phase(phase)?;
        Ok(self.count_phase(phase) as f64 / self.len() as f64)
    }

    /// Nearest-neighbor resampling to `new_dims`. Labels are categorical,
    /// so no interpolation takes place.
    pub fn resize_nearest(&self, new_dims: (usize, usize, usize)) -> Result<VoxelGrid> {
        let (mx, my, mz) = new_dims;
        if mx == 0 || my == 0 || mz == 0 {
            return Err(VoxelError::ZeroDim { dims: new_dims });
        }
        // Pixel-center mapping: out o picks in voxel floor((o + 0.5) * n / m).
        let map = |m: usize, n: usize| -> Vec<usize> {
            (0..m)
                .map(|o| (((o as f64 + 0.5) * n as f64 / m as f64) as usize).min(n - 1))
                .collect()
        };
        let xs = map(mx, self.nx);
        let ys = map(my, self.ny);
        let zs = map(mz, self.nz);
        let mut data = Vec::with_capacity(mx * my * mz);
        for &sz in &zs {
            for &sy in &ys {
                let row = (sz * self.ny + sy) * self.nx;
                for &sx in &xs {
                    data.push(self.data[row + sx]);
                }
            }
        }
        Ok(VoxelGrid {
            nx: mx,
            ny: my,
            nz: mz,
            n_phases: self.n_phases,
            data,
        })
    }
}
