use crate::{Result, VoxelError, VoxelGrid};

/// Axis permutations in a fixed order; index 0 is the identity.
const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// One of the 48 elements of the octahedral symmetry group of a cube
/// (axis permutations combined with per-axis mirror flips).
///
/// Element `index = perm * 8 + flips` where `perm` selects an axis
/// permutation and bit `a` of `flips` mirrors output axis `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryElement {
    index: u8,
}

impl SymmetryElement {
    pub const IDENTITY: SymmetryElement = SymmetryElement { index: 0 };
    pub const COUNT: usize = 48;

    pub fn new(index: u8) -> Result<Self> {
        if index >= 48 {
            return Err(VoxelError::InvalidSymmetry { index });
        }
        Ok(Self { index })
    }

    pub fn index(self) -> u8 {
        self.index
    }

    /// All 48 elements in index order.
    pub fn all() -> impl Iterator<Item = SymmetryElement> {
        (0..48).map(|index| SymmetryElement { index })
    }

    fn perm(self) -> [usize; 3] {
        PERMS[(self.index / 8) as usize]
    }

    fn flips(self) -> [bool; 3] {
        let f = self.index % 8;
        [f & 1 != 0, f & 2 != 0, f & 4 != 0]
    }

    /// Source coordinate sampled for output coordinate `v` on a cube of
    /// side `n`.
    #[inline]
    pub fn source(self, v: [usize; 3], n: usize) -> [usize; 3] {
        let p = self.perm();
        let f = self.flips();
        let mut u = [0usize; 3];
        for a in 0..3 {
            let w = v[p[a]];
            u[a] = if f[a] { n - 1 - w } else { w };
        }
        u
    }

    /// Element equivalent to applying `other` first and then `self`.
    pub fn compose(self, other: SymmetryElement) -> SymmetryElement {
        // Transforms compose as T_other ∘ T_self on source lookups.
        let (pa, fa) = (self.perm(), self.flips());
        let (pb, fb) = (other.perm(), other.flips());
        let mut p = [0usize; 3];
        let mut f = [false; 3];
        for a in 0..3 {
            p[a] = pa[pb[a]];
            f[a] = fb[a] ^ fa[pb[a]];
        }
        let perm_idx = PERMS.iter().position(|q| *q == p).expect("closed group");
        let flip_bits = f[0] as u8 | (f[1] as u8) << 1 | (f[2] as u8) << 2;
        SymmetryElement {
            index: perm_idx as u8 * 8 + flip_bits,
        }
    }

    pub fn inverse(self) -> SymmetryElement {
        SymmetryElement::all()
            .find(|&c| c.compose(self) == SymmetryElement::IDENTITY)
            .expect("every group element has an inverse")
    }
}

/// Applies an octahedral symmetry element to a cubic grid.
pub fn apply_symmetry(grid: &VoxelGrid, s: SymmetryElement) -> Result<VoxelGrid> {
    let (nx, ny, nz) = grid.dims();
    if nx != ny || ny != nz {
        return Err(VoxelError::NotCubic { dims: grid.dims() });
    }
    let n = nx;
    let mut data = Vec::with_capacity(grid.len());
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let u = s.source([x, y, z], n);
                data.push(grid.data()[grid.index(u[0], u[1], u[2])]);
            }
        }
    }
    VoxelGrid::from_data(grid.dims(), grid.n_phases(), data)
}
