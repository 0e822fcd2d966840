use crate::{Result, VoxelError, VoxelGrid};

/// Hausdorff variant. `Max` is the classical worst-case distance; `Average`
/// is the symmetric mean of nearest-neighbor distances, which is the variant
/// that can fall below one voxel on a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HausdorffMode {
    Max,
    Average,
}

fn check_dims(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(VoxelError::DimMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(())
}

fn check_phase(grid: &VoxelGrid, phase: u8) -> Result<()> {
    if phase >= grid.n_phases() {
        return Err(VoxelError::InvalidPhase {
            phase,
            n_phases: grid.n_phases(),
        });
    }
    Ok(())
}

/// Dice–Sørensen coefficient `2|A∩B| / (|A| + |B|)` over the voxel sets of
/// `phase`. Two empty sets count as perfect agreement (1.0).
pub fn dice(a: &VoxelGrid, b: &VoxelGrid, phase: u8) -> Result<f64> {
    check_dims(a, b)?;
    check_phase(a, phase)?;
    check_phase(b, phase)?;
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (&la, &lb) in a.data().iter().zip(b.data()) {
        let in_a = la == phase;
        let in_b = lb == phase;
        na += in_a as usize;
        nb += in_b as usize;
        inter += (in_a && in_b) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Hausdorff distance between the `phase` voxel sets of `a` and `b`, in
/// voxel units with Euclidean voxel-center distances. Both sets must be
/// nonempty.
pub fn hausdorff(a: &VoxelGrid, b: &VoxelGrid, phase: u8, mode: HausdorffMode) -> Result<f64> {
    check_dims(a, b)?;
    check_phase(a, phase)?;
    check_phase(b, phase)?;
    if a.count_phase(phase) == 0 {
        return Err(VoxelError::EmptyPhase { phase });
    }
    if b.count_phase(phase) == 0 {
        return Err(VoxelError::EmptyPhase { phase });
    }

    let dist_to_b = squared_distance_field(b, phase);
    let dist_to_a = squared_distance_field(a, phase);

    match mode {
        HausdorffMode::Max => {
            let mut worst = 0.0f64;
            for (i, &l) in a.data().iter().enumerate() {
                if l == phase {
                    worst = worst.max(dist_to_b[i]);
                }
            }
            for (i, &l) in b.data().iter().enumerate() {
                if l == phase {
                    worst = worst.max(dist_to_a[i]);
                }
            }
            Ok(worst.sqrt())
        }
        HausdorffMode::Average => {
            // Two separate directed sums keep the result exactly symmetric
            // in the arguments.
            let mut fwd = 0.0f64;
            let mut bwd = 0.0f64;
            let mut count = 0usize;
            for (i, &l) in a.data().iter().enumerate() {
                if l == phase {
                    fwd += dist_to_b[i].sqrt();
                    count += 1;
                }
            }
            for (i, &l) in b.data().iter().enumerate() {
                if l == phase {
                    bwd += dist_to_a[i].sqrt();
                    count += 1;
                }
            }
            Ok((fwd + bwd) / count as f64)
        }
    }
}

/// Exact squared Euclidean distance from every voxel to the nearest voxel
/// of `phase`, via the separable lower-envelope transform. All values are
/// exact integers represented in f64.
fn squared_distance_field(grid: &VoxelGrid, phase: u8) -> Vec<f64> {
    const INF: f64 = 1e18;
    let (nx, ny, nz) = grid.dims();
    let mut field: Vec<f64> = grid
        .data()
        .iter()
        .map(|&l| if l == phase { 0.0 } else { INF })
        .collect();

    let max_dim = nx.max(ny).max(nz);
    let mut line = vec![0.0f64; max_dim];
    let mut out = vec![0.0f64; max_dim];
    let mut v = vec![0usize; max_dim];
    let mut zbound = vec![0.0f64; max_dim + 1];

    // x pass
    for z in 0..nz {
        for y in 0..ny {
            let base = (z * ny + y) * nx;
            line[..nx].copy_from_slice(&field[base..base + nx]);
            dt_1d(&line[..nx], &mut out[..nx], &mut v, &mut zbound);
            field[base..base + nx].copy_from_slice(&out[..nx]);
        }
    }
    // y pass
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                line[y] = field[(z * ny + y) * nx + x];
            }
            dt_1d(&line[..ny], &mut out[..ny], &mut v, &mut zbound);
            for y in 0..ny {
                field[(z * ny + y) * nx + x] = out[y];
            }
        }
    }
    // z pass
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                line[z] = field[(z * ny + y) * nx + x];
            }
            dt_1d(&line[..nz], &mut out[..nz], &mut v, &mut zbound);
            for z in 0..nz {
                field[(z * ny + y) * nx + x] = out[z];
            }
        }
    }
    field
}

/// 1D squared-distance transform: `out[i] = min_j (i - j)^2 + f[j]`.
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    const INF: f64 = 1e18;
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_with(voxels: &[(usize, usize, usize)], side: usize) -> VoxelGrid {
        let mut g = VoxelGrid::new((side, side, side), 2).unwrap();
        for &(x, y, z) in voxels {
            g.set(x, y, z, 1);
        }
        g
    }

    fn random_pair(seed: u64) -> (VoxelGrid, VoxelGrid) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |density: f64| loop {
            let data: Vec<u8> = (0..512)
                .map(|_| (rng.random::<f64>() < density) as u8)
                .collect();
            if data.iter().any(|&l| l == 1) {
                return VoxelGrid::from_data((8, 8, 8), 2, data).unwrap();
            }
        };
        (gen(0.2), gen(0.3))
    }

    /// O(|A|·|B|) nearest-neighbor scan, the reference for both modes.
    pub(crate) fn brute_force_hausdorff(
        a: &VoxelGrid,
        b: &VoxelGrid,
        phase: u8,
        mode: HausdorffMode,
    ) -> f64 {
        let set = |g: &VoxelGrid| -> Vec<(f64, f64, f64)> {
            g.data()
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l == phase)
                .map(|(i, _)| {
                    let (x, y, z) = g.coords(i);
                    (x as f64, y as f64, z as f64)
                })
                .collect()
        };
        let sa = set(a);
        let sb = set(b);
        let nearest = |p: (f64, f64, f64), s: &[(f64, f64, f64)]| -> f64 {
            s.iter()
                .map(|q| {
                    let (dx, dy, dz) = (p.0 - q.0, p.1 - q.1, p.2 - q.2);
                    (dx * dx + dy * dy + dz * dz).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        };
        match mode {
            HausdorffMode::Max => {
                let fwd = sa.iter().map(|&p| nearest(p, &sb)).fold(0.0, f64::max);
                let bwd = sb.iter().map(|&q| nearest(q, &sa)).fold(0.0, f64::max);
                fwd.max(bwd)
            }
            HausdorffMode::Average => {
                let fwd: f64 = sa.iter().map(|&p| nearest(p, &sb)).sum();
                let bwd: f64 = sb.iter().map(|&q| nearest(q, &sa)).sum();
                (fwd + bwd) / (sa.len() + sb.len()) as f64
            }
        }
    }

    #[test]
    fn dice_identity() {
        let g = grid_with(&[(1, 2, 3), (2, 2, 3)], 8);
        assert_eq!(dice(&g, &g, 1).unwrap(), 1.0);
    }

    #[test]
    fn dice_two_thirds() {
        let a = grid_with(&[(0, 0, 0)], 4);
        let b = grid_with(&[(0, 0, 0), (1, 0, 0)], 4);
        assert!((dice(&a, &b, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dice_disjoint_and_empty_conventions() {
        let a = grid_with(&[(0, 0, 0)], 4);
        let b = grid_with(&[(3, 3, 3)], 4);
        assert_eq!(dice(&a, &b, 1).unwrap(), 0.0);

        let empty = VoxelGrid::new((4, 4, 4), 2).unwrap();
        assert_eq!(dice(&empty, &empty, 1).unwrap(), 1.0);
        assert_eq!(dice(&empty, &a, 1).unwrap(), 0.0);
    }

    #[test]
    fn dice_dim_mismatch() {
        let a = VoxelGrid::new((4, 4, 4), 2).unwrap();
        let b = VoxelGrid::new((5, 4, 4), 2).unwrap();
        assert!(matches!(dice(&a, &b, 1), Err(VoxelError::DimMismatch { .. })));
    }

    #[test]
    fn hausdorff_identical_sets() {
        let g = grid_with(&[(1, 1, 1), (2, 1, 1)], 8);
        assert_eq!(hausdorff(&g, &g, 1, HausdorffMode::Max).unwrap(), 0.0);
        assert_eq!(hausdorff(&g, &g, 1, HausdorffMode::Average).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_single_pair() {
        let a = grid_with(&[(0, 0, 0)], 8);
        let b = grid_with(&[(3, 0, 0)], 8);
        assert_eq!(hausdorff(&a, &b, 1, HausdorffMode::Max).unwrap(), 3.0);
        assert_eq!(hausdorff(&a, &b, 1, HausdorffMode::Average).unwrap(), 3.0);
    }

    #[test]
    fn hausdorff_empty_set_is_an_error() {
        let a = grid_with(&[(0, 0, 0)], 4);
        let empty = VoxelGrid::new((4, 4, 4), 2).unwrap();
        assert!(matches!(
            hausdorff(&a, &empty, 1, HausdorffMode::Max),
            Err(VoxelError::EmptyPhase { .. })
        ));
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        for seed in 0..30 {
            let (a, b) = random_pair(seed);
            for mode in [HausdorffMode::Max, HausdorffMode::Average] {
                let fast = hausdorff(&a, &b, 1, mode).unwrap();
                let slow = brute_force_hausdorff(&a, &b, 1, mode);
                assert!(
                    (fast - slow).abs() <= 1e-12,
                    "seed {seed} {mode:?}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn hausdorff_symmetry() {
        for seed in 40..50 {
            let (a, b) = random_pair(seed);
            for mode in [HausdorffMode::Max, HausdorffMode::Average] {
                let ab = hausdorff(&a, &b, 1, mode).unwrap();
                let ba = hausdorff(&b, &a, 1, mode).unwrap();
                assert_eq!(ab, ba);
            }
        }
    }
}
