//! Monthly degradation of bone-like microstructures under microgravity.
//!
//! The model removes mineral voxels from the bone surface at a monthly rate
//! `r(t) = r0 * exp(-lambda * (t - 1))`, so the loss is fast at first and
//! slows toward a steady state. With the default `r0 = 0.02` and a rate
//! decay calibrated by [`calibrate_lambda`], a 36-month run loses about 35%
//! of the initial mineral. Formation (marrow turning back into mineral) is
//! not modeled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxel_core::{VoxelGrid, BACKGROUND, MINERAL};

/// Longest supported horizon, in months.
pub const MAX_MONTHS: u32 = 36;

#[derive(Debug, thiserror::Error)]
pub enum DegradationError {
    #[error("initial monthly loss rate {0} must be in (0, 1)")]
    InvalidRate(f64),
    #[error("lambda {0} must be finite and non-negative")]
    InvalidLambda(f64),
    #[error("months {0} exceeds the {MAX_MONTHS}-month horizon")]
    TooManyMonths(u32),
    #[error("loss fraction {0} must be in [0, 1)")]
    InvalidLossFraction(f64),
    #[error("initial grid has no mineral voxels")]
    EmptyMineral,
    #[error("target loss {target:.4} unreachable for r0 {r0} over {months} months")]
    UnreachableTarget { target: f64, r0: f64, months: u32 },
    #[error("frame {index} dims {got:?} differ from {expected:?}")]
    FrameDims {
        index: usize,
        got: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
    #[error("sequence must contain at least one frame")]
    NoFrames,
    #[error(transparent)]
    Voxel(#[from] voxel_core::VoxelError),
}

pub type Result<T> = std::result::Result<T, DegradationError>;

/// Controls for one degradation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationParams {
    /// Mineral fraction lost in the first month.
    pub r0: f64,
    /// Monthly rate-decay constant; 0 keeps the rate constant.
    pub lambda: f64,
    /// Number of degradation steps (frames beyond the initial one).
    pub months: u32,
    pub seed: u64,
}

impl DegradationParams {
    pub fn new(r0: f64, lambda: f64, months: u32, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&r0) || r0 == 0.0 {
            return Err(DegradationError::InvalidRate(r0));
        }
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(DegradationError::InvalidLambda(lambda));
        }
        if months > MAX_MONTHS {
            return Err(DegradationError::TooManyMonths(months));
        }
        Ok(Self {
            r0,
            lambda,
            months,
            seed,
        })
    }

    /// Monthly loss fraction for month `t` (1-based).
    pub fn rate(&self, t: u32) -> f64 {
        self.r0 * (-self.lambda * f64::from(t - 1)).exp()
    }
}

/// Ordered frames of one microstructure over months; index 0 is the
/// initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSequence {
    pub source_id: u64,
    pub frames: Vec<VoxelGrid>,
    /// Parameters that produced the sequence, when known.
    pub params: Option<DegradationParams>,
}

impl EvolutionSequence {
    pub fn new(
        source_id: u64,
        frames: Vec<VoxelGrid>,
        params: Option<DegradationParams>,
    ) -> Result<Self> {
        let first = frames.first().ok_or(DegradationError::NoFrames)?;
        let expected = first.dims();
        for (index, f) in frames.iter().enumerate() {
            if f.dims() != expected {
                return Err(DegradationError::FrameDims {
                    index,
                    got: f.dims(),
                    expected,
                });
            }
        }
        Ok(Self {
            source_id,
            frames,
            params,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }

    pub fn n_timesteps(&self) -> usize {
        self.frames.len()
    }
}

/// Mineral voxels with at least one face-adjacent marrow neighbor. Domain
/// walls do not count as marrow.
pub fn surface_voxels(grid: &VoxelGrid) -> Vec<(usize, usize, usize)> {
    surface_indices(grid)
        .into_iter()
        .map(|i| grid.coords(i))
        .collect()
}

fn surface_indices(grid: &VoxelGrid) -> Vec<usize> {
    let (nx, ny, nz) = grid.dims();
    let data = grid.data();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = (z * ny + y) * nx + x;
                if data[i] != MINERAL {
                    continue;
                }
                let exposed = (x > 0 && data[i - 1] == BACKGROUND)
                    || (x + 1 < nx && data[i + 1] == BACKGROUND)
                    || (y > 0 && data[i - nx] == BACKGROUND)
                    || (y + 1 < ny && data[i + nx] == BACKGROUND)
                    || (z > 0 && data[i - nx * ny] == BACKGROUND)
                    || (z + 1 < nz && data[i + nx * ny] == BACKGROUND);
                if exposed {
                    out.push(i);
                }
            }
        }
    }
    out
}

/// Removes `quota` mineral voxels uniformly without replacement from the
/// surface, recomputing the surface in sub-rounds when the quota exceeds
/// it. Returns the number actually removed.
fn resorb(grid: &mut VoxelGrid, mut quota: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut removed = 0usize;
    while quota > 0 {
        let mut surface = surface_indices(grid);
        if surface.is_empty() {
            break;
        }
        let take = quota.min(surface.len());
        // Partial Fisher-Yates: the first `take` entries are a uniform
        // sample without replacement.
        for i in 0..take {
            let j = rng.random_range(i..surface.len());
            surface.swap(i, j);
        }
        for &idx in &surface[..take] {
            let (x, y, z) = grid.coords(idx);
            grid.set(x, y, z, BACKGROUND);
        }
        removed += take;
        quota -= take;
    }
    removed
}

fn round_half_up(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as usize
    }
}

/// One resorption step removing `round(loss_fraction * mineral_count)`
/// surface voxels.
pub fn degrade_step(grid: &VoxelGrid, loss_fraction: f64, rng: &mut ChaCha8Rng) -> Result<VoxelGrid> {
    if !(0.0..1.0).contains(&loss_fraction) {
        return Err(DegradationError::InvalidLossFraction(loss_fraction));
    }
    let mut next = grid.clone();
    let quota = round_half_up(loss_fraction * grid.count_phase(MINERAL) as f64);
    resorb(&mut next, quota, rng);
    Ok(next)
}

/// Runs the month-by-month simulation. Voxel quotas are rounded half-up
/// with the fractional remainder carried across months, so small grids do
/// not accumulate rounding bias. Deterministic given the seed.
pub fn simulate(initial: &VoxelGrid, params: &DegradationParams) -> Result<EvolutionSequence> {
    simulate_with_id(initial, params, 0)
}

/// [`simulate`] with an explicit source id recorded on the sequence.
pub fn simulate_with_id(
    initial: &VoxelGrid,
    params: &DegradationParams,
    source_id: u64,
) -> Result<EvolutionSequence> {
    if initial.count_phase(MINERAL) == 0 {
        return Err(DegradationError::EmptyMineral);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut frames = Vec::with_capacity(params.months as usize + 1);
    frames.push(initial.clone());
    let mut current = initial.clone();
    let mut carry = 0.0f64;
    for t in 1..=params.months {
        let mineral = current.count_phase(MINERAL);
        let quota_real = params.rate(t) * mineral as f64 + carry;
        let quota = round_half_up(quota_real);
        let removed = resorb(&mut current, quota, &mut rng);
        carry = quota_real - removed as f64;
        frames.push(current.clone());
    }
    EvolutionSequence::new(source_id, frames, Some(*params))
}

/// Finds the rate-decay constant `lambda` such that the analytic cumulative
/// loss `1 - prod_{t=1..months} (1 - r0 * exp(-lambda * (t-1)))` equals
/// `target_total_loss` within 1e-6, by bisection.
pub fn calibrate_lambda(r0: f64, target_total_loss: f64, months: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&r0) || r0 == 0.0 {
        return Err(DegradationError::InvalidRate(r0));
    }
    let unreachable = || DegradationError::UnreachableTarget {
        target: target_total_loss,
        r0,
        months,
    };
    if months == 0 || f64::from(months) * r0 < target_total_loss {
        return Err(unreachable());
    }
    let loss_at = |lambda: f64| cumulative_loss(r0, lambda, months);

    // lambda = 0 maximizes the loss; lambda -> inf leaves only the first
    // month's r0.
    let max_loss = loss_at(0.0);
    if target_total_loss > max_loss {
        return Err(unreachable());
    }
    if (target_total_loss - max_loss).abs() <= 1e-9 {
        return Ok(0.0);
    }
    if target_total_loss < r0 {
        return Err(unreachable());
    }

    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while loss_at(hi) > target_total_loss {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(unreachable());
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if loss_at(mid) > target_total_loss {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    debug_assert!((loss_at(lambda) - target_total_loss).abs() <= 1e-6);
    Ok(lambda)
}

/// Analytic total loss fraction after `months` steps.
pub fn cumulative_loss(r0: f64, lambda: f64, months: u32) -> f64 {
    let mut kept = 1.0f64;
    for t in 1..=months {
        kept *= 1.0 - r0 * (-lambda * f64::from(t - 1)).exp();
    }
    1.0 - kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_in_marrow() -> VoxelGrid {
        let mut g = VoxelGrid::new((8, 8, 8), 2).unwrap();
        for z in 2..6 {
            for y in 2..6 {
                for x in 2..6 {
                    g.set(x, y, z, 1);
                }
            }
        }
        g
    }

    fn random_mineral(side: usize, vf: f64, seed: u64) -> VoxelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..side * side * side)
            .map(|_| (rng.random::<f64>() < vf) as u8)
            .collect();
        VoxelGrid::from_data((side, side, side), 2, data).unwrap()
    }

    #[test]
    fn all_mineral_grid_has_no_surface() {
        let g = VoxelGrid::from_data((4, 4, 4), 2, vec![1; 64]).unwrap();
        assert!(surface_voxels(&g).is_empty());
    }

    #[test]
    fn single_voxel_is_its_own_surface() {
        let mut g = VoxelGrid::new((4, 4, 4), 2).unwrap();
        g.set(1, 2, 3, 1);
        assert_eq!(surface_voxels(&g), vec![(1, 2, 3)]);
    }

    #[test]
    fn solid_cube_shell_is_56_voxels() {
        let g = cube_in_marrow();
        let surf = surface_voxels(&g);
        assert_eq!(surf.len(), 56);
        for (x, y, z) in surf {
            let interior = (3..5).contains(&x) && (3..5).contains(&y) && (3..5).contains(&z);
            assert!(!interior);
        }
    }

    #[test]
    fn zero_loss_keeps_grid_identical() {
        let g = cube_in_marrow();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(degrade_step(&g, 0.0, &mut rng).unwrap(), g);
    }

    #[test]
    fn two_percent_of_hundred_removes_two() {
        // 100 mineral voxels: a 4x5x5 slab.
        let mut g = VoxelGrid::new((8, 8, 8), 2).unwrap();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..4 {
                    g.set(x, y, z, 1);
                }
            }
        }
        assert_eq!(g.count_phase(1), 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = degrade_step(&g, 0.02, &mut rng).unwrap();
        assert_eq!(next.count_phase(1), 98);
    }

    #[test]
    fn removed_voxels_come_from_the_surface() {
        let g = cube_in_marrow();
        let surface: std::collections::HashSet<_> = surface_voxels(&g).into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let next = degrade_step(&g, 0.2, &mut rng).unwrap();
        for i in 0..g.len() {
            if g.data()[i] == 1 && next.data()[i] == 0 {
                assert!(surface.contains(&g.coords(i)));
            }
        }
    }

    #[test]
    fn zero_months_gives_single_frame() {
        let g = cube_in_marrow();
        let p = DegradationParams::new(0.02, 0.0, 0, 9).unwrap();
        let seq = simulate(&g, &p).unwrap();
        assert_eq!(seq.n_timesteps(), 1);
        assert_eq!(seq.frames[0], g);
    }

    #[test]
    fn first_month_loss_matches_r0_within_rounding() {
        let g = random_mineral(32, 0.4, 3);
        let initial = g.count_phase(1) as f64;
        let p = DegradationParams::new(0.02, 0.1, 1, 4).unwrap();
        let seq = simulate(&g, &p).unwrap();
        let lost = initial - seq.frames[1].count_phase(1) as f64;
        assert!((lost / initial - 0.02).abs() < 1.0 / initial);
    }

    #[test]
    fn mineral_count_is_monotone_and_no_formation() {
        let g = random_mineral(24, 0.35, 8);
        let p = DegradationParams::new(0.03, 0.05, 12, 2).unwrap();
        let seq = simulate(&g, &p).unwrap();
        let mut last = usize::MAX;
        for (t, f) in seq.frames.iter().enumerate() {
            let count = f.count_phase(1);
            assert!(count <= last, "count grew at t={t}");
            last = count;
        }
        for w in seq.frames.windows(2) {
            for i in 0..w[0].len() {
                assert!(!(w[0].data()[i] == 0 && w[1].data()[i] == 1), "formation occurred");
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let g = random_mineral(16, 0.3, 1);
        let p = DegradationParams::new(0.02, 0.02, 6, 42).unwrap();
        assert_eq!(simulate(&g, &p).unwrap(), simulate(&g, &p).unwrap());
    }

    #[test]
    fn lambda_zero_closed_form() {
        let loss = cumulative_loss(0.02, 0.0, 36);
        assert!((loss - (1.0 - 0.98f64.powi(36))).abs() < 1e-12);
        assert!((loss - 0.5168).abs() < 1e-3);
    }

    #[test]
    fn calibration_reproduces_target() {
        let lambda = calibrate_lambda(0.02, 0.35, 36).unwrap();
        assert!(lambda > 0.0);
        assert!((cumulative_loss(0.02, lambda, 36) - 0.35).abs() <= 1e-6);
    }

    #[test]
    fn calibration_boundary_and_errors() {
        assert_eq!(calibrate_lambda(0.02, 0.02, 1).unwrap(), 0.0);
        assert!(matches!(
            calibrate_lambda(0.02, 0.6, 36),
            Err(DegradationError::UnreachableTarget { .. })
        ));
        assert!(matches!(
            calibrate_lambda(0.02, 0.01, 36),
            Err(DegradationError::UnreachableTarget { .. })
        ));
    }

    #[test]
    fn calibrated_simulation_hits_35_percent_window() {
        let lambda = calibrate_lambda(0.02, 0.35, 36).unwrap();
        let g = random_mineral(64, 0.35, 77);
        let p = DegradationParams::new(0.02, lambda, 36, 5).unwrap();
        let seq = simulate(&g, &p).unwrap();
        let initial = seq.frames[0].count_phase(1) as f64;
        let last = seq.frames[36].count_phase(1) as f64;
        let loss = 1.0 - last / initial;
        assert!((0.30..=0.40).contains(&loss), "loss = {loss}");

        // Decreasing-slope curve: realized monthly fractions non-increasing.
        let mut prev = f64::INFINITY;
        for t in 1..seq.frames.len() {
            let a = seq.frames[t - 1].count_phase(1) as f64;
            let b = seq.frames[t].count_phase(1) as f64;
            let frac = (a - b) / a;
            assert!(frac <= prev + 1e-9, "loss fraction rose at t={t}");
            prev = frac;
        }
    }

    #[test]
    fn empty_mineral_is_rejected() {
        let g = VoxelGrid::new((4, 4, 4), 2).unwrap();
        let p = DegradationParams::new(0.02, 0.0, 3, 0).unwrap();
        assert!(matches!(simulate(&g, &p), Err(DegradationError::EmptyMineral)));
    }
}
