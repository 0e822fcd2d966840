use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxel_core::{connected_components, Connectivity, VoxelGrid};

use crate::{GenerationParams, Result};

/// Retry budget per seed when a proximity radius is in force.
const PLACEMENT_ATTEMPTS: u32 = 100;

/// Mutable growth state for one microstructure realization.
#[derive(Debug)]
pub struct GeneratorState {
    grid: VoxelGrid,
    iteration: u32,
    current_thresholds: Vec<f64>,
    rng: ChaCha8Rng,
    phase_counts: Vec<usize>,
    target_counts: Vec<usize>,
    frozen: Vec<bool>,
    seed_shortfall: u64,
}

/// Result of a full generation run.
#[derive(Debug)]
pub struct GenerationOutcome {
    pub grid: VoxelGrid,
    /// False when some phase missed its volume-fraction target within the
    /// iteration budget.
    pub reached_target: bool,
    pub iterations: u32,
    /// Seeds that could not be placed within the retry budget.
    pub seed_shortfall: u64,
}

impl GeneratorState {
    pub fn new(dims: (usize, usize, usize), params: &GenerationParams, seed: u64) -> Result<Self> {
        let grid = VoxelGrid::new(dims, params.n_phases as u8 + 1)?;
        let total = grid.len();
        let target_counts = params
            .target_vf
            .iter()
            .map(|vf| ((vf * total as f64).round() as usize).max(1))
            .collect();
        Ok(Self {
            grid,
            iteration: 0,
            current_thresholds: (0..params.n_phases)
                .map(|p| params.threshold_at(p, 0))
                .collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            phase_counts: vec![0; params.n_phases],
            target_counts,
            frozen: vec![false; params.n_phases],
            seed_shortfall: 0,
        })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn current_thresholds(&self) -> &[f64] {
        &self.current_thresholds
    }

    pub fn seed_shortfall(&self) -> u64 {
        self.seed_shortfall
    }

    pub fn phase_count(&self, phase: usize) -> usize {
        self.phase_counts[phase]
    }

    fn refresh_frozen(&mut self) {
        for p in 0..self.frozen.len() {
            if self.phase_counts[p] >= self.target_counts[p] {
                self.frozen[p] = true;
            }
        }
    }

    /// Swaps in a grid (post-clustering), recounting phases and target
    /// freezes. The rng stream and iteration counter continue.
    fn replace_grid(&mut self, grid: VoxelGrid) {
        for p in 0..self.phase_counts.len() {
            self.phase_counts[p] = grid.count_phase(p as u8 + 1);
            self.frozen[p] = self.phase_counts[p] >= self.target_counts[p];
        }
        self.grid = grid;
    }

    fn all_frozen(&self) -> bool {
        self.frozen.iter().all(|&f| f)
    }

    /// True when any same-phase voxel lies within Chebyshev radius `r`.
    fn has_phase_within(&self, x: usize, y: usize, z: usize, label: u8, r: u32) -> bool {
        let (nx, ny, nz) = self.grid.dims();
        let r = r as i64;
        let (cx, cy, cz) = (x as i64, y as i64, z as i64);
        for dz in (cz - r).max(0)..=(cz + r).min(nz as i64 - 1) {
            for dy in (cy - r).max(0)..=(cy + r).min(ny as i64 - 1) {
                for dx in (cx - r).max(0)..=(cx + r).min(nx as i64 - 1) {
                    if self.grid.get(dx as usize, dy as usize, dz as usize) == label {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Places `count` seeds per unfrozen phase at uniformly sampled
    /// background positions, honoring each phase's proximity radius.
    /// Placement misses within the retry budget are recorded, not fatal.
    pub fn place_seeds(&mut self, params: &GenerationParams, count: u64) {
        let (nx, ny, nz) = self.grid.dims();
        for p in 0..params.n_phases {
            if self.frozen[p] {
                continue;
            }
            let label = p as u8 + 1;
            let radius = params.proximity_radius[p];
            for _ in 0..count {
                let mut placed = false;
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let x = self.rng.random_range(0..nx);
                    let y = self.rng.random_range(0..ny);
                    let z = self.rng.random_range(0..nz);
                    if self.grid.get(x, y, z) != voxel_core::BACKGROUND {
                        continue;
                    }
                    if radius > 0 && self.has_phase_within(x, y, z, label, radius) {
                        continue;
                    }
                    self.grid.set(x, y, z, label);
                    self.phase_counts[p] += 1;
                    placed = true;
                    break;
                }
                if !placed {
                    self.seed_shortfall += 1;
                }
            }
        }
        self.refresh_frozen();
    }

    /// One synchronous CA update: every background voxel adjacent (von
    /// Neumann) to an unfrozen phase adopts it with that phase's current
    /// growth probability; simultaneous multi-phase wins go to the lowest
    /// phase index. Growth probabilities are capped so the expected
    /// adoption count never exceeds the remaining distance to the target.
    pub fn grow_step(&mut self, params: &GenerationParams) {
        let (nx, ny, nz) = self.grid.dims();
        let data = self.grid.data();
        let n_phases = params.n_phases;

        // Pass 1: adjacency mask per background voxel + per-phase candidate counts.
        let mut masks = vec![0u8; data.len()];
        let mut candidates = vec![0usize; n_phases];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = (z * ny + y) * nx + x;
                    if data[i] != voxel_core::BACKGROUND {
                        continue;
                    }
                    let mut mask = 0u8;
                    if x > 0 {
                        mask |= label_bit(data[i - 1], &self.frozen);
                    }
                    if x + 1 < nx {
                        mask |= label_bit(data[i + 1], &self.frozen);
                    }
                    if y > 0 {
                        mask |= label_bit(data[i - nx], &self.frozen);
                    }
                    if y + 1 < ny {
                        mask |= label_bit(data[i + nx], &self.frozen);
                    }
                    if z > 0 {
                        mask |= label_bit(data[i - nx * ny], &self.frozen);
                    }
                    if z + 1 < nz {
                        mask |= label_bit(data[i + nx * ny], &self.frozen);
                    }
                    if mask != 0 {
                        masks[i] = mask;
                        for (p, c) in candidates.iter_mut().enumerate() {
                            if mask & (1 << p) != 0 {
                                *c += 1;
                            }
                        }
                    }
                }
            }
        }

        let mut p_eff = vec![0.0f64; n_phases];
        for p in 0..n_phases {
            let theta = self.current_thresholds[p];
            let needed = self.target_counts[p].saturating_sub(self.phase_counts[p]);
            p_eff[p] = if candidates[p] == 0 {
                0.0
            } else if theta * candidates[p] as f64 > needed as f64 {
                needed as f64 / candidates[p] as f64
            } else {
                theta
            };
        }

        // Pass 2: independent draws in voxel order; lowest index wins.
        let mut adoptions: Vec<(usize, u8)> = Vec::new();
        for (i, &mask) in masks.iter().enumerate() {
            if mask == 0 {
                continue;
            }
            let mut winner: Option<usize> = None;
            for p in 0..n_phases {
                if mask & (1 << p) == 0 {
                    continue;
                }
                let hit = self.rng.random::<f64>() < p_eff[p];
                if hit && winner.is_none() {
                    winner = Some(p);
                }
            }
            if let Some(p) = winner {
                adoptions.push((i, p as u8 + 1));
            }
        }
        for &(i, label) in &adoptions {
            let (x, y, z) = self.grid.coords(i);
            self.grid.set(x, y, z, label);
            self.phase_counts[label as usize - 1] += 1;
        }

        self.iteration += 1;
        for p in 0..n_phases {
            self.current_thresholds[p] = params.threshold_at(p, self.iteration);
        }
        self.refresh_frozen();
    }
}

#[inline]
fn label_bit(label: u8, frozen: &[bool]) -> u8 {
    if label == voxel_core::BACKGROUND || frozen[label as usize - 1] {
        0
    } else {
        1 << (label - 1)
    }
}

/// Reassigns all voxels of `phase` outside its largest 6-connected
/// component to background.
pub fn apply_clustering(grid: &VoxelGrid, phase: u8) -> Result<VoxelGrid> {
    let labeling = connected_components(grid, phase, Connectivity::Face6)?;
    if labeling.n_components() == 0 {
        return Err(voxel_core::VoxelError::EmptyPhase { phase }.into());
    }
    let mut data = grid.data().to_vec();
    for (i, &comp) in labeling.labels().iter().enumerate() {
        if comp > 1 {
            data[i] = voxel_core::BACKGROUND;
        }
    }
    Ok(VoxelGrid::from_data(grid.dims(), grid.n_phases(), data)?)
}

/// Runs the full realization loop: initial seeding, synchronous growth with
/// periodic seed-addition events, per-phase stopping at the volume-fraction
/// targets, and final clustering for flagged phases. Deterministic given
/// `(params, seed)`.
pub fn generate(
    params: &GenerationParams,
    dims: (usize, usize, usize),
    seed: u64,
    max_iterations: Option<u32>,
) -> Result<GenerationOutcome> {
    let side = dims.0.max(dims.1).max(dims.2);
    let max_iterations = max_iterations.unwrap_or(10 * side as u32);
    let mut state = GeneratorState::new(dims, params, seed)?;

    state.place_seeds(params, params.n_initial_seeds);
    while !state.all_frozen() && state.iteration < max_iterations {
        state.grow_step(params);
        if state.iteration % params.seed_frequency == 0 {
            let event = i64::from(state.iteration / params.seed_frequency);
            let count = params.n_initial_seeds as i64 + event * params.seed_increment;
            if count > 0 {
                state.place_seeds(params, count as u64);
            } else if state.phase_counts.iter().all(|&c| c == 0) && params.seed_increment <= 0 {
                // Nothing can ever grow: no phase voxels and no future seeds.
                break;
            }
        }
    }

    let mut grid = state.grid.clone();
    let mut clustered_any = false;
    for p in 0..params.n_phases {
        if params.cluster_at_end[p] && state.phase_counts[p] > 0 {
            grid = apply_clustering(&grid, p as u8 + 1)?;
            clustered_any = true;
        }
    }

    // Clustering removes stray components, which can leave a phase below
    // its target. Top up by plain growth from the retained structure (no
    // new seeds), which keeps each clustered phase a single component.
    if clustered_any {
        state.replace_grid(grid);
        while !state.all_frozen() && state.iteration < max_iterations {
            let before: usize = state.phase_counts.iter().sum();
            state.grow_step(params);
            if state.phase_counts.iter().sum::<usize>() == before {
                break; // no growable surface or thresholds decayed to zero
            }
        }
    }

    let reached_target = state.all_frozen();
    Ok(GenerationOutcome {
        grid: state.grid,
        reached_target,
        iterations: state.iteration,
        seed_shortfall: state.seed_shortfall,
    })
}
