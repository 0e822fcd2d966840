use crate::{Connectivity, Result, VoxelError, VoxelGrid};

/// Partition of one phase into connected components.
///
/// `labels` assigns every voxel a component id; 0 marks voxels outside the
/// target phase. Ids are contiguous from 1 and ordered by descending
/// component size (ties keep discovery order).
#[derive(Debug, Clone)]
pub struct ComponentLabeling {
    labels: Vec<u32>,
    component_sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Voxel counts per component id, descending. `component_sizes()[0]`
    /// belongs to id 1.
    pub fn component_sizes(&self) -> &[usize] {
        &self.component_sizes
    }

    pub fn n_components(&self) -> usize {
        self.component_sizes.len()
    }
}

/// Labels the connected components of `phase` under the given adjacency.
pub fn connected_components(
    grid: &VoxelGrid,
    phase: u8,
    connectivity: Connectivity,
) -> Result<ComponentLabeling> {
    if phase >= grid.n_phases() {
        return Err(VoxelError::InvalidPhase {
            phase,
            n_phases: grid.n_phases(),
        });
    }
    let offsets = connectivity.offsets();
    let data = grid.data();
    let mut labels = vec![0u32; data.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    for start in 0..data.len() {
        if data[start] != phase || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y, z) = grid.coords(i);
            for &d in offsets {
                let nx = x as i64 + d.0;
                let ny = y as i64 + d.1;
                let nz = z as i64 + d.2;
                if nx < 0 || ny < 0 || nz < 0 {
                    continue;
                }
                let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                let (gx, gy, gz) = grid.dims();
                if nx >= gx || ny >= gy || nz >= gz {
                    continue;
                }
                let j = grid.index(nx, ny, nz);
                if data[j] == phase && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }

    // Relabel so that ids are ordered by descending size.
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut remap = vec![0u32; sizes.len() + 1];
    for (new_id, &old) in order.iter().enumerate() {
        remap[old + 1] = new_id as u32 + 1;
    }
    for l in labels.iter_mut() {
        if *l != 0 {
            *l = remap[*l as usize];
        }
    }
    let component_sizes = order.iter().map(|&o| sizes[o]).collect();

    Ok(ComponentLabeling {
        labels,
        component_sizes,
    })
}

/// Fraction of the phase contained in its largest connected component
/// (the paper's "clustering" measure).
pub fn largest_component_fraction(
    grid: &VoxelGrid,
    phase: u8,
    connectivity: Connectivity,
) -> Result<f64> {
    let labeling = connected_components(grid, phase, connectivity)?;
    let total: usize = labeling.component_sizes.iter().sum();
    if total == 0 {
        return Err(VoxelError::EmptyPhase { phase });
    }
    Ok(labeling.component_sizes[0] as f64 / total as f64)
}
