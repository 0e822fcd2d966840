use std::collections::HashMap;
use std::path::Path;

use voxel_core::{VoxelGrid, BACKGROUND, MINERAL};

use crate::{data_err, runtime_err, CliResult};

/// Writes one grayscale PNG per z slice: label 0 maps to 0, the top label
/// to 255.
pub fn write_slices(grid: &VoxelGrid, out_dir: &Path) -> CliResult {
    std::fs::create_dir_all(out_dir).map_err(runtime_err)?;
    let (nx, ny, nz) = grid.dims();
    let scale = 255.0 / f64::from(grid.n_phases().max(2) - 1);
    for z in 0..nz {
        let mut img = image::GrayImage::new(nx as u32, ny as u32);
        for y in 0..ny {
            for x in 0..nx {
                let v = (f64::from(grid.get(x, y, z)) * scale).round() as u8;
                img.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        img.save(out_dir.join(format!("slice_{z:03}.png")))
            .map_err(data_err)?;
    }
    println!("wrote {nz} slices to {}", out_dir.display());
    Ok(())
}

/// Quad corners for each of the six voxel faces, wound outward. Offsets
/// are relative to the voxel's min corner.
const FACES: [((i64, i64, i64), [(usize, usize, usize); 4]); 6] = [
    // -x
    ((-1, 0, 0), [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)]),
    // +x
    ((1, 0, 0), [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)]),
    // -y
    ((0, -1, 0), [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)]),
    // +y
    ((0, 1, 0), [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)]),
    // -z
    ((0, 0, -1), [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)]),
    // +z
    ((0, 0, 1), [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]),
];

/// Extracts the mineral surface as exact voxel faces (two triangles per
/// exposed face) and writes Wavefront OBJ. An empty phase gives an empty
/// mesh.
pub fn write_mesh(grid: &VoxelGrid, out: &Path) -> CliResult {
    let (nx, ny, nz) = grid.dims();
    let mut vertices: Vec<(usize, usize, usize)> = Vec::new();
    let mut vertex_ids: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    let mut vertex_id = |v: (usize, usize, usize),
                         vertices: &mut Vec<(usize, usize, usize)>| {
        *vertex_ids.entry(v).or_insert_with(|| {
            vertices.push(v);
            vertices.len() - 1
        })
    };

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid.get(x, y, z) != MINERAL {
                    continue;
                }
                for (offset, corners) in FACES {
                    // Faces against the domain wall count as exposed.
                    let exposed = match grid.neighbor(x, y, z, offset) {
                        Some(label) => label == BACKGROUND,
                        None => true,
                    };
                    if !exposed {
                        continue;
                    }
                    let ids: Vec<usize> = corners
                        .iter()
                        .map(|&(dx, dy, dz)| {
                            vertex_id((x + dx, y + dy, z + dz), &mut vertices)
                        })
                        .collect();
                    triangles.push([ids[0], ids[1], ids[2]]);
                    triangles.push([ids[0], ids[2], ids[3]]);
                }
            }
        }
    }

    let mut text = String::with_capacity(32 * (vertices.len() + triangles.len()) + 64);
    text.push_str("# osteovox voxel-face surface mesh\n");
    for (x, y, z) in &vertices {
        text.push_str(&format!("v {x} {y} {z}\n"));
    }
    for [a, b, c] in &triangles {
        text.push_str(&format!("f {} {} {}\n", a + 1, b + 1, c + 1));
    }
    std::fs::write(out, text).map_err(runtime_err)?;
    println!(
        "wrote {} vertices, {} triangles to {}",
        vertices.len(),
        triangles.len(),
        out.display()
    );
    Ok(())
}
