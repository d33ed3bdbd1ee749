//! Connected-component cleanup for label masks.

use super::Mask3D;

/// Keep only the largest 26-connected component of `label`; voxels of other
/// labels pass through untouched. Ties between equally sized components are
/// broken deterministically in favor of the component containing the
/// smallest linear voxel index. An empty selection yields an empty result.
pub fn largest_component(mask: &Mask3D, label: u8) -> Mask3D {
    let dims = mask.dims();
    let labels = mask.labels();
    let n = labels.len();

    // component id per voxel, usize::MAX = unassigned
    let mut comp = vec![usize::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    let (nx, ny, nz) = (dims.nx as i64, dims.ny as i64, dims.nz as i64);
    for start in 0..n {
        if labels[start] != label || comp[start] != usize::MAX {
            continue;
        }
        // Scanning in linear order means the first voxel of each component
        // is also its minimal linear index, so earlier component ids win
        // ties by construction.
        let id = sizes.len();
        sizes.push(0);
        comp[start] = id;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            sizes[id] += 1;
            let x = (idx % dims.nx) as i64;
            let y = ((idx / dims.nx) % dims.ny) as i64;
            let z = (idx / (dims.nx * dims.ny)) as i64;
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let (px, py, pz) = (x + dx, y + dy, z + dz);
                        if px < 0 || py < 0 || pz < 0 || px >= nx || py >= ny || pz >= nz {
                            continue;
                        }
                        let pidx = dims.index(px as usize, py as usize, pz as usize);
                        if labels[pidx] == label && comp[pidx] == usize::MAX {
                            comp[pidx] = id;
                            stack.push(pidx);
                        }
                    }
                }
            }
        }
    }

    let mut out = mask.clone();
    if sizes.is_empty() {
        return out;
    }
    let mut best = 0usize;
    for (id, &size) in sizes.iter().enumerate() {
        if size > sizes[best] {
            best = id;
        }
    }
    for (idx, l) in out.labels_mut().iter_mut().enumerate() {
        if *l == label && comp[idx] != best {
            *l = 0;
        }
    }
    out
}
