//! Mask morphology: connected components and bounding boxes.

use crate::grid::{BoxPrompt3D, Connectivity, Mask};
use crate::{Error, Result};

/// Largest connected component of the foreground under the given
/// connectivity. Ties in size keep the component containing the smallest
/// linear voxel index. Errors with [`Error::EmptyMask`] when the mask has no
/// foreground.
pub fn largest_connected_component(mask: &Mask, connectivity: Connectivity) -> Result<Mask> {
    let grid = &mask.grid;
    let data = mask.data();
    let offsets = connectivity.offsets();

    let mut visited = vec![false; data.len()];
    let mut best: Option<Vec<usize>> = None;
    let mut queue: Vec<usize> = Vec::new();

    // Seeds are scanned in ascending linear order, so each component is
    // discovered at its smallest linear index; keeping a component only on a
    // strictly larger size therefore implements the documented tie-break.
    for seed in 0..data.len() {
        if data[seed] == 0 || visited[seed] {
            continue;
        }
        let mut component = Vec::new();
        visited[seed] = true;
        queue.clear();
        queue.push(seed);
        while let Some(linear) = queue.pop() {
            component.push(linear);
            let [i, j, k] = grid.coords(linear);
            for off in &offsets {
                let n = [
                    i as isize + off[0],
                    j as isize + off[1],
                    k as isize + off[2],
                ];
                if !grid.contains(n) {
                    continue;
                }
                let nl = grid.linear([n[0] as usize, n[1] as usize, n[2] as usize]);
                if data[nl] != 0 && !visited[nl] {
                    visited[nl] = true;
                    queue.push(nl);
                }
            }
        }
        let keep = match &best {
            None => true,
            Some(b) => component.len() > b.len(),
        };
        if keep {
            best = Some(component);
        }
    }

    let component = best.ok_or(Error::EmptyMask)?;
    let mut out = Mask::empty(grid.clone());
    for linear in component {
        out.data_mut()[linear] = 1;
    }
    Ok(out)
}

/// Tight axis-aligned bounding box of the foreground (inclusive corners).
/// Errors with [`Error::EmptyMask`] when the mask has no foreground.
pub fn bounding_box(mask: &Mask) -> Result<BoxPrompt3D> {
    let grid = &mask.grid;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (linear, &v) in mask.data().iter().enumerate() {
        if v == 0 {
            continue;
        }
        any = true;
        let c = grid.coords(linear);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    BoxPrompt3D::new(lo, hi)
}
