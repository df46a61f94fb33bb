use crate::error::{Error, Result};
use crate::geometry::{OccupancyGrid, TriangleMesh};

/// An axis-perpendicular rectangle on a primitive's surface. `lo` and `hi`
/// are diagonal corners sharing the coordinate on `axis` (the loop plane is
/// perpendicular to that axis); in-plane coordinates satisfy `lo <= hi`
/// componentwise, zero-area rectangles allowed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeLoop {
    pub axis: usize,
    pub lo: [i32; 3],
    pub hi: [i32; 3],
    pub owner: usize,
}

impl EdgeLoop {
    pub fn new(axis: usize, lo: [i32; 3], hi: [i32; 3], owner: usize) -> Self {
        let l = Self { axis, lo, hi, owner };
        debug_assert!(l.is_planar(), "corners must share the axis coordinate");
        debug_assert!(l.in_plane_ordered(), "in-plane corners must be ordered");
        l
    }

    pub fn is_planar(&self) -> bool {
        self.axis < 3 && self.lo[self.axis] == self.hi[self.axis]
    }

    pub fn in_plane_ordered(&self) -> bool {
        let (u, v) = in_plane_axes(self.axis);
        self.lo[u] <= self.hi[u] && self.lo[v] <= self.hi[v]
    }

    /// Position of the loop plane along its normal axis.
    pub fn plane(&self) -> i32 {
        self.lo[self.axis]
    }

    /// The four ring corners in consistent cyclic order, as real points.
    pub fn ring(&self) -> [[f64; 3]; 4] {
        let (u, v) = in_plane_axes(self.axis);
        let w = self.plane() as f64;
        let (u0, u1) = (self.lo[u] as f64, self.hi[u] as f64);
        let (v0, v1) = (self.lo[v] as f64, self.hi[v] as f64);
        let mut corners = [[0.0; 3]; 4];
        for (slot, &(cu, cv)) in [(u0, v0), (u1, v0), (u1, v1), (u0, v1)].iter().enumerate() {
            corners[slot][self.axis] = w;
            corners[slot][u] = cu;
            corners[slot][v] = cv;
        }
        corners
    }
}

/// The two in-plane axes for a loop normal, in ascending order.
pub fn in_plane_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("axis out of range: {axis}"),
    }
}

/// Groups loop indices by owner, owners in first-appearance order, each
/// group's loops sorted by plane position (stable).
fn owner_groups(loops: &[EdgeLoop]) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, l) in loops.iter().enumerate() {
        match groups.iter_mut().find(|(o, _)| *o == l.owner) {
            Some((_, v)) => v.push(i),
            None => groups.push((l.owner, vec![i])),
        }
    }
    for (_, v) in &mut groups {
        v.sort_by_key(|&i| loops[i].plane());
    }
    groups
}

fn check_owner_group(loops: &[EdgeLoop], owner: usize, members: &[usize]) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::contract(format!("owner {owner} has fewer than 2 loops")));
    }
    let axis = loops[members[0]].axis;
    if members.iter().any(|&i| loops[i].axis != axis) {
        return Err(Error::contract(format!("owner {owner} mixes loop axes")));
    }
    Ok(())
}

/// Lofts each owner's loop stack into a closed triangle surface: consecutive
/// loop pairs become 4 side quads (2 triangles each), the first and last
/// loops are capped with 2 triangles each. Per-owner meshes are concatenated.
pub fn loft_mesh(loops: &[EdgeLoop]) -> Result<TriangleMesh> {
    let mut mesh = TriangleMesh::default();
    for (owner, members) in owner_groups(loops) {
        check_owner_group(loops, owner, &members)?;
        let base = mesh.vertices.len();
        for &i in &members {
            mesh.vertices.extend_from_slice(&loops[i].ring());
        }
        let ring = |stack: usize, corner: usize| base + stack * 4 + corner;
        // Bottom cap, then side quads, then top cap.
        mesh.push_triangle([ring(0, 0), ring(0, 2), ring(0, 1)]);
        mesh.push_triangle([ring(0, 0), ring(0, 3), ring(0, 2)]);
        for s in 0..members.len() - 1 {
            for j in 0..4 {
                let k = (j + 1) % 4;
                mesh.push_triangle([ring(s, j), ring(s, k), ring(s + 1, k)]);
                mesh.push_triangle([ring(s, j), ring(s + 1, k), ring(s + 1, j)]);
            }
        }
        let top = members.len() - 1;
        mesh.push_triangle([ring(top, 0), ring(top, 1), ring(top, 2)]);
        mesh.push_triangle([ring(top, 0), ring(top, 2), ring(top, 3)]);
    }
    Ok(mesh)
}

/// Flat cell indices of one owner's solid. Loops must be that owner's full
/// stack, sorted by plane. For every voxel slab between two bounding loops
/// the cross-section is the linear interpolation of their rectangles at the
/// slab center; a cell is inside iff its center lies in that rectangle.
pub fn owner_cells(loops: &[EdgeLoop], resolution: u32) -> Vec<u32> {
    let r = resolution as i64;
    let mut cells = Vec::new();
    if loops.is_empty() {
        return cells;
    }
    let axis = loops[0].axis;
    let (u, v) = in_plane_axes(axis);
    let stride = [1i64, r, r * r];
    for pair in loops.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (c0, c1) = (a.plane(), b.plane());
        debug_assert!(c0 <= c1, "loops must be sorted by plane");
        for k in c0..c1 {
            let t = (k as f64 + 0.5 - c0 as f64) / (c1 - c0) as f64;
            let lerp = |x0: i32, x1: i32| x0 as f64 + (x1 - x0) as f64 * t;
            let (u0, u1) = (lerp(a.lo[u], b.lo[u]), lerp(a.hi[u], b.hi[u]));
            let (v0, v1) = (lerp(a.lo[v], b.lo[v]), lerp(a.hi[v], b.hi[v]));
            let iu0 = (u0 - 0.5).ceil() as i64;
            let iu1 = (u1 - 0.5).floor() as i64;
            let iv0 = (v0 - 0.5).ceil() as i64;
            let iv1 = (v1 - 0.5).floor() as i64;
            for j in iv0..=iv1 {
                for i in iu0..=iu1 {
                    let idx = i * stride[u] + j * stride[v] + k as i64 * stride[axis];
                    cells.push(idx as u32);
                }
            }
        }
    }
    cells
}

/// Rasterizes the union of all owners' lofted solids.
pub fn voxelize_mesh(loops: &[EdgeLoop], resolution: u32) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::new(resolution);
    for (owner, members) in owner_groups(loops) {
        check_owner_group(loops, owner, &members)?;
        let stack: Vec<EdgeLoop> = members.iter().map(|&i| loops[i]).collect();
        for idx in owner_cells(&stack, resolution) {
            grid.set_index(idx as usize, true);
        }
    }
    Ok(grid)
}
