use crate::error::{Error, Result};
use crate::geometry::OccupancyGrid;

/// An axis-aligned box given by two diagonal integer corners, editable by the
/// primitive agent. Coordinates live in `[0, R]`; the box covers the
/// half-open cell range `[min, max)` per axis, so a live box always has
/// extent >= 1 on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cuboid {
    pub min: [i32; 3],
    pub max: [i32; 3],
    pub deleted: bool,
}

impl Cuboid {
    pub fn new(min: [i32; 3], max: [i32; 3]) -> Self {
        let c = Self { min, max, deleted: false };
        debug_assert!(c.extents_valid(), "degenerate cuboid {min:?}..{max:?}");
        c
    }

    fn extents_valid(&self) -> bool {
        (0..3).all(|a| self.min[a] < self.max[a])
    }

    pub fn in_bounds(&self, resolution: u32) -> bool {
        let r = resolution as i32;
        (0..3).all(|a| self.min[a] >= 0 && self.max[a] <= r)
    }

    pub fn volume(&self) -> i64 {
        (0..3).map(|a| (self.max[a] - self.min[a]) as i64).product()
    }

    pub fn contains_cell(&self, x: i32, y: i32, z: i32) -> bool {
        let p = [x, y, z];
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    /// Volume of the overlap with another box (0 if disjoint).
    pub fn overlap_volume(&self, other: &Cuboid) -> i64 {
        let mut v = 1i64;
        for a in 0..3 {
            let lo = self.min[a].max(other.min[a]);
            let hi = self.max[a].min(other.max[a]);
            if hi <= lo {
                return 0;
            }
            v *= (hi - lo) as i64;
        }
        v
    }

    /// The smallest box containing both inputs.
    pub fn bounding(&self, other: &Cuboid) -> Cuboid {
        let mut min = [0i32; 3];
        let mut max = [0i32; 3];
        for a in 0..3 {
            min[a] = self.min[a].min(other.min[a]);
            max[a] = self.max[a].max(other.max[a]);
        }
        Cuboid::new(min, max)
    }
}

/// Rasterizes the union of all non-deleted cuboids. A cell is occupied iff it
/// lies inside at least one live box under the half-open convention.
pub fn voxelize_cuboids(cuboids: &[Cuboid], resolution: u32) -> OccupancyGrid {
    let mut grid = OccupancyGrid::new(resolution);
    for c in cuboids.iter().filter(|c| !c.deleted) {
        debug_assert!(c.in_bounds(resolution));
        for z in c.min[2]..c.max[2] {
            for y in c.min[1]..c.max[1] {
                for x in c.min[0]..c.max[0] {
                    grid.set(x as u32, y as u32, z as u32, true);
                }
            }
        }
    }
    grid
}

/// IoU of a single live cuboid's rasterization against a target grid.
pub fn per_primitive_iou(p: &Cuboid, target: &OccupancyGrid) -> Result<f64> {
    if p.deleted {
        return Err(Error::contract("per-primitive IoU of a deleted cuboid"));
    }
    let mut inter = 0usize;
    for z in p.min[2]..p.max[2] {
        for y in p.min[1]..p.max[1] {
            for x in p.min[0]..p.max[0] {
                inter += target.get(x as u32, y as u32, z as u32) as usize;
            }
        }
    }
    let union = p.volume() as usize + target.occupied_count() - inter;
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}
