use std::sync::Arc;

use crate::geometry::{Cuboid, OccupancyGrid};

/// A target shape plus a summed-volume table for O(1) box-overlap queries.
///
/// `box_occupied` answers "how many target voxels lie inside this box", which
/// makes each per-primitive IoU summand constant-time. The expert scores
/// dozens of candidate actions per step, so this path is hot.
#[derive(Clone)]
pub struct TargetGrid {
    grid: Arc<OccupancyGrid>,
    prefix: Vec<u32>,
    occupied: usize,
}

impl TargetGrid {
    pub fn new(grid: Arc<OccupancyGrid>) -> Self {
        let r = grid.resolution() as usize;
        let n = r + 1;
        let mut prefix = vec![0u32; n * n * n];
        let at = |x: usize, y: usize, z: usize| x + n * (y + n * z);
        for z in 1..n {
            for y in 1..n {
                let mut row = 0u32;
                for x in 1..n {
                    row += grid.get((x - 1) as u32, (y - 1) as u32, (z - 1) as u32) as u32;
                    prefix[at(x, y, z)] =
                        row + prefix[at(x, y, z - 1)] + prefix[at(x, y - 1, z)]
                            - prefix[at(x, y - 1, z - 1)];
                }
            }
        }
        let occupied = grid.occupied_count();
        Self { grid, prefix, occupied }
    }

    pub fn grid(&self) -> &Arc<OccupancyGrid> {
        &self.grid
    }

    pub fn resolution(&self) -> u32 {
        self.grid.resolution()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    /// Number of occupied target cells inside `[min, max)`.
    pub fn box_occupied(&self, min: [i32; 3], max: [i32; 3]) -> usize {
        let n = self.grid.resolution() as usize + 1;
        let at = |p: [i32; 3]| {
            debug_assert!(p.iter().all(|&c| c >= 0 && (c as usize) < n));
            p[0] as usize + n * (p[1] as usize + n * p[2] as usize)
        };
        let c = |x, y, z| self.prefix[at([x, y, z])] as i64;
        let ([x0, y0, z0], [x1, y1, z1]) = (min, max);
        let v = c(x1, y1, z1) - c(x0, y1, z1) - c(x1, y0, z1) - c(x1, y1, z0)
            + c(x0, y0, z1)
            + c(x0, y1, z0)
            + c(x1, y0, z0)
            - c(x0, y0, z0);
        debug_assert!(v >= 0);
        v as usize
    }

    /// IoU of a single live cuboid against the target, in O(1).
    pub fn cuboid_iou(&self, c: &Cuboid) -> f64 {
        debug_assert!(!c.deleted);
        let inter = self.box_occupied(c.min, c.max);
        let union = c.volume() as usize + self.occupied - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Per-voxel coverage counters over a set of solids, with running tallies of
/// covered-cell and covered-and-target-cell counts. Adding or removing one
/// solid touches only its own cells, so the global IoU against the target
/// updates in O(changed voxels).
pub struct CoverageGrid {
    target: Arc<OccupancyGrid>,
    counts: Vec<u8>,
    covered: usize,
    inter: usize,
    target_occupied: usize,
}

impl CoverageGrid {
    pub fn new(target: Arc<OccupancyGrid>) -> Self {
        let n = (target.resolution() as usize).pow(3);
        let target_occupied = target.occupied_count();
        Self { target, counts: vec![0; n], covered: 0, inter: 0, target_occupied }
    }

    pub fn resolution(&self) -> u32 {
        self.target.resolution()
    }

    /// Union IoU of the covered region against the target.
    pub fn global_iou(&self) -> f64 {
        let union = self.covered + self.target_occupied - self.inter;
        if union == 0 {
            0.0
        } else {
            self.inter as f64 / union as f64
        }
    }

    pub fn covered_count(&self) -> usize {
        self.covered
    }

    #[inline]
    fn bump(&mut self, idx: usize, add: bool) {
        if add {
            let c = &mut self.counts[idx];
            *c += 1;
            if *c == 1 {
                self.covered += 1;
                self.inter += self.target.get_index(idx) as usize;
            }
        } else {
            let c = &mut self.counts[idx];
            debug_assert!(*c > 0, "removing uncovered cell");
            *c -= 1;
            if *c == 0 {
                self.covered -= 1;
                self.inter -= self.target.get_index(idx) as usize;
            }
        }
    }

    pub fn add_box(&mut self, min: [i32; 3], max: [i32; 3]) {
        self.change_box(min, max, true);
    }

    pub fn remove_box(&mut self, min: [i32; 3], max: [i32; 3]) {
        self.change_box(min, max, false);
    }

    fn change_box(&mut self, min: [i32; 3], max: [i32; 3], add: bool) {
        let r = self.target.resolution() as usize;
        debug_assert!(min.iter().all(|&c| c >= 0) && max.iter().all(|&c| c as usize <= r));
        for z in min[2]..max[2] {
            for y in min[1]..max[1] {
                let row = r * (y as usize + r * z as usize);
                for x in min[0]..max[0] {
                    self.bump(row + x as usize, add);
                }
            }
        }
    }

    pub fn add_cells(&mut self, cells: &[u32]) {
        for &idx in cells {
            self.bump(idx as usize, true);
        }
    }

    pub fn remove_cells(&mut self, cells: &[u32]) {
        for &idx in cells {
            self.bump(idx as usize, false);
        }
    }
}
