use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::OccupancyGrid;

/// Default number of surface samples per point set.
pub const SURFACE_SAMPLES: usize = 2048;

/// Samples points uniformly from the exposed faces of occupied voxels.
/// Returns an empty vec for an empty grid.
pub fn surface_points(grid: &OccupancyGrid, count: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let r = grid.resolution() as i32;
    // Exposed face = occupied cell whose neighbor across the face is empty
    // or out of bounds. Encoded as (cell, face direction).
    let mut faces: Vec<([i32; 3], usize, i32)> = Vec::new();
    let occupied = |x: i32, y: i32, z: i32| {
        x >= 0 && y >= 0 && z >= 0 && x < r && y < r && z < r && grid.get(x as u32, y as u32, z as u32)
    };
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                if !occupied(x, y, z) {
                    continue;
                }
                let cell = [x, y, z];
                for axis in 0..3 {
                    for side in [-1i32, 1] {
                        let mut n = cell;
                        n[axis] += side;
                        if !occupied(n[0], n[1], n[2]) {
                            faces.push((cell, axis, side));
                        }
                    }
                }
            }
        }
    }
    if faces.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let (cell, axis, side) = faces[rng.gen_range(0..faces.len())];
            let mut p = [0f64; 3];
            for a in 0..3 {
                p[a] = cell[a] as f64 + rng.gen_range(0.0..1.0);
            }
            p[axis] = cell[axis] as f64 + if side > 0 { 1.0 } else { 0.0 };
            p
        })
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// A median-split k-d tree over 3D points for nearest-neighbor queries.
pub struct KdTree3 {
    points: Vec<[f64; 3]>,
    // Node i splits `points[order[range]]`; stored as a recursive layout over
    // a reordered index array.
    order: Vec<usize>,
}

impl KdTree3 {
    pub fn build(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self { points: points.to_vec(), order: Vec::new() };
        Self::build_rec(&tree.points, &mut order, 0);
        tree.order = order;
        tree
    }

    fn build_rec(points: &[[f64; 3]], order: &mut [usize], depth: usize) {
        if order.len() <= 1 {
            return;
        }
        let axis = depth % 3;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].partial_cmp(&points[b][axis]).unwrap()
        });
        let (lo, rest) = order.split_at_mut(mid);
        Self::build_rec(points, lo, depth + 1);
        Self::build_rec(points, &mut rest[1..], depth + 1);
    }

    /// Squared distance from `q` to the nearest stored point.
    pub fn nearest_dist2(&self, q: &[f64; 3]) -> f64 {
        assert!(!self.points.is_empty());
        let mut best = f64::INFINITY;
        self.nearest_rec(q, &self.order, 0, &mut best);
        best
    }

    fn nearest_rec(&self, q: &[f64; 3], order: &[usize], depth: usize, best: &mut f64) {
        if order.is_empty() {
            return;
        }
        let axis = depth % 3;
        let mid = order.len() / 2;
        let p = &self.points[order[mid]];
        *best = best.min(dist2(q, p));
        let delta = q[axis] - p[axis];
        let (near, far) =
            if delta < 0.0 { (&order[..mid], &order[mid + 1..]) } else { (&order[mid + 1..], &order[..mid]) };
        self.nearest_rec(q, near, depth + 1, best);
        if delta * delta < *best {
            self.nearest_rec(q, far, depth + 1, best);
        }
    }
}

/// Symmetric Chamfer distance between two point sets sampled in voxel
/// coordinates, with coordinates normalized by the grid resolution.
pub fn chamfer_distance(a: &[[f64; 3]], b: &[[f64; 3]], resolution: u32) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("chamfer distance of an empty point set"));
    }
    let tree_a = KdTree3::build(a);
    let tree_b = KdTree3::build(b);
    let mean = |from: &[[f64; 3]], to: &KdTree3| {
        from.iter().map(|p| to.nearest_dist2(p).sqrt()).sum::<f64>() / from.len() as f64
    };
    Ok((mean(a, &tree_b) + mean(b, &tree_a)) / resolution as f64)
}
