//! Solid geometry: voxel occupancy, cuboids, edge loops, lofted meshes,
//! depth rendering, Chamfer distance, and mesh export.
//!
//! Everything lives in one canonical frame `[0, R]^3` where one voxel is one
//! unit. Cell `(x, y, z)` spans `[x, x+1) x [y, y+1) x [z, z+1)`, so an
//! integer-aligned box `[min, max)` rasterizes exactly.

mod chamfer;
mod coverage;
mod cuboid;
mod depth;
mod edge_loop;
mod grid;
mod mesh;

pub use chamfer::{chamfer_distance, surface_points, KdTree3, SURFACE_SAMPLES};
pub use coverage::{CoverageGrid, TargetGrid};
pub use cuboid::{per_primitive_iou, voxelize_cuboids, Cuboid};
pub use depth::{render_depth, DepthMap, DEPTH_SIDE};
pub use edge_loop::{loft_mesh, owner_cells, voxelize_mesh, EdgeLoop};
pub use grid::{iou, OccupancyGrid};
pub use mesh::{export_obj, parse_obj, TriangleMesh};
