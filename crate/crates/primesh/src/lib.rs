//! Two-stage 3D modeling engine.
//!
//! A Prim-Agent edits a 3x3x3 arrangement of 27 seed cuboids over 300 steps
//! to abstract a target shape, then a Mesh-Agent edits 10 edge loops on the
//! surviving (merged) primitives over 100 steps to refine the geometry.
//! Both agents are double-DQN policies trained by imitation of a greedy
//! virtual expert (DAgger with double demo buffers) followed by
//! self-exploration with TD-only updates.
//!
//! Module map:
//! - [`geometry`] — voxel grids, cuboids, edge loops, lofting, depth
//!   rendering, Chamfer distance, OBJ export.
//! - [`env`] — the two editing environments (action spaces 756 and 360),
//!   reward bookkeeping, primitive merging, edge-loop assignment.
//! - [`expert`] — the greedy one-step-reward demonstrator.
//! - [`replay`] — ring-buffer experience memories and the demo archive.
//! - [`nn`] — the three-stream Q-network, losses, Adam, checkpoints.
//! - [`training`] — DAgger imitation, RL self-exploration, ablation schemes.
//! - [`dataset`] — synthetic shape generation and external grid ingestion.
//! - [`config`] — key=value run configuration with desk/paper profiles.

pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod expert;
pub mod geometry;
pub mod nn;
pub mod replay;
pub mod training;

pub use error::{Error, Result};
