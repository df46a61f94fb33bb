//! The two editing environments and their shared observation/action plumbing.

mod mesh;
mod prim;
mod trace;

pub use mesh::{assign_edge_loops, canonical_sort, decode_mesh_action, encode_mesh_action,
    MeshAction, MeshEnv, LOOP_COUNT, MESH_ACTIONS, MESH_ACTIONS_PER, MESH_STEPS};
pub use prim::{decode_prim_action, encode_prim_action, initial_cuboids, merge_primitives,
    DragCorner, PrimAction, PrimActionKind, PrimEnv, ALL_DELETED_PENALTY, DEFAULT_ALPHA_LOCAL,
    DEFAULT_ALPHA_PARSIMONY, MERGE_THRESHOLDS, PRIM_ACTIONS, PRIM_ACTIONS_PER, PRIM_COUNT,
    PRIM_STEPS};
pub use trace::{parse_trace, TraceRow, TraceWriter};

use std::ops::Range;
use std::sync::Arc;

use crate::error::Result;
use crate::geometry::DepthMap;

/// How a flat action index splits into (object slot, per-object action):
/// `index = slot * per_slot + local`. At step `k` only the actions of slot
/// `k mod slots` are legal, which forces the agent to edit a different
/// object every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionLayout {
    pub slots: usize,
    pub per_slot: usize,
}

impl ActionLayout {
    pub fn actions(&self) -> usize {
        self.slots * self.per_slot
    }

    pub fn legal_range(&self, step: usize) -> Range<usize> {
        let slot = step % self.slots;
        slot * self.per_slot..(slot + 1) * self.per_slot
    }

    pub fn legal_mask(&self, step: usize) -> Vec<bool> {
        let range = self.legal_range(step);
        (0..self.actions()).map(|a| range.contains(&a)).collect()
    }
}

/// What an agent sees: the reference raster (shared across an episode), the
/// editable objects' parameters, and the step number (one-hot encoded when
/// flattened). Deleted or unused slots are zeroed in `params`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub reference: Arc<Vec<f32>>,
    pub params: Vec<f32>,
    pub step: usize,
    pub steps_total: usize,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.reference.len() + self.params.len() + self.steps_total
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The flat observation vector: reference, parameters, step one-hot.
    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.reference);
        v.extend_from_slice(&self.params);
        let mut one_hot = vec![0f32; self.steps_total];
        if self.step < self.steps_total {
            one_hot[self.step] = 1.0;
        }
        v.extend_from_slice(&one_hot);
        v
    }
}

pub(crate) fn reference_values(reference: &DepthMap) -> Arc<Vec<f32>> {
    Arc::new(reference.values().to_vec())
}

/// Common surface of the two editing environments, used by the expert and
/// the trainer.
pub trait Env {
    fn layout(&self) -> ActionLayout;
    /// Episode length in steps.
    fn horizon(&self) -> usize;
    fn step_index(&self) -> usize;
    fn is_done(&self) -> bool;
    fn observe(&self) -> Observation;
    /// Applies a legal action; returns (reward, done).
    fn step(&mut self, action: usize) -> Result<(f64, bool)>;
    /// Reward the action would earn, without changing the state.
    fn peek_reward(&mut self, action: usize) -> f64;
    /// The full transition the action would produce — reward, successor
    /// observation, terminal flag — without changing the state. The trainer
    /// uses this to build expert-labeled tuples off the policy's path.
    fn step_peek(&mut self, action: usize) -> (f64, Observation, bool);
    fn is_delete(&self, _action: usize) -> bool {
        false
    }
    /// IoU of the current editable solid against the target.
    fn current_iou(&self) -> f64;
    /// Rasterization of the current editable solid.
    fn rasterize(&self) -> crate::geometry::OccupancyGrid;
    /// Trace columns: (global IoU, local IoU, deleted count) for the
    /// primitive environment, (IoU,) for the mesh environment.
    fn metrics(&self) -> Vec<f64>;

    fn legal_range(&self) -> Range<usize> {
        self.layout().legal_range(self.step_index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legal_mask_selects_one_slot() {
        let layout = ActionLayout { slots: 27, per_slot: 28 };
        let mask = layout.legal_mask(0);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 28);
        assert!(mask[..28].iter().all(|&m| m));
        // Wrap-around: step 27 selects slot 0 again.
        assert_eq!(layout.legal_mask(27), mask);
        for step in 0..300 {
            assert_eq!(layout.legal_mask(step).iter().filter(|&&m| m).count(), 28);
        }
    }

    #[test]
    fn observation_flattens_to_declared_length() {
        let obs = Observation {
            reference: Arc::new(vec![0.5; 16]),
            params: vec![0.1; 6],
            step: 3,
            steps_total: 10,
        };
        let v = obs.to_vec();
        assert_eq!(v.len(), obs.len());
        assert_eq!(v[16 + 6 + 3], 1.0);
        assert_eq!(v[16 + 6..].iter().sum::<f32>(), 1.0);
    }
}
