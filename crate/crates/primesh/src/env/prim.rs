use std::sync::Arc;

use crate::env::{reference_values, ActionLayout, Env, Observation};
use crate::error::{Error, Result};
use crate::geometry::{CoverageGrid, Cuboid, DepthMap, OccupancyGrid, TargetGrid};

pub const PRIM_COUNT: usize = 27;
pub const PRIM_ACTIONS_PER: usize = 28;
pub const PRIM_ACTIONS: usize = PRIM_COUNT * PRIM_ACTIONS_PER;
pub const PRIM_STEPS: usize = 300;

const DRAG_AMOUNTS: [i32; 4] = [-2, -1, 1, 2];

/// Default weights of the local-IoU and parsimony reward terms.
pub const DEFAULT_ALPHA_LOCAL: f64 = 0.1;
pub const DEFAULT_ALPHA_PARSIMONY: f64 = 0.01;

/// Reward when the agent removes its last remaining primitive.
pub const ALL_DELETED_PENALTY: f64 = -1.0;

/// Merge-pass IoU thresholds, applied in order.
pub const MERGE_THRESHOLDS: [f64; 2] = [0.85, 0.90];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DragCorner {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimActionKind {
    Drag { corner: DragCorner, axis: usize, amount: i32 },
    /// All four variants have the same effect; the variant only keeps the
    /// index decode bijective.
    Delete { variant: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimAction {
    pub prim: usize,
    pub kind: PrimActionKind,
}

/// Decodes a flat index: `index = prim*28 + local`, where local 0-23 is
/// `corner*12 + axis*4 + amount_rank` over amounts (-2, -1, 1, 2) and local
/// 24-27 are the delete variants.
pub fn decode_prim_action(index: usize) -> Result<PrimAction> {
    if index >= PRIM_ACTIONS {
        return Err(Error::contract(format!("action index {index} out of range")));
    }
    let prim = index / PRIM_ACTIONS_PER;
    let local = index % PRIM_ACTIONS_PER;
    let kind = if local < 24 {
        PrimActionKind::Drag {
            corner: if local / 12 == 0 { DragCorner::Min } else { DragCorner::Max },
            axis: (local % 12) / 4,
            amount: DRAG_AMOUNTS[local % 4],
        }
    } else {
        PrimActionKind::Delete { variant: local - 24 }
    };
    Ok(PrimAction { prim, kind })
}

pub fn encode_prim_action(action: &PrimAction) -> usize {
    let local = match action.kind {
        PrimActionKind::Drag { corner, axis, amount } => {
            let rank = DRAG_AMOUNTS.iter().position(|&a| a == amount).expect("bad amount");
            (corner == DragCorner::Max) as usize * 12 + axis * 4 + rank
        }
        PrimActionKind::Delete { variant } => 24 + variant,
    };
    action.prim * PRIM_ACTIONS_PER + local
}

/// The 27 seed cuboids: a 3x3x3 cell grid, each cuboid centered in its cell
/// with edge length half the cell size (at least one voxel).
pub fn initial_cuboids(resolution: u32) -> Vec<Cuboid> {
    let cell = resolution as f64 / 3.0;
    let edge = ((resolution as f64 / 6.0).round() as i32).max(1);
    let mut cuboids = Vec::with_capacity(PRIM_COUNT);
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                let corner = |idx: usize| {
                    let center = (idx as f64 + 0.5) * cell;
                    (center - edge as f64 / 2.0).round() as i32
                };
                let min = [corner(i), corner(j), corner(k)];
                let max = [min[0] + edge, min[1] + edge, min[2] + edge];
                cuboids.push(Cuboid::new(min, max));
            }
        }
    }
    cuboids
}

/// The primitive-editing environment: 27 cuboids, 756 actions, 300 steps.
///
/// The reward for an action is the change in global IoU, plus `alpha_local`
/// times the change in mean per-primitive IoU over surviving primitives,
/// plus `alpha_parsimony` times the change in deleted-primitive count; the
/// step that removes the last primitive scores -1 and ends the episode.
pub struct PrimEnv {
    target: TargetGrid,
    reference: Arc<Vec<f32>>,
    cuboids: Vec<Cuboid>,
    coverage: CoverageGrid,
    step: usize,
    done: bool,
    alpha_local: f64,
    alpha_parsimony: f64,
    prev_global: f64,
    prev_local: f64,
    prev_deleted: usize,
}

impl PrimEnv {
    pub fn new(target: Arc<OccupancyGrid>, reference: &DepthMap) -> Self {
        Self::with_weights(target, reference, DEFAULT_ALPHA_LOCAL, DEFAULT_ALPHA_PARSIMONY)
    }

    pub fn with_weights(
        target: Arc<OccupancyGrid>,
        reference: &DepthMap,
        alpha_local: f64,
        alpha_parsimony: f64,
    ) -> Self {
        let target = TargetGrid::new(target);
        let coverage = CoverageGrid::new(target.grid().clone());
        let mut env = Self {
            target,
            reference: reference_values(reference),
            cuboids: Vec::new(),
            coverage,
            step: 0,
            done: false,
            alpha_local,
            alpha_parsimony,
            prev_global: 0.0,
            prev_local: 0.0,
            prev_deleted: 0,
        };
        env.reset();
        env
    }

    /// Re-seeds the 27 cuboids and rewinds the step counter.
    pub fn reset(&mut self) {
        for c in self.cuboids.drain(..) {
            if !c.deleted {
                self.coverage.remove_box(c.min, c.max);
            }
        }
        self.cuboids = initial_cuboids(self.resolution());
        for c in &self.cuboids {
            self.coverage.add_box(c.min, c.max);
        }
        self.step = 0;
        self.done = false;
        self.prev_global = self.coverage.global_iou();
        self.prev_local = self.mean_local_iou();
        self.prev_deleted = 0;
    }

    pub fn resolution(&self) -> u32 {
        self.target.resolution()
    }

    pub fn cuboids(&self) -> &[Cuboid] {
        &self.cuboids
    }

    pub fn target(&self) -> &TargetGrid {
        &self.target
    }

    /// Global IoU of the primitive union against the target.
    pub fn global_iou(&self) -> f64 {
        self.prev_global
    }

    /// Mean per-primitive IoU over surviving primitives.
    pub fn local_iou(&self) -> f64 {
        self.prev_local
    }

    pub fn deleted_count(&self) -> usize {
        self.prev_deleted
    }

    fn mean_local_iou(&self) -> f64 {
        let mut sum = 0.0;
        let mut live = 0usize;
        for c in &self.cuboids {
            if !c.deleted {
                sum += self.target.cuboid_iou(c);
                live += 1;
            }
        }
        if live == 0 {
            0.0
        } else {
            sum / live as f64
        }
    }

    /// Applies the drag to the coverage counters and the cuboid, returning
    /// the previous corner coordinate for rollback. Only the face slab
    /// between the old and new coordinate is touched.
    fn apply_drag(&mut self, prim: usize, corner: DragCorner, axis: usize, amount: i32) -> i32 {
        let r = self.resolution() as i32;
        let c = self.cuboids[prim];
        let (old, new) = match corner {
            DragCorner::Min => {
                let old = c.min[axis];
                (old, (old + amount).clamp(0, c.max[axis] - 1))
            }
            DragCorner::Max => {
                let old = c.max[axis];
                (old, (old + amount).clamp(c.min[axis] + 1, r))
            }
        };
        if new != old {
            let mut slab_min = c.min;
            let mut slab_max = c.max;
            let grew = match corner {
                DragCorner::Min => {
                    slab_min[axis] = old.min(new);
                    slab_max[axis] = old.max(new);
                    new < old
                }
                DragCorner::Max => {
                    slab_min[axis] = old.min(new);
                    slab_max[axis] = old.max(new);
                    new > old
                }
            };
            if grew {
                self.coverage.add_box(slab_min, slab_max);
            } else {
                self.coverage.remove_box(slab_min, slab_max);
            }
            match corner {
                DragCorner::Min => self.cuboids[prim].min[axis] = new,
                DragCorner::Max => self.cuboids[prim].max[axis] = new,
            }
        }
        old
    }

    fn undo_drag(&mut self, prim: usize, corner: DragCorner, axis: usize, old: i32) {
        let current = match corner {
            DragCorner::Min => self.cuboids[prim].min[axis],
            DragCorner::Max => self.cuboids[prim].max[axis],
        };
        if current == old {
            return;
        }
        let restore = old - current;
        // Re-applying a drag with the exact offset restores the previous
        // coordinate: the clamp cannot bind on a coordinate that was valid.
        self.apply_drag(prim, corner, axis, restore);
    }

    /// Reward of the current tallies relative to the stored previous step.
    fn reward_from_tallies(&self, deleted: usize) -> f64 {
        if deleted == PRIM_COUNT {
            return ALL_DELETED_PENALTY;
        }
        let global = self.coverage.global_iou();
        let local = self.mean_local_iou();
        (global - self.prev_global)
            + self.alpha_local * (local - self.prev_local)
            + self.alpha_parsimony * (deleted as f64 - self.prev_deleted as f64)
    }

    fn check_action(&self, action: usize) -> Result<PrimAction> {
        if self.done {
            return Err(Error::contract("step on a finished episode"));
        }
        let decoded = decode_prim_action(action)?;
        if !self.legal_range().contains(&action) {
            return Err(Error::contract(format!(
                "action {action} targets primitive {} but step {} masks primitive {}",
                decoded.prim,
                self.step,
                self.step % PRIM_COUNT
            )));
        }
        Ok(decoded)
    }

    /// Applies the geometric effect only; returns the undo record and the
    /// deleted count after the action.
    fn apply_action(&mut self, decoded: &PrimAction) -> (PrimUndo, usize) {
        match decoded.kind {
            PrimActionKind::Drag { corner, axis, amount } => {
                if self.cuboids[decoded.prim].deleted {
                    (PrimUndo::None, self.prev_deleted)
                } else {
                    let old = self.apply_drag(decoded.prim, corner, axis, amount);
                    (PrimUndo::Drag { prim: decoded.prim, corner, axis, old }, self.prev_deleted)
                }
            }
            PrimActionKind::Delete { .. } => {
                let c = self.cuboids[decoded.prim];
                if c.deleted {
                    (PrimUndo::None, self.prev_deleted)
                } else {
                    self.coverage.remove_box(c.min, c.max);
                    self.cuboids[decoded.prim].deleted = true;
                    (PrimUndo::Delete { prim: decoded.prim }, self.prev_deleted + 1)
                }
            }
        }
    }

    fn revert(&mut self, undo: PrimUndo) {
        match undo {
            PrimUndo::None => {}
            PrimUndo::Drag { prim, corner, axis, old } => self.undo_drag(prim, corner, axis, old),
            PrimUndo::Delete { prim } => {
                self.cuboids[prim].deleted = false;
                let c = self.cuboids[prim];
                self.coverage.add_box(c.min, c.max);
            }
        }
    }
}

enum PrimUndo {
    None,
    Drag { prim: usize, corner: DragCorner, axis: usize, old: i32 },
    Delete { prim: usize },
}

impl Env for PrimEnv {
    fn layout(&self) -> ActionLayout {
        ActionLayout { slots: PRIM_COUNT, per_slot: PRIM_ACTIONS_PER }
    }

    fn horizon(&self) -> usize {
        PRIM_STEPS
    }

    fn step_index(&self) -> usize {
        self.step
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn observe(&self) -> Observation {
        let r = self.resolution() as f32;
        let mut params = Vec::with_capacity(PRIM_COUNT * 6);
        for c in &self.cuboids {
            if c.deleted {
                params.extend_from_slice(&[0.0; 6]);
            } else {
                params.extend(c.min.iter().map(|&v| v as f32 / r));
                params.extend(c.max.iter().map(|&v| v as f32 / r));
            }
        }
        Observation {
            reference: self.reference.clone(),
            params,
            step: self.step,
            steps_total: PRIM_STEPS,
        }
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        let decoded = self.check_action(action)?;
        let (_, deleted) = self.apply_action(&decoded);
        let reward = self.reward_from_tallies(deleted);
        self.prev_global = self.coverage.global_iou();
        self.prev_local = self.mean_local_iou();
        self.prev_deleted = deleted;
        self.step += 1;
        self.done = self.step >= PRIM_STEPS || deleted == PRIM_COUNT;
        Ok((reward, self.done))
    }

    fn peek_reward(&mut self, action: usize) -> f64 {
        let decoded = self.check_action(action).expect("peek of an illegal action");
        let (undo, deleted) = self.apply_action(&decoded);
        let reward = self.reward_from_tallies(deleted);
        self.revert(undo);
        reward
    }

    fn step_peek(&mut self, action: usize) -> (f64, Observation, bool) {
        let decoded = self.check_action(action).expect("peek of an illegal action");
        let (undo, deleted) = self.apply_action(&decoded);
        let reward = self.reward_from_tallies(deleted);
        let done = self.step + 1 >= PRIM_STEPS || deleted == PRIM_COUNT;
        self.step += 1;
        let obs = self.observe();
        self.step -= 1;
        self.revert(undo);
        (reward, obs, done)
    }

    fn is_delete(&self, action: usize) -> bool {
        matches!(
            decode_prim_action(action),
            Ok(PrimAction { kind: PrimActionKind::Delete { .. }, .. })
        )
    }

    fn current_iou(&self) -> f64 {
        self.prev_global
    }

    fn rasterize(&self) -> crate::geometry::OccupancyGrid {
        crate::geometry::voxelize_cuboids(&self.cuboids, self.resolution())
    }

    fn metrics(&self) -> Vec<f64> {
        vec![self.prev_global, self.prev_local, self.prev_deleted as f64]
    }
}

/// Merges redundant primitives: in each pass, connect two boxes whose union
/// fills at least `epsilon` of their joint bounding box, then replace every
/// connected component by its bounding box. Runs the two standard passes.
pub fn merge_primitives(cuboids: &[Cuboid]) -> Vec<Cuboid> {
    let mut live: Vec<Cuboid> = cuboids.iter().filter(|c| !c.deleted).copied().collect();
    for epsilon in MERGE_THRESHOLDS {
        live = merge_pass(&live, epsilon);
    }
    live
}

fn merge_pass(live: &[Cuboid], epsilon: f64) -> Vec<Cuboid> {
    let n = live.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            let bounding = live[i].bounding(&live[j]);
            let union = live[i].volume() + live[j].volume() - live[i].overlap_volume(&live[j]);
            let ratio = union as f64 / bounding.volume() as f64;
            if ratio >= epsilon {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    // Components in order of their smallest member index.
    let mut merged: Vec<(usize, Cuboid)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match merged.iter_mut().find(|(r, _)| *r == root) {
            Some((_, c)) => *c = c.bounding(&live[i]),
            None => merged.push((root, live[i])),
        }
    }
    merged.into_iter().map(|(_, c)| c).collect()
}
