use std::sync::Arc;

use crate::env::prim::DragCorner;
use crate::env::{reference_values, ActionLayout, Env, Observation};
use crate::error::{Error, Result};
use crate::geometry::{owner_cells, CoverageGrid, Cuboid, DepthMap, EdgeLoop, OccupancyGrid, TargetGrid};

pub const LOOP_COUNT: usize = 10;
pub const MESH_ACTIONS_PER: usize = 36;
pub const MESH_ACTIONS: usize = LOOP_COUNT * MESH_ACTIONS_PER;
pub const MESH_STEPS: usize = 100;

const MESH_AMOUNTS: [i32; 6] = [-3, -2, -1, 1, 2, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshAction {
    pub loop_index: usize,
    pub corner: DragCorner,
    pub axis: usize,
    pub amount: i32,
}

/// Decodes a flat index: `index = loop*36 + corner*18 + axis*6 + amount_rank`
/// over amounts (-3, -2, -1, 1, 2, 3).
pub fn decode_mesh_action(index: usize) -> Result<MeshAction> {
    if index >= MESH_ACTIONS {
        return Err(Error::contract(format!("action index {index} out of range")));
    }
    let local = index % MESH_ACTIONS_PER;
    Ok(MeshAction {
        loop_index: index / MESH_ACTIONS_PER,
        corner: if local / 18 == 0 { DragCorner::Min } else { DragCorner::Max },
        axis: (local % 18) / 6,
        amount: MESH_AMOUNTS[local % 6],
    })
}

pub fn encode_mesh_action(action: &MeshAction) -> usize {
    let rank = MESH_AMOUNTS.iter().position(|&a| a == action.amount).expect("bad amount");
    action.loop_index * MESH_ACTIONS_PER
        + (action.corner == DragCorner::Max) as usize * 18
        + action.axis * 6
        + rank
}

/// Distributes `n` edge loops over the live cuboids: each primitive gets
/// `max(ceil(n * V_k / sum(V) + 0.5), 2)` loops (capped so later primitives
/// can still receive their minimum two), the last primitive receives the
/// remainder. Loops sit on the longest axis (ties x before y before z),
/// uniformly spaced with the first and last on the boundary faces, each
/// initially equal to the primitive cross-section.
pub fn assign_edge_loops(cuboids: &[Cuboid], n: usize) -> Result<Vec<EdgeLoop>> {
    let live: Vec<Cuboid> = cuboids.iter().filter(|c| !c.deleted).copied().collect();
    if live.is_empty() {
        return Err(Error::contract("no live primitives to assign loops to"));
    }
    if n < 2 * live.len() {
        return Err(Error::contract(format!(
            "{} loops cannot give {} primitives two each",
            n,
            live.len()
        )));
    }
    let total: f64 = live.iter().map(|c| c.volume() as f64).sum();
    let mut counts = Vec::with_capacity(live.len());
    let mut remaining = n;
    for (k, c) in live.iter().enumerate() {
        let count = if k + 1 == live.len() {
            remaining
        } else {
            let want = (n as f64 * c.volume() as f64 / total + 0.5).ceil() as usize;
            let reserve = 2 * (live.len() - 1 - k);
            want.max(2).min(remaining - reserve)
        };
        counts.push(count);
        remaining -= count;
    }
    let mut loops = Vec::with_capacity(n);
    for (owner, (c, &count)) in live.iter().zip(&counts).enumerate() {
        let extents = [c.max[0] - c.min[0], c.max[1] - c.min[1], c.max[2] - c.min[2]];
        let mut axis = 0;
        for a in 1..3 {
            if extents[a] > extents[axis] {
                axis = a;
            }
        }
        let (lo, hi) = (c.min[axis], c.max[axis]);
        for i in 0..count {
            let t = i as f64 / (count - 1) as f64;
            let plane = lo + ((hi - lo) as f64 * t).round() as i32;
            let mut lo_pt = c.min;
            let mut hi_pt = c.max;
            lo_pt[axis] = plane;
            hi_pt[axis] = plane;
            loops.push(EdgeLoop::new(axis, lo_pt, hi_pt, owner));
        }
    }
    Ok(loops)
}

/// Stable sort by (owner index, plane position): the canonical slot order
/// action indices refer to for a whole episode.
pub fn canonical_sort(loops: &[EdgeLoop]) -> Vec<EdgeLoop> {
    let mut sorted = loops.to_vec();
    sorted.sort_by_key(|l| (l.owner, l.plane()));
    sorted
}

/// The edge-loop editing environment: 10 loops, 360 actions, 100 steps.
/// The reward is the increment of the lofted solid's IoU against the target.
pub struct MeshEnv {
    target: TargetGrid,
    reference: Arc<Vec<f32>>,
    loops: Vec<EdgeLoop>,
    /// Loop slots per owner, ordered along the owner's axis.
    owner_slots: Vec<Vec<usize>>,
    owner_cells_cache: Vec<Vec<u32>>,
    coverage: CoverageGrid,
    step: usize,
    done: bool,
    prev_iou: f64,
}

impl MeshEnv {
    /// Builds the environment over merged primitives; fails if the loop
    /// budget cannot cover them (more than `LOOP_COUNT / 2` primitives).
    pub fn new(target: Arc<OccupancyGrid>, reference: &DepthMap, merged: &[Cuboid]) -> Result<Self> {
        let loops = canonical_sort(&assign_edge_loops(merged, LOOP_COUNT)?);
        let target = TargetGrid::new(target);
        let coverage = CoverageGrid::new(target.grid().clone());
        let owner_count = loops.iter().map(|l| l.owner).max().unwrap() + 1;
        let mut owner_slots = vec![Vec::new(); owner_count];
        for (slot, l) in loops.iter().enumerate() {
            owner_slots[l.owner].push(slot);
        }
        let mut env = Self {
            target,
            reference: reference_values(reference),
            loops,
            owner_slots,
            owner_cells_cache: vec![Vec::new(); owner_count],
            coverage,
            step: 0,
            done: false,
            prev_iou: 0.0,
        };
        for owner in 0..owner_count {
            let cells = env.compute_owner_cells(owner);
            env.coverage.add_cells(&cells);
            env.owner_cells_cache[owner] = cells;
        }
        env.prev_iou = env.coverage.global_iou();
        Ok(env)
    }

    pub fn resolution(&self) -> u32 {
        self.target.resolution()
    }

    pub fn loops(&self) -> &[EdgeLoop] {
        &self.loops
    }

    pub fn target(&self) -> &TargetGrid {
        &self.target
    }

    pub fn iou(&self) -> f64 {
        self.prev_iou
    }

    fn compute_owner_cells(&self, owner: usize) -> Vec<u32> {
        let stack: Vec<EdgeLoop> =
            self.owner_slots[owner].iter().map(|&s| self.loops[s]).collect();
        owner_cells(&stack, self.resolution())
    }

    /// The edited loop after applying a drag, or None when the clamp makes
    /// it a no-op.
    fn edited_loop(&self, action: &MeshAction) -> Option<EdgeLoop> {
        let slot = action.loop_index;
        let l = self.loops[slot];
        let r = self.resolution() as i32;
        let mut edited = l;
        if action.axis == l.axis {
            // Plane translation: both corners move, clamped to stay between
            // the neighboring loops of the same owner and inside the frame.
            let stack = &self.owner_slots[l.owner];
            let pos = stack.iter().position(|&s| s == slot).unwrap();
            let lower = if pos == 0 { 0 } else { self.loops[stack[pos - 1]].plane() + 1 };
            let upper =
                if pos + 1 == stack.len() { r } else { self.loops[stack[pos + 1]].plane() - 1 };
            let current = l.plane();
            let new = if action.amount > 0 {
                let bound = upper.max(current);
                (current + action.amount).min(bound)
            } else {
                let bound = lower.min(current);
                (current + action.amount).max(bound)
            };
            edited.lo[l.axis] = new;
            edited.hi[l.axis] = new;
        } else {
            // In-plane drag: one corner moves; corners may meet (zero-area
            // loops permitted) but never cross.
            match action.corner {
                DragCorner::Min => {
                    let new = (l.lo[action.axis] + action.amount).clamp(0, l.hi[action.axis]);
                    edited.lo[action.axis] = new;
                }
                DragCorner::Max => {
                    let new = (l.hi[action.axis] + action.amount).clamp(l.lo[action.axis], r);
                    edited.hi[action.axis] = new;
                }
            }
        }
        if edited == l {
            None
        } else {
            Some(edited)
        }
    }

    /// Swaps in an edited loop and refreshes its owner's coverage; returns
    /// what is needed to undo.
    fn commit(&mut self, slot: usize, edited: EdgeLoop) -> (EdgeLoop, Vec<u32>) {
        let owner = edited.owner;
        let previous = std::mem::replace(&mut self.loops[slot], edited);
        let old_cells = std::mem::take(&mut self.owner_cells_cache[owner]);
        self.coverage.remove_cells(&old_cells);
        let new_cells = self.compute_owner_cells(owner);
        self.coverage.add_cells(&new_cells);
        self.owner_cells_cache[owner] = new_cells;
        (previous, old_cells)
    }

    fn rollback(&mut self, slot: usize, previous: EdgeLoop, old_cells: Vec<u32>) {
        let owner = previous.owner;
        self.loops[slot] = previous;
        let undo = std::mem::take(&mut self.owner_cells_cache[owner]);
        self.coverage.remove_cells(&undo);
        self.coverage.add_cells(&old_cells);
        self.owner_cells_cache[owner] = old_cells;
    }

    fn check_action(&self, action: usize) -> Result<MeshAction> {
        if self.done {
            return Err(Error::contract("step on a finished episode"));
        }
        let decoded = decode_mesh_action(action)?;
        if !self.legal_range().contains(&action) {
            return Err(Error::contract(format!(
                "action {action} targets loop {} but step {} masks loop {}",
                decoded.loop_index,
                self.step,
                self.step % LOOP_COUNT
            )));
        }
        Ok(decoded)
    }
}

impl Env for MeshEnv {
    fn layout(&self) -> ActionLayout {
        ActionLayout { slots: LOOP_COUNT, per_slot: MESH_ACTIONS_PER }
    }

    fn horizon(&self) -> usize {
        MESH_STEPS
    }

    fn step_index(&self) -> usize {
        self.step
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn observe(&self) -> Observation {
        let r = self.resolution() as f32;
        let mut params = Vec::with_capacity(LOOP_COUNT * 8);
        for l in &self.loops {
            for corner in [l.lo, l.hi] {
                params.extend(corner.iter().map(|&v| v as f32 / r));
                params.push(l.axis as f32);
            }
        }
        params.resize(LOOP_COUNT * 8, 0.0);
        Observation {
            reference: self.reference.clone(),
            params,
            step: self.step,
            steps_total: MESH_STEPS,
        }
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        let decoded = self.check_action(action)?;
        if let Some(edited) = self.edited_loop(&decoded) {
            self.commit(decoded.loop_index, edited);
        }
        let iou = self.coverage.global_iou();
        let reward = iou - self.prev_iou;
        self.prev_iou = iou;
        self.step += 1;
        self.done = self.step >= MESH_STEPS;
        Ok((reward, self.done))
    }

    fn peek_reward(&mut self, action: usize) -> f64 {
        let decoded = self.check_action(action).expect("peek of an illegal action");
        match self.edited_loop(&decoded) {
            None => 0.0,
            Some(edited) => {
                let (previous, old_cells) = self.commit(decoded.loop_index, edited);
                let reward = self.coverage.global_iou() - self.prev_iou;
                self.rollback(decoded.loop_index, previous, old_cells);
                reward
            }
        }
    }

    fn step_peek(&mut self, action: usize) -> (f64, Observation, bool) {
        let decoded = self.check_action(action).expect("peek of an illegal action");
        let done = self.step + 1 >= MESH_STEPS;
        let undo = self.edited_loop(&decoded).map(|edited| {
            let slot = decoded.loop_index;
            let (previous, old_cells) = self.commit(slot, edited);
            (slot, previous, old_cells)
        });
        let reward = self.coverage.global_iou() - self.prev_iou;
        self.step += 1;
        let obs = self.observe();
        self.step -= 1;
        if let Some((slot, previous, old_cells)) = undo {
            self.rollback(slot, previous, old_cells);
        }
        (reward, obs, done)
    }

    fn current_iou(&self) -> f64 {
        self.prev_iou
    }

    fn rasterize(&self) -> OccupancyGrid {
        crate::geometry::voxelize_mesh(&self.loops, self.resolution())
            .expect("episode loops stay loftable")
    }

    fn metrics(&self) -> Vec<f64> {
        vec![self.prev_iou]
    }
}
