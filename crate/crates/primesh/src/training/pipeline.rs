//! End-to-end inference: primitive episode, merging, loop assignment, mesh
//! episode, lofting, metrics.

use ndarray::NdFloat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Shape;
use crate::env::{merge_primitives, Env, MeshEnv, PrimEnv, TraceRow, LOOP_COUNT};
use crate::error::Result;
use crate::geometry::{
    chamfer_distance, loft_mesh, surface_points, voxelize_mesh, Cuboid, EdgeLoop, TriangleMesh,
    SURFACE_SAMPLES,
};
use crate::nn::{select_action, QNetwork};

/// Keeps the `limit` largest primitives, input order otherwise preserved.
/// Fallback for merged sets the loop budget cannot cover.
pub fn cap_by_volume(cuboids: &[Cuboid], limit: usize) -> Vec<Cuboid> {
    if cuboids.len() <= limit {
        return cuboids.to_vec();
    }
    let mut ranked: Vec<usize> = (0..cuboids.len()).collect();
    ranked.sort_by_key(|&i| std::cmp::Reverse(cuboids[i].volume()));
    let mut keep: Vec<usize> = ranked.into_iter().take(limit).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| cuboids[i]).collect()
}

/// Runs the frozen primitive policy greedily on a shape and returns the
/// merged primitives, capped to the loop budget.
pub fn merged_primitives_for_shape<F: NdFloat>(
    prim_net: &QNetwork<F>,
    shape: &Shape,
) -> Result<(Vec<Cuboid>, Vec<TraceRow>, f64)> {
    let mut env = PrimEnv::new(shape.target.clone(), &shape.reference);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut trace = Vec::with_capacity(env.horizon());
    let mut accumulated = 0.0;
    while !env.is_done() {
        let step = env.step_index();
        let action = select_action(prim_net, &env.observe(), env.legal_range(), 0.0, &mut rng);
        let (reward, _) = env.step(action)?;
        accumulated += reward;
        trace.push(TraceRow {
            step,
            action,
            reward,
            extra: vec![env.global_iou(), env.local_iou(), env.deleted_count() as f64],
        });
    }
    let merged = merge_primitives(env.cuboids());
    Ok((cap_by_volume(&merged, LOOP_COUNT / 2), trace, accumulated))
}

pub struct ModelOutput {
    pub merged: Vec<Cuboid>,
    pub loops: Vec<EdgeLoop>,
    pub mesh: TriangleMesh,
    pub prim_trace: Vec<TraceRow>,
    pub mesh_trace: Vec<TraceRow>,
    pub prim_reward: f64,
    pub mesh_reward: f64,
    pub final_iou: f64,
    pub chamfer: Option<f64>,
}

/// The whole two-step pipeline on one shape: 300 greedy primitive-editing
/// steps, primitive merging, loop assignment, 100 greedy loop-editing
/// steps, then lofting. Chamfer is reported against the target when the
/// final solid is non-empty.
pub fn model_shape<F: NdFloat>(
    prim_net: &QNetwork<F>,
    mesh_net: &QNetwork<F>,
    shape: &Shape,
) -> Result<ModelOutput> {
    let (merged, prim_trace, prim_reward) = merged_primitives_for_shape(prim_net, shape)?;
    let mut env = MeshEnv::new(shape.target.clone(), &shape.reference, &merged)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mesh_trace = Vec::with_capacity(env.horizon());
    let mut mesh_reward = 0.0;
    while !env.is_done() {
        let step = env.step_index();
        let action = select_action(mesh_net, &env.observe(), env.legal_range(), 0.0, &mut rng);
        let (reward, _) = env.step(action)?;
        mesh_reward += reward;
        mesh_trace.push(TraceRow { step, action, reward, extra: vec![env.iou()] });
    }
    let loops = env.loops().to_vec();
    let mesh = loft_mesh(&loops)?;
    let final_iou = env.iou();
    let solid = voxelize_mesh(&loops, env.resolution())?;
    let chamfer = if solid.is_empty() || shape.target.is_empty() {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let a = surface_points(&solid, SURFACE_SAMPLES, &mut rng);
        let b = surface_points(&shape.target, SURFACE_SAMPLES, &mut rng);
        Some(chamfer_distance(&a, &b, env.resolution())?)
    };
    Ok(ModelOutput {
        merged,
        loops,
        mesh,
        prim_trace,
        mesh_trace,
        prim_reward,
        mesh_reward,
        final_iou,
        chamfer,
    })
}
