//! The heuristic demonstrator: at each step it trials every legal action and
//! plays the one with the best one-step reward, ties broken by lowest index.
//! For the primitive environment, delete actions are held back during the
//! first half of the episode so the primitives fit the shape before
//! redundancy is trimmed.

use crate::env::Env;
use crate::replay::Experience;

/// The greedy action for the current state. Deterministic.
pub fn expert_action<E: Env>(env: &mut E) -> usize {
    debug_assert!(!env.is_done());
    let allow_delete = env.step_index() >= env.horizon() / 2;
    let mut best_action = None;
    let mut best_reward = f64::NEG_INFINITY;
    for action in env.legal_range() {
        if !allow_delete && env.is_delete(action) {
            continue;
        }
        let reward = env.peek_reward(action);
        if reward > best_reward {
            best_reward = reward;
            best_action = Some(action);
        }
    }
    best_action.expect("legal range always holds a non-delete action")
}

/// Rolls one full episode under the expert policy, recording every
/// transition as a demonstration.
pub fn demonstrate<E: Env>(env: &mut E) -> Vec<Experience> {
    let mut experiences = Vec::with_capacity(env.horizon());
    let mut obs = env.observe();
    while !env.is_done() {
        let action = expert_action(env);
        let (reward, done) = env.step(action).expect("expert picked an illegal action");
        let next_obs = env.observe();
        experiences.push(Experience {
            observation: obs,
            action: action as u32,
            reward,
            next_observation: next_obs.clone(),
            done,
            is_demo: true,
        });
        obs = next_obs;
    }
    experiences
}
