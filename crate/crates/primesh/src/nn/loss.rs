use std::ops::Range;

use ndarray::{Array2, NdFloat};
use rand::Rng;

use crate::env::{ActionLayout, Observation};
use crate::error::{Error, Result};
use crate::nn::{DdqnPair, ObsBatch, QNetwork};
use crate::replay::Experience;

#[derive(Clone, Copy, Debug, Default)]
pub struct LossTerms {
    pub td: f64,
    pub margin: f64,
}

impl LossTerms {
    pub fn combined(&self, lambda: f64) -> f64 {
        self.td + lambda * self.margin
    }
}

/// Lowest-index argmax of `row` restricted to `legal`, with an additive
/// bonus for every action other than `exclude` (used by the margin loss;
/// pass `None`/0 for a plain argmax).
fn masked_argmax<F: NdFloat>(
    row: ndarray::ArrayView1<F>,
    legal: &Range<usize>,
    bonus_except: Option<u32>,
    bonus: F,
) -> usize {
    let mut best = legal.start;
    let mut best_v = F::neg_infinity();
    for a in legal.clone() {
        let mut v = row[a];
        if let Some(e) = bonus_except {
            if a as u32 != e {
                v = v + bonus;
            }
        }
        if v > best_v {
            best_v = v;
            best = a;
        }
    }
    best
}

/// TD targets `r + gamma * Q_target(s', argmax_legal Q_current(s'))`, with
/// the bootstrap dropped on terminal transitions. No gradients flow here.
fn td_targets<F: NdFloat>(
    pair: &DdqnPair<F>,
    batch: &[Experience],
    layout: ActionLayout,
    gamma: f64,
) -> Vec<f64> {
    let next_obs: Vec<&Observation> = batch.iter().map(|e| &e.next_observation).collect();
    let next_batch = ObsBatch::new(&pair.current.cfg, &next_obs);
    let q_next_cur = pair.current.q_values(&next_batch);
    let q_next_tgt = pair.target.q_values(&next_batch);
    batch
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.done {
                e.reward
            } else {
                let legal = layout.legal_range(e.next_observation.step);
                let a_max = masked_argmax(q_next_cur.row(i), &legal, None, F::zero());
                e.reward + gamma * q_next_tgt[[i, a_max]].to_f64().unwrap()
            }
        })
        .collect()
}

/// Squared TD error plus `lambda` times the expert-margin loss over the
/// demo records of the batch. Resets and then fills the current network's
/// gradient accumulators; returns both raw terms.
pub fn combined_loss<F: NdFloat>(
    pair: &mut DdqnPair<F>,
    batch: &[Experience],
    layout: ActionLayout,
    gamma: f64,
    margin: f64,
    lambda: f64,
) -> LossTerms {
    assert!(!batch.is_empty());
    let n = batch.len();
    let targets = td_targets(pair, batch, layout, gamma);
    let obs: Vec<&Observation> = batch.iter().map(|e| &e.observation).collect();
    let obs_batch = ObsBatch::new(&pair.current.cfg, &obs);
    pair.current.zero_grads();
    let (q, cache) = pair.current.forward(&obs_batch);
    let mut dq: Array2<F> = Array2::zeros(q.raw_dim());
    let mut td_total = 0.0;
    for (i, e) in batch.iter().enumerate() {
        let a = e.action as usize;
        let delta = q[[i, a]].to_f64().unwrap() - targets[i];
        td_total += delta * delta;
        dq[[i, a]] = dq[[i, a]] + F::from(2.0 * delta / n as f64).unwrap();
    }
    let mut margin_total = 0.0;
    let mut margin_count = 0usize;
    if lambda != 0.0 {
        margin_count = batch.iter().filter(|e| e.is_demo).count();
        if margin_count > 0 {
            let weight = F::from(lambda / margin_count as f64).unwrap();
            for (i, e) in batch.iter().enumerate() {
                if !e.is_demo {
                    continue;
                }
                let legal = layout.legal_range(e.observation.step);
                let a_e = e.action as usize;
                let a_star =
                    masked_argmax(q.row(i), &legal, Some(e.action), F::from(margin).unwrap());
                let bonus = if a_star == a_e { 0.0 } else { margin };
                margin_total +=
                    q[[i, a_star]].to_f64().unwrap() + bonus - q[[i, a_e]].to_f64().unwrap();
                if a_star != a_e {
                    dq[[i, a_star]] = dq[[i, a_star]] + weight;
                    dq[[i, a_e]] = dq[[i, a_e]] - weight;
                }
            }
        }
    }
    pair.current.backward(&cache, &dq);
    LossTerms {
        td: td_total / n as f64,
        margin: if margin_count == 0 { 0.0 } else { margin_total / margin_count as f64 },
    }
}

/// TD loss alone (the self-exploration phase trains with this only).
pub fn td_loss<F: NdFloat>(
    pair: &mut DdqnPair<F>,
    batch: &[Experience],
    layout: ActionLayout,
    gamma: f64,
) -> f64 {
    combined_loss(pair, batch, layout, gamma, 0.0, 0.0).td
}

/// Expert-margin loss alone over an all-demo batch: the highest Q-value
/// with an additive margin for non-expert actions, minus the expert
/// action's Q-value. Zero exactly when the expert action already dominates
/// every legal alternative by the margin.
pub fn margin_loss<F: NdFloat>(
    net: &mut QNetwork<F>,
    batch: &[Experience],
    layout: ActionLayout,
    margin: f64,
) -> Result<f64> {
    if batch.iter().any(|e| !e.is_demo) {
        return Err(Error::contract("margin loss over a non-demonstration record"));
    }
    assert!(!batch.is_empty());
    let n = batch.len();
    let obs: Vec<&Observation> = batch.iter().map(|e| &e.observation).collect();
    let obs_batch = ObsBatch::new(&net.cfg, &obs);
    net.zero_grads();
    let (q, cache) = net.forward(&obs_batch);
    let mut dq: Array2<F> = Array2::zeros(q.raw_dim());
    let weight = F::from(1.0 / n as f64).unwrap();
    let mut total = 0.0;
    for (i, e) in batch.iter().enumerate() {
        let legal = layout.legal_range(e.observation.step);
        let a_e = e.action as usize;
        let a_star = masked_argmax(q.row(i), &legal, Some(e.action), F::from(margin).unwrap());
        let bonus = if a_star == a_e { 0.0 } else { margin };
        total += q[[i, a_star]].to_f64().unwrap() + bonus - q[[i, a_e]].to_f64().unwrap();
        if a_star != a_e {
            dq[[i, a_star]] = dq[[i, a_star]] + weight;
            dq[[i, a_e]] = dq[[i, a_e]] - weight;
        }
    }
    net.backward(&cache, &dq);
    Ok(total / n as f64)
}

/// Masked epsilon-greedy: with probability `1 - epsilon` the legal argmax
/// (ties to the lowest index), otherwise a uniform legal action. Never
/// returns a masked-out action.
pub fn select_action<F: NdFloat>(
    net: &QNetwork<F>,
    obs: &Observation,
    legal: Range<usize>,
    epsilon: f64,
    rng: &mut impl Rng,
) -> usize {
    assert!(!legal.is_empty(), "no legal actions");
    if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
        return rng.gen_range(legal);
    }
    greedy_action(net, obs, legal)
}

/// The legal argmax of the network's action values, ties to the lowest
/// index.
pub fn greedy_action<F: NdFloat>(net: &QNetwork<F>, obs: &Observation, legal: Range<usize>) -> usize {
    assert!(!legal.is_empty(), "no legal actions");
    let q = net.q_values_single(obs);
    let mut best = legal.start;
    let mut best_v = f64::NEG_INFINITY;
    for a in legal {
        if q[a] > best_v {
            best_v = q[a];
            best = a;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetConfig;
    use std::sync::Arc;

    fn obs(step: usize, seed: u64) -> Observation {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Observation {
            reference: Arc::new((0..64).map(|_| rng.gen_range(0.0..1.0)).collect()),
            params: (0..12).map(|_| rng.gen_range(0.0..1.0)).collect(),
            step,
            steps_total: 10,
        }
    }

    fn layout() -> ActionLayout {
        ActionLayout { slots: 2, per_slot: 3 }
    }

    fn experience(step: usize, action: u32, reward: f64, done: bool, is_demo: bool, seed: u64) -> Experience {
        Experience {
            observation: obs(step, seed),
            action,
            reward,
            next_observation: obs(step + 1, seed.wrapping_add(99)),
            done,
            is_demo,
        }
    }

    /// Central finite differences over every parameter.
    fn numeric_grad<L: FnMut(&mut DdqnPair<f64>) -> f64>(
        pair: &mut DdqnPair<f64>,
        mut loss: L,
    ) -> Vec<f64> {
        let base = pair.current.flat_params();
        let h = 1e-5;
        let mut grad = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            pair.current.set_flat_params(&plus);
            let up = loss(pair);
            let mut minus = base.clone();
            minus[i] -= h;
            pair.current.set_flat_params(&minus);
            let down = loss(pair);
            grad.push((up - down) / (2.0 * h));
        }
        pair.current.set_flat_params(&base);
        grad
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64]) {
        let dot: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().max(1e-12);
        let rel = (dot / norm).sqrt();
        assert!(rel <= 1e-4, "gradient relative error {rel}");
    }

    #[test]
    fn terminal_transition_with_exact_value_has_zero_loss() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 5);
        let mut e = experience(0, 1, 0.0, true, false, 3);
        // Set the reward to the network's own value so the residual is zero.
        e.reward = pair.current.q_values_single(&e.observation)[1];
        let loss = td_loss(&mut pair, &[e], layout(), 0.9);
        assert!(loss.abs() < 1e-18);
    }

    #[test]
    fn gamma_zero_reduces_to_mean_squared_q() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 6);
        let batch = vec![
            experience(0, 0, 0.0, false, false, 1),
            experience(1, 4, 0.0, false, false, 2),
        ];
        let loss = td_loss(&mut pair, &batch, layout(), 0.0);
        let manual: f64 = batch
            .iter()
            .map(|e| {
                let q = pair.current.q_values_single(&e.observation)[e.action as usize];
                q * q
            })
            .sum::<f64>()
            / batch.len() as f64;
        assert!((loss - manual).abs() < 1e-12);
    }

    #[test]
    fn td_gradient_matches_finite_differences() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 7);
        let batch = vec![
            experience(0, 2, 0.3, false, false, 10),
            experience(1, 3, -0.1, true, false, 11),
            experience(2, 1, 0.05, false, false, 12),
        ];
        td_loss(&mut pair, &batch, layout(), 0.9);
        let analytic = pair.current.flat_grads();
        let numeric = numeric_grad(&mut pair, |p| td_loss(p, &batch, layout(), 0.9));
        assert_grads_close(&analytic, &numeric);
    }

    #[test]
    fn margin_gradient_matches_finite_differences() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 8);
        let batch = vec![
            experience(0, 1, 0.0, false, true, 20),
            experience(1, 5, 0.0, false, true, 21),
        ];
        margin_loss(&mut pair.current, &batch, layout(), 0.8).unwrap();
        let analytic = pair.current.flat_grads();
        let numeric =
            numeric_grad(&mut pair, |p| margin_loss(&mut p.current, &batch, layout(), 0.8).unwrap());
        assert_grads_close(&analytic, &numeric);
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 9);
        let batch = vec![
            experience(0, 1, 0.2, false, true, 30),
            experience(1, 4, -0.4, false, false, 31),
            experience(0, 0, 0.1, true, true, 32),
        ];
        combined_loss(&mut pair, &batch, layout(), 0.9, 0.8, 1.0);
        let analytic = pair.current.flat_grads();
        let numeric = numeric_grad(&mut pair, |p| {
            combined_loss(p, &batch, layout(), 0.9, 0.8, 1.0).combined(1.0)
        });
        assert_grads_close(&analytic, &numeric);
    }

    #[test]
    fn combined_equals_td_plus_margin() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 10);
        let batch = vec![
            experience(0, 1, 0.2, false, true, 40),
            experience(1, 3, 0.0, false, true, 41),
        ];
        let terms = combined_loss(&mut pair, &batch, layout(), 0.9, 0.8, 1.0);
        let td_only = td_loss(&mut pair, &batch, layout(), 0.9);
        let margin_only = margin_loss(&mut pair.current, &batch, layout(), 0.8).unwrap();
        assert!((terms.td - td_only).abs() < 1e-12);
        assert!((terms.margin - margin_only).abs() < 1e-12);
        assert!((terms.combined(1.0) - (td_only + margin_only)).abs() < 1e-12);
        // Lambda 0 reduces to the TD term.
        let lambda0 = combined_loss(&mut pair, &batch, layout(), 0.9, 0.8, 0.0);
        assert_eq!(lambda0.combined(0.0), lambda0.td);
    }

    #[test]
    fn margin_rejects_non_demo_records() {
        let mut pair = DdqnPair::<f64>::new(NetConfig::tiny(6), 11);
        let batch = vec![experience(0, 1, 0.0, false, false, 50)];
        assert!(margin_loss(&mut pair.current, &batch, layout(), 0.8).is_err());
    }

    #[test]
    fn select_action_is_masked_and_tie_breaks_low() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut net = QNetwork::<f64>::new(NetConfig::tiny(6), 12);
        // Zero head: all Q equal, greedy must return the lowest legal index.
        net.visit_params_mut(&mut |name, mut p, _| {
            if name.starts_with("head3") {
                p.fill(0.0);
            }
        });
        let o = obs(1, 60);
        assert_eq!(select_action(&net, &o, 3..6, 0.0, &mut rng), 3);
        for _ in 0..50 {
            let a = select_action(&net, &o, 3..6, 1.0, &mut rng);
            assert!((3..6).contains(&a));
        }
    }

    #[test]
    fn greedy_choice_ignores_constant_offsets() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut net = QNetwork::<f64>::new(NetConfig::tiny(6), 13);
        let o = obs(0, 61);
        let before = select_action(&net, &o, 0..3, 0.0, &mut rng);
        net.visit_params_mut(&mut |name, mut p, _| {
            if name == "head3.bias" {
                p.mapv_inplace(|v| v + 5.0);
            }
        });
        let after = select_action(&net, &o, 0..3, 0.0, &mut rng);
        assert_eq!(before, after);
    }
}
