//! Training orchestration: demonstration generation, DAgger imitation with
//! double demo buffers, TD-only self-exploration, and the ablation schemes.

mod pipeline;

pub use pipeline::{cap_by_volume, merged_primitives_for_shape, model_shape, ModelOutput};

use ndarray::NdFloat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::Shape;
use crate::env::{ActionLayout, Env, LOOP_COUNT, MESH_ACTIONS_PER, PRIM_ACTIONS_PER, PRIM_COUNT};
use crate::error::{Error, Result};
use crate::expert::{demonstrate, expert_action};
use crate::geometry::{chamfer_distance, surface_points, SURFACE_SAMPLES};
use crate::nn::{combined_loss, margin_loss, select_action, td_loss, Adam, DdqnPair, LossTerms, NetConfig};
use crate::replay::{sample_equal, Experience, ReplayBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    Prim,
    Mesh,
}

impl AgentKind {
    pub fn layout(&self) -> ActionLayout {
        match self {
            AgentKind::Prim => ActionLayout { slots: PRIM_COUNT, per_slot: PRIM_ACTIONS_PER },
            AgentKind::Mesh => ActionLayout { slots: LOOP_COUNT, per_slot: MESH_ACTIONS_PER },
        }
    }
}

/// Everything one training run needs, extracted from a `RunConfig`.
#[derive(Clone, Copy, Debug)]
pub struct TrainSettings {
    pub net: NetConfig,
    pub layout: ActionLayout,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub margin: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub target_sync: usize,
    pub dagger_iters: usize,
    pub batches_per_iter: usize,
    pub demo_long_capacity: usize,
    pub self_capacity: usize,
    pub rl_episodes_per_shape: usize,
    pub rl_updates_per_episode: usize,
    pub seed: u64,
}

impl TrainSettings {
    pub fn from_run(cfg: &RunConfig, agent: AgentKind) -> Self {
        let net = match agent {
            AgentKind::Prim => cfg.net_profile.prim(),
            AgentKind::Mesh => cfg.net_profile.mesh(),
        };
        Self {
            net,
            layout: agent.layout(),
            gamma: cfg.gamma,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            margin: cfg.margin,
            lambda: cfg.lambda,
            epsilon: cfg.epsilon,
            target_sync: cfg.target_sync,
            dagger_iters: cfg.dagger_iters,
            batches_per_iter: cfg.batches_per_iter,
            demo_long_capacity: cfg.demo_long_capacity,
            self_capacity: cfg.self_capacity,
            rl_episodes_per_shape: cfg.rl_episodes_per_shape,
            rl_updates_per_episode: cfg.rl_updates_per_episode,
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    Combined,
    TdOnly,
    MarginOnly,
}

/// The network pair, its optimizer, and the update/sync counters.
pub struct Learner<F> {
    pub pair: DdqnPair<F>,
    pub adam: Adam<F>,
    pub updates: usize,
    pub syncs: usize,
    pub settings: TrainSettings,
}

impl<F: NdFloat> Learner<F> {
    pub fn new(settings: TrainSettings) -> Self {
        Self {
            pair: DdqnPair::new(settings.net, settings.seed),
            adam: Adam::new(settings.learning_rate),
            updates: 0,
            syncs: 0,
            settings,
        }
    }

    /// One minibatch update; the target network syncs every
    /// `target_sync` updates.
    pub fn update(&mut self, batch: &[Experience], kind: UpdateKind) -> LossTerms {
        let s = &self.settings;
        let terms = match kind {
            UpdateKind::Combined => {
                combined_loss(&mut self.pair, batch, s.layout, s.gamma, s.margin, s.lambda)
            }
            UpdateKind::TdOnly => {
                LossTerms { td: td_loss(&mut self.pair, batch, s.layout, s.gamma), margin: 0.0 }
            }
            UpdateKind::MarginOnly => LossTerms {
                td: 0.0,
                margin: margin_loss(&mut self.pair.current, batch, s.layout, s.margin)
                    .expect("margin update over non-demo records"),
            },
        };
        self.adam.step(&mut self.pair.current);
        self.updates += 1;
        if self.updates % self.settings.target_sync == 0 {
            self.pair.sync_target();
            self.syncs += 1;
        }
        terms
    }
}

/// Expert rollouts over every shape, in order.
pub fn generate_demos<E: Env>(
    shapes: &[Shape],
    factory: impl Fn(&Shape) -> Result<E>,
) -> Result<Vec<Experience>> {
    let mut out = Vec::new();
    for shape in shapes {
        let mut env = factory(shape)?;
        out.extend(demonstrate(&mut env));
    }
    Ok(out)
}

/// Rolls the greedy policy and labels every visited state with the expert's
/// action: the stored tuple is the expert branch (reward and successor from
/// a trial application), while the trajectory itself follows the policy.
pub fn collect_relabeled<E: Env, F: NdFloat>(
    env: &mut E,
    pair: &DdqnPair<F>,
    rng: &mut impl rand::Rng,
) -> Vec<Experience> {
    let mut out = Vec::with_capacity(env.horizon());
    let mut obs = env.observe();
    while !env.is_done() {
        let labeled = expert_action(env);
        let (reward, next_obs, done) = env.step_peek(labeled);
        out.push(Experience {
            observation: obs.clone(),
            action: labeled as u32,
            reward,
            next_observation: next_obs,
            done,
            is_demo: true,
        });
        let policy_action = select_action(&pair.current, &obs, env.legal_range(), 0.0, rng);
        env.step(policy_action).expect("greedy action is legal");
        obs = env.observe();
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct IlOptions {
    /// Collect and relabel policy rollouts each iteration (DAgger); false
    /// trains on the fixed initial demonstrations only.
    pub interactive: bool,
    /// Short-term + long-term demo buffers with equal-mix sampling; false
    /// samples one buffer.
    pub double_buffers: bool,
    /// Margin loss only (classic imitation); false uses TD + margin.
    pub supervised_only: bool,
}

impl IlOptions {
    pub fn standard() -> Self {
        Self { interactive: true, double_buffers: true, supervised_only: false }
    }
}

pub struct IlOutcome<F> {
    pub learner: Learner<F>,
    pub demo_long: ReplayBuffer,
    /// Initial expert demonstrations, before any aggregation.
    pub seed_demos: Vec<Experience>,
}

/// Imitation phase. Per shape, each DAgger iteration trains
/// `batches_per_iter` minibatches from the demo buffers, rolls out the
/// current greedy policy on that shape, relabels the visited states with
/// expert actions, empties the short-term buffer and aggregates.
pub fn run_il<E: Env, F: NdFloat>(
    shapes: &[Shape],
    factory: impl Fn(&Shape) -> Result<E>,
    settings: TrainSettings,
    options: IlOptions,
) -> Result<IlOutcome<F>> {
    if shapes.is_empty() {
        return Err(Error::contract("imitation needs at least one shape"));
    }
    let seed_demos = generate_demos(shapes, &factory)?;
    let mut demo_long = ReplayBuffer::new(settings.demo_long_capacity);
    demo_long.extend(seed_demos.iter().cloned());
    let mut demo_short = ReplayBuffer::new(settings.demo_long_capacity);
    demo_short.extend(seed_demos.iter().cloned());
    let mut learner = Learner::new(settings);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let kind = if options.supervised_only { UpdateKind::MarginOnly } else { UpdateKind::Combined };
    if options.interactive {
        for shape in shapes {
            for _iteration in 0..settings.dagger_iters {
                for _ in 0..settings.batches_per_iter {
                    let batch = if options.double_buffers {
                        sample_equal(&demo_short, &demo_long, settings.batch_size, &mut rng)?
                    } else {
                        demo_long.sample(settings.batch_size, &mut rng)
                    };
                    learner.update(&batch, kind);
                }
                let mut env = factory(shape)?;
                let collected = collect_relabeled(&mut env, &learner.pair, &mut rng);
                demo_short.clear();
                demo_long.extend(collected.iter().cloned());
                demo_short.extend(collected);
            }
        }
    } else {
        let total = shapes.len() * settings.dagger_iters * settings.batches_per_iter;
        for _ in 0..total {
            let batch = demo_long.sample(settings.batch_size, &mut rng);
            learner.update(&batch, kind);
        }
    }
    Ok(IlOutcome { learner, demo_long, seed_demos })
}

pub struct RlOutcome {
    pub episodes: usize,
    pub self_buffer_len: usize,
}

/// Self-exploration phase: epsilon-greedy rollouts fill the self buffer;
/// every update samples equally from the self and long-term demo buffers
/// (self only when no demos exist) and applies the TD loss alone.
pub fn run_rl<E: Env, F: NdFloat>(
    learner: &mut Learner<F>,
    shapes: &[Shape],
    factory: impl Fn(&Shape) -> Result<E>,
    demo_long: Option<&ReplayBuffer>,
) -> Result<RlOutcome> {
    if shapes.is_empty() {
        return Err(Error::contract("self-exploration needs at least one shape"));
    }
    let settings = learner.settings;
    let mut d_self = ReplayBuffer::new(settings.self_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_mul(0x9e37_79b9).wrapping_add(2));
    let mut episodes = 0;
    for _round in 0..settings.rl_episodes_per_shape {
        for shape in shapes {
            let mut env = factory(shape)?;
            let mut obs = env.observe();
            while !env.is_done() {
                let action =
                    select_action(&learner.pair.current, &obs, env.legal_range(), settings.epsilon, &mut rng);
                let (reward, done) = env.step(action)?;
                let next_obs = env.observe();
                d_self.push(Experience {
                    observation: obs,
                    action: action as u32,
                    reward,
                    next_observation: next_obs.clone(),
                    done,
                    is_demo: false,
                });
                obs = next_obs;
            }
            episodes += 1;
            for _ in 0..settings.rl_updates_per_episode {
                let batch = match demo_long {
                    Some(demos) => sample_equal(&d_self, demos, settings.batch_size, &mut rng)?,
                    None => d_self.sample(settings.batch_size, &mut rng),
                };
                learner.update(&batch, UpdateKind::TdOnly);
            }
        }
    }
    Ok(RlOutcome { episodes, self_buffer_len: d_self.len() })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalResult {
    pub shapes: usize,
    pub mean_accumulated_reward: f64,
    pub mean_iou: f64,
    pub mean_chamfer: f64,
}

/// Greedy (epsilon = 0) evaluation: mean accumulated reward, mean final
/// IoU, and mean Chamfer distance between the final solid and the target.
pub fn evaluate_policy<E: Env, F: NdFloat>(
    pair: &DdqnPair<F>,
    shapes: &[Shape],
    factory: impl Fn(&Shape) -> Result<E>,
) -> Result<EvalResult> {
    if shapes.is_empty() {
        return Err(Error::contract("evaluation needs at least one shape"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut total_reward = 0.0;
    let mut total_iou = 0.0;
    let mut chamfers = Vec::new();
    for shape in shapes {
        let mut env = factory(shape)?;
        let mut obs = env.observe();
        let mut accumulated = 0.0;
        while !env.is_done() {
            let action = select_action(&pair.current, &obs, env.legal_range(), 0.0, &mut rng);
            let (reward, _) = env.step(action)?;
            accumulated += reward;
            obs = env.observe();
        }
        total_reward += accumulated;
        total_iou += env.current_iou();
        let solid = env.rasterize();
        if !solid.is_empty() && !shape.target.is_empty() {
            let a = surface_points(&solid, SURFACE_SAMPLES, &mut rng);
            let b = surface_points(&shape.target, SURFACE_SAMPLES, &mut rng);
            chamfers.push(chamfer_distance(&a, &b, solid.resolution())?);
        }
    }
    let n = shapes.len() as f64;
    Ok(EvalResult {
        shapes: shapes.len(),
        mean_accumulated_reward: total_reward / n,
        mean_iou: total_iou / n,
        mean_chamfer: if chamfers.is_empty() {
            f64::NAN
        } else {
            chamfers.iter().sum::<f64>() / chamfers.len() as f64
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeMode {
    /// RL from scratch, no demonstrations.
    DdqnOnly,
    /// Interactive imitation with a single demo buffer and supervised loss
    /// only; no RL phase.
    DaggerOnly,
    /// Pretraining on fixed demonstrations (no relabeling), then RL.
    DqfdStyle,
    /// Interactive imitation with double demo buffers; no RL phase.
    DaggerStar,
    /// Interactive imitation with double buffers, then RL.
    Full,
}

impl SchemeMode {
    pub const ALL: [SchemeMode; 5] = [
        SchemeMode::DdqnOnly,
        SchemeMode::DaggerOnly,
        SchemeMode::DqfdStyle,
        SchemeMode::DaggerStar,
        SchemeMode::Full,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeMode::DdqnOnly => "ddqn_only",
            SchemeMode::DaggerOnly => "dagger_only",
            SchemeMode::DqfdStyle => "dqfd_style",
            SchemeMode::DaggerStar => "dagger_star",
            SchemeMode::Full => "full",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown scheme mode {s}")))
    }
}

pub struct SchemeOutcome<F> {
    pub learner: Learner<F>,
    /// Long-term demo buffer size at the end (0 for the RL-only scheme).
    pub demo_long_len: usize,
    /// Whether a self-exploration buffer was ever constructed.
    pub used_self_buffer: bool,
    pub rl_episodes: usize,
}

/// Configures the imitation and self-exploration phases for one ablation
/// row and trains an agent accordingly.
pub fn run_scheme<E: Env, F: NdFloat>(
    mode: SchemeMode,
    shapes: &[Shape],
    factory: impl Fn(&Shape) -> Result<E>,
    settings: TrainSettings,
) -> Result<SchemeOutcome<F>> {
    match mode {
        SchemeMode::DdqnOnly => {
            let mut learner = Learner::new(settings);
            let rl = run_rl(&mut learner, shapes, &factory, None)?;
            Ok(SchemeOutcome {
                learner,
                demo_long_len: 0,
                used_self_buffer: true,
                rl_episodes: rl.episodes,
            })
        }
        SchemeMode::DaggerOnly => {
            let il = run_il(
                shapes,
                &factory,
                settings,
                IlOptions { interactive: true, double_buffers: false, supervised_only: true },
            )?;
            Ok(SchemeOutcome {
                learner: il.learner,
                demo_long_len: il.demo_long.len(),
                used_self_buffer: false,
                rl_episodes: 0,
            })
        }
        SchemeMode::DqfdStyle => {
            let il = run_il(
                shapes,
                &factory,
                settings,
                IlOptions { interactive: false, double_buffers: false, supervised_only: false },
            )?;
            let mut learner = il.learner;
            let rl = run_rl(&mut learner, shapes, &factory, Some(&il.demo_long))?;
            Ok(SchemeOutcome {
                learner,
                demo_long_len: il.demo_long.len(),
                used_self_buffer: true,
                rl_episodes: rl.episodes,
            })
        }
        SchemeMode::DaggerStar => {
            let il = run_il(shapes, &factory, settings, IlOptions::standard())?;
            Ok(SchemeOutcome {
                learner: il.learner,
                demo_long_len: il.demo_long.len(),
                used_self_buffer: false,
                rl_episodes: 0,
            })
        }
        SchemeMode::Full => {
            let il = run_il(shapes, &factory, settings, IlOptions::standard())?;
            let mut learner = il.learner;
            let rl = run_rl(&mut learner, shapes, &factory, Some(&il.demo_long))?;
            Ok(SchemeOutcome {
                learner,
                demo_long_len: il.demo_long.len(),
                used_self_buffer: true,
                rl_episodes: rl.episodes,
            })
        }
    }
}
