//! Run configuration: flat `key = value` text grouped into sections. The
//! built-in defaults carry the full-scale training values; `RunConfig::desk`
//! is the profile sized for a single workstation core (also shipped as
//! `profiles/desk.cfg`).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::NetConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetProfile {
    Paper,
    Desk,
}

impl NetProfile {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetProfile::Paper => "paper",
            NetProfile::Desk => "desk",
        }
    }

    pub fn prim(&self) -> NetConfig {
        match self {
            NetProfile::Paper => NetConfig::paper_prim(),
            NetProfile::Desk => NetConfig::desk_prim(),
        }
    }

    pub fn mesh(&self) -> NetConfig {
        match self {
            NetProfile::Paper => NetConfig::paper_mesh(),
            NetProfile::Desk => NetConfig::desk_mesh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // [geometry]
    pub resolution: u32,
    // [env]
    pub alpha_local: f64,
    pub alpha_parsimony: f64,
    // [network]
    pub net_profile: NetProfile,
    // [training]
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub target_sync: usize,
    pub margin: f64,
    pub lambda: f64,
    pub dagger_iters: usize,
    pub batches_per_iter: usize,
    pub demo_long_capacity: usize,
    pub self_capacity: usize,
    pub rl_episodes_per_shape: usize,
    pub rl_updates_per_episode: usize,
    pub seed: u64,
    // [paths]
    pub run_root: String,
}

impl Default for RunConfig {
    /// Full-scale values.
    fn default() -> Self {
        Self {
            resolution: 64,
            alpha_local: 0.1,
            alpha_parsimony: 0.01,
            net_profile: NetProfile::Paper,
            learning_rate: 8e-5,
            batch_size: 64,
            gamma: 0.9,
            epsilon: 0.02,
            target_sync: 4000,
            margin: 0.8,
            lambda: 1.0,
            dagger_iters: 4,
            batches_per_iter: 4000,
            demo_long_capacity: 200_000,
            self_capacity: 100_000,
            rl_episodes_per_shape: 4,
            rl_updates_per_episode: 300,
            seed: 1,
            run_root: "runs".to_string(),
        }
    }
}

impl RunConfig {
    /// Desk-scale profile: runs the full pipeline on a single CPU core.
    /// The learning rate is raised for the small desk network; the
    /// full-scale default underfits it badly.
    pub fn desk() -> Self {
        Self {
            resolution: 32,
            net_profile: NetProfile::Desk,
            learning_rate: 2e-4,
            batches_per_iter: 600,
            demo_long_capacity: 20_000,
            self_capacity: 10_000,
            rl_episodes_per_shape: 1,
            rl_updates_per_episode: 15,
            ..Self::default()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::contract(format!("unknown profile {other}"))),
        }
    }

    /// Parses `key = value` lines under `[section]` headers; unknown keys
    /// are rejected so typos cannot silently fall back to defaults.
    pub fn parse(text: &str, base: RunConfig) -> Result<Self> {
        let mut cfg = base;
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format("config", format!("line {}: expected key = value", lineno + 1)))?;
            cfg.apply(&section, key.trim(), value.trim())
                .map_err(|e| Error::format("config", format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::contract(format!("unparseable value {v}")))
        }
        match (section, key) {
            ("geometry", "resolution") => self.resolution = num(value)?,
            ("env", "alpha_local") => self.alpha_local = num(value)?,
            ("env", "alpha_parsimony") => self.alpha_parsimony = num(value)?,
            ("network", "profile") => {
                self.net_profile = match value {
                    "paper" => NetProfile::Paper,
                    "desk" => NetProfile::Desk,
                    other => return Err(Error::contract(format!("unknown network profile {other}"))),
                }
            }
            ("training", "learning_rate") => self.learning_rate = num(value)?,
            ("training", "batch_size") => self.batch_size = num(value)?,
            ("training", "gamma") => self.gamma = num(value)?,
            ("training", "epsilon") => self.epsilon = num(value)?,
            ("training", "target_sync") => self.target_sync = num(value)?,
            ("training", "margin") => self.margin = num(value)?,
            ("training", "lambda") => self.lambda = num(value)?,
            ("training", "dagger_iters") => self.dagger_iters = num(value)?,
            ("training", "batches_per_iter") => self.batches_per_iter = num(value)?,
            ("training", "demo_long_capacity") => self.demo_long_capacity = num(value)?,
            ("training", "self_capacity") => self.self_capacity = num(value)?,
            ("training", "rl_episodes_per_shape") => self.rl_episodes_per_shape = num(value)?,
            ("training", "rl_updates_per_episode") => self.rl_updates_per_episode = num(value)?,
            ("training", "seed") => self.seed = num(value)?,
            ("paths", "run_root") => self.run_root = value.to_string(),
            _ => {
                return Err(Error::contract(format!("unknown key [{section}] {key}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 6 || self.resolution > 128 {
            return Err(Error::contract(format!(
                "resolution {} outside the supported range 6..=128",
                self.resolution
            )));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::contract("batch_size must be positive and even"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::contract("epsilon must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::contract("gamma must lie in [0, 1]"));
        }
        if self.target_sync == 0 || self.dagger_iters == 0 || self.batches_per_iter == 0 {
            return Err(Error::contract("training loop sizes must be positive"));
        }
        if self.demo_long_capacity == 0 || self.self_capacity == 0 {
            return Err(Error::contract("buffer capacities must be positive"));
        }
        Ok(())
    }

    /// Serializes every setting; `parse` of the output reproduces `self`.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[geometry]");
        let _ = writeln!(s, "resolution = {}", self.resolution);
        let _ = writeln!(s, "\n[env]");
        let _ = writeln!(s, "alpha_local = {}", self.alpha_local);
        let _ = writeln!(s, "alpha_parsimony = {}", self.alpha_parsimony);
        let _ = writeln!(s, "\n[network]");
        let _ = writeln!(s, "profile = {}", self.net_profile.as_str());
        let _ = writeln!(s, "\n[training]");
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "target_sync = {}", self.target_sync);
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "dagger_iters = {}", self.dagger_iters);
        let _ = writeln!(s, "batches_per_iter = {}", self.batches_per_iter);
        let _ = writeln!(s, "demo_long_capacity = {}", self.demo_long_capacity);
        let _ = writeln!(s, "self_capacity = {}", self.self_capacity);
        let _ = writeln!(s, "rl_episodes_per_shape = {}", self.rl_episodes_per_shape);
        let _ = writeln!(s, "rl_updates_per_episode = {}", self.rl_updates_per_episode);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[paths]");
        let _ = writeln!(s, "run_root = {}", self.run_root);
        s
    }
}
