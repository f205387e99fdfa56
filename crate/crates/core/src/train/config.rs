use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::graph::GraphFamily;
use crate::qnet::Dims;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

fn yes() -> bool {
    true
}
fn default_batch_size() -> usize {
    64
}
fn default_update_every() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    1e-4
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_epsilon_start() -> f64 {
    1.0
}
fn default_epsilon_end() -> f64 {
    0.05
}
fn default_epsilon_decay_fraction() -> f64 {
    0.1
}
fn default_target_sync_period() -> usize {
    1000
}
fn default_replay_capacity() -> usize {
    5000
}
fn default_holdout_size() -> usize {
    50
}
fn default_huber_delta() -> f64 {
    1.0
}
fn default_embedding_dim() -> usize {
    64
}
fn default_message_rounds() -> usize {
    3
}

/// Training hyperparameters. Read from a flat TOML table; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub graph_type: GraphFamily,
    pub num_vertices: usize,
    /// Number of environment actions to train for.
    pub total_steps: usize,
    pub seed: u64,

    #[serde(default = "yes")]
    pub reversible: bool,
    #[serde(default = "yes")]
    pub observation_tuning: bool,
    #[serde(default = "yes")]
    pub intrinsic_rewards: bool,
    /// Defaults to 2 for reversible agents and 1 otherwise.
    #[serde(default)]
    pub episode_length_multiplier: Option<f64>,
    /// Defaults to 0.95 for reversible agents and 1 otherwise.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Clip target Q-values at zero. Defaults to on for irreversible agents.
    #[serde(default)]
    pub clip_target: Option<bool>,

    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_update_every")]
    pub update_every: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_huber_delta")]
    pub huber_delta: f64,
    #[serde(default = "default_epsilon_start")]
    pub epsilon_start: f64,
    #[serde(default = "default_epsilon_end")]
    pub epsilon_end: f64,
    #[serde(default = "default_epsilon_decay_fraction")]
    pub epsilon_decay_fraction: f64,
    /// Gradient updates between hard target-network syncs.
    #[serde(default = "default_target_sync_period")]
    pub target_sync_period: usize,
    #[serde(default = "default_replay_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "default_holdout_size")]
    pub holdout_size: usize,
    /// Environment actions between holdout evaluations. Defaults to a
    /// twentieth of the run.
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_message_rounds")]
    pub message_rounds: usize,
}

impl TrainConfig {
    /// A configuration with every optional key at its default.
    pub fn new(graph_type: GraphFamily, num_vertices: usize, total_steps: usize, seed: u64) -> Self {
        let text = format!(
            "graph_type = \"{graph_type}\"\nnum_vertices = {num_vertices}\ntotal_steps = {total_steps}\nseed = {seed}\n"
        );
        toml::from_str(&text).expect("minimal config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn env_config(&self) -> EnvConfig {
        let r = self.reversible;
        EnvConfig {
            reversible: r,
            episode_length_multiplier: self
                .episode_length_multiplier
                .unwrap_or(if r { 2.0 } else { 1.0 }),
            intrinsic_rewards: self.intrinsic_rewards,
            observation_tuning: self.observation_tuning,
            gamma: self.gamma.unwrap_or(if r { 0.95 } else { 1.0 }),
        }
    }

    pub fn clip_target(&self) -> bool {
        self.clip_target.unwrap_or(!self.reversible)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            m: crate::env::NUM_FEATURES,
            n: self.embedding_dim,
            k: self.message_rounds,
        }
    }

    pub fn eval_every(&self) -> usize {
        self.eval_every.unwrap_or((self.total_steps / 20).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("update_every", self.update_every),
            ("target_sync_period", self.target_sync_period),
            ("replay_capacity", self.replay_capacity),
            ("holdout_size", self.holdout_size),
            ("message_rounds", self.message_rounds),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{key} must be positive")));
            }
        }
        if self.num_vertices < 2 {
            return Err(Error::Config("num_vertices must be at least 2".into()));
        }
        if self.embedding_dim < 2 {
            return Err(Error::Config("embedding_dim must be at least 2".into()));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.batch_size > self.replay_capacity {
            return Err(Error::Config("batch_size exceeds replay_capacity".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(Error::Config("huber_delta must be positive".into()));
        }
        let eps_ok = |x: f64| (0.0..=1.0).contains(&x);
        if !eps_ok(self.epsilon_start) || !eps_ok(self.epsilon_end) || self.epsilon_end > self.epsilon_start {
            return Err(Error::Config(
                "need 0 <= epsilon_end <= epsilon_start <= 1".into(),
            ));
        }
        if !eps_ok(self.epsilon_decay_fraction) {
            return Err(Error::Config("epsilon_decay_fraction must lie in [0, 1]".into()));
        }
        self.env_config().validate()
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over the first
/// `epsilon_decay_fraction` of training, constant afterwards.
pub fn epsilon_at(cfg: &TrainConfig, step: usize) -> f64 {
    let span = cfg.epsilon_decay_fraction * cfg.total_steps as f64;
    let step = step as f64;
    if step >= span {
        return cfg.epsilon_end;
    }
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * step / span
}
