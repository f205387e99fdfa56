//! Exploratory Max-Cut environment.
//!
//! An episode starts from a random membership (reversible agents) or the
//! empty set (irreversible agents) and lasts `T = round(multiplier * |V|)`
//! flips. The reward pays for improving on the best cut seen so far in the
//! episode, never punishes a decrease, and optionally adds `1/|V|` the first
//! time each distinct local optimum is reached.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{apply_flip, compute_gains, cut_value, GainVector, Graph, Membership};
use crate::seed;

/// Width of a vertex observation vector.
pub const NUM_FEATURES: usize = 7;

/// Per-vertex observations, one row per vertex, columns in this order:
///
/// 0. vertex is in the solution set
/// 1. immediate cut change if flipped, divided by `|V|`
/// 2. steps since the vertex was last flipped, divided by `T`
/// 3. best cut minus current cut, divided by `|V|`
/// 4. Hamming distance to the best solution, divided by `|V|`
/// 5. number of available improving actions, divided by `|V|`
/// 6. steps remaining, divided by `T`
pub type ObservationMatrix = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub reversible: bool,
    pub episode_length_multiplier: f64,
    pub intrinsic_rewards: bool,
    pub observation_tuning: bool,
    pub gamma: f64,
}

impl EnvConfig {
    /// Reversible actions, all observations, intrinsic rewards, γ = 0.95.
    pub fn eco() -> Self {
        EnvConfig {
            reversible: true,
            episode_length_multiplier: 2.0,
            intrinsic_rewards: true,
            observation_tuning: true,
            gamma: 0.95,
        }
    }

    /// Irreversible, vertex state only, immediate-change rewards, γ = 1.
    pub fn s2v() -> Self {
        EnvConfig {
            reversible: false,
            episode_length_multiplier: 1.0,
            intrinsic_rewards: false,
            observation_tuning: false,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.episode_length_multiplier;
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Config(format!("episode length multiplier must be positive, got {m}")));
        }
        if !self.reversible && m > 1.0 {
            return Err(Error::Config(
                "irreversible episodes cannot be longer than |V| steps".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} not in [0, 1]", self.gamma)));
        }
        if self.reversible && self.gamma >= 1.0 {
            return Err(Error::Config("gamma = 1 is only allowed for irreversible agents".into()));
        }
        Ok(())
    }

    pub fn episode_length(&self, num_vertices: usize) -> usize {
        ((self.episode_length_multiplier * num_vertices as f64).round() as usize).max(1)
    }
}

/// Result of one environment transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Total reward (extrinsic plus intrinsic), normalized by `|V|`.
    pub reward: f64,
    /// Extrinsic reward in cut units, i.e. before division by `|V|`.
    pub extrinsic: f64,
    /// Whether the intrinsic local-optimum bonus was paid.
    pub intrinsic: bool,
    /// Change in cut value caused by the flip.
    pub delta: f64,
    pub locally_optimal: bool,
    pub revisited: bool,
    pub done: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvState {
    graph: Arc<Graph>,
    config: EnvConfig,
    membership: Membership,
    gains: GainVector,
    t: usize,
    horizon: usize,
    initial_cut: f64,
    current_cut: f64,
    best_cut: f64,
    best_membership: Membership,
    last_flip: Vec<Option<usize>>,
    flipped: Vec<bool>,
    visited_local_optima: HashSet<Membership>,
    visited_states: HashSet<Membership>,
}

impl EnvState {
    /// Start an episode; the initial membership is drawn from `seed`.
    pub fn reset(graph: Arc<Graph>, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = graph.num_vertices();
        let membership = if config.reversible {
            let mut rng = seed::rng(seed);
            Membership::from_bits((0..n).map(|_| rng.gen_bool(0.5)).collect())
        } else {
            Membership::empty(n)
        };
        Self::start_from(graph, config, membership)
    }

    /// Start an episode from an explicit membership.
    pub fn start_from(graph: Arc<Graph>, config: EnvConfig, membership: Membership) -> Result<Self> {
        config.validate()?;
        let n = graph.num_vertices();
        let gains = compute_gains(&graph, &membership)?;
        let cut = cut_value(&graph, &membership)?;
        let mut visited_states = HashSet::new();
        visited_states.insert(membership.clone());
        let mut visited_local_optima = HashSet::new();
        if gains.max() <= 0.0 {
            visited_local_optima.insert(membership.clone());
        }
        Ok(EnvState {
            horizon: config.episode_length(n),
            graph,
            config,
            best_membership: membership.clone(),
            membership,
            gains,
            t: 0,
            initial_cut: cut,
            current_cut: cut,
            best_cut: cut,
            last_flip: vec![None; n],
            flipped: vec![false; n],
            visited_local_optima,
            visited_states,
        })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices()
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn gains(&self) -> &GainVector {
        &self.gains
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn current_cut(&self) -> f64 {
        self.current_cut
    }

    pub fn best_cut(&self) -> f64 {
        self.best_cut
    }

    pub fn initial_cut(&self) -> f64 {
        self.initial_cut
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.horizon
    }

    /// Whether vertex `v` has been flipped earlier in this episode.
    pub fn was_flipped(&self, v: usize) -> bool {
        self.flipped[v]
    }

    /// No single flip increases the cut.
    pub fn is_locally_optimal(&self) -> bool {
        self.gains.max() <= 0.0
    }

    /// Irreversible agents may only add vertices to the solution set.
    pub fn is_allowed(&self, v: usize) -> bool {
        self.config.reversible || !self.membership.contains(v)
    }

    pub fn allowed_mask(&self) -> Vec<bool> {
        (0..self.num_vertices()).map(|v| self.is_allowed(v)).collect()
    }

    /// Best membership seen in the episode and its cut.
    pub fn episode_result(&self) -> (Membership, f64) {
        (self.best_membership.clone(), self.best_cut)
    }

    pub fn observe(&self) -> ObservationMatrix {
        let n = self.num_vertices();
        let nf = n as f64;
        let horizon = self.horizon as f64;
        let mut obs = Array2::zeros((n, NUM_FEATURES));
        for v in 0..n {
            obs[[v, 0]] = if self.membership.contains(v) { 1.0 } else { 0.0 };
        }
        if !self.config.observation_tuning {
            return obs;
        }
        let improving = (0..n)
            .filter(|&v| self.is_allowed(v) && self.gains[v] > 0.0)
            .count();
        let global = [
            (self.best_cut - self.current_cut) / nf,
            self.membership.hamming(&self.best_membership) as f64 / nf,
            improving as f64 / nf,
            (self.horizon - self.t) as f64 / horizon,
        ];
        for v in 0..n {
            obs[[v, 1]] = self.gains[v] / nf;
            let age = match self.last_flip[v] {
                Some(at) => self.t - at,
                None => self.t,
            };
            obs[[v, 2]] = age as f64 / horizon;
            for (j, &x) in global.iter().enumerate() {
                obs[[v, 3 + j]] = x;
            }
        }
        obs
    }

    /// Flip vertex `v` and collect the reward for the resulting state.
    pub fn step(&mut self, v: usize) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let n = self.num_vertices();
        if v >= n {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                num_vertices: n,
            });
        }
        if !self.is_allowed(v) {
            return Err(Error::ActionNotAllowed(v));
        }

        let old_cut = self.current_cut;
        let delta = apply_flip(&self.graph, &mut self.membership, &mut self.gains, v)?;
        self.current_cut += delta;
        self.t += 1;
        self.last_flip[v] = Some(self.t);
        self.flipped[v] = true;

        // Against the best seen before this step.
        let extrinsic = if self.config.observation_tuning {
            (self.current_cut - self.best_cut).max(0.0)
        } else {
            self.current_cut - old_cut
        };
        if self.current_cut > self.best_cut {
            self.best_cut = self.current_cut;
            self.best_membership = self.membership.clone();
        }

        let locally_optimal = self.is_locally_optimal();
        let revisited = !self.visited_states.insert(self.membership.clone());
        let new_optimum = locally_optimal && self.visited_local_optima.insert(self.membership.clone());
        let intrinsic = self.config.intrinsic_rewards && new_optimum;

        let nf = n as f64;
        let mut reward = extrinsic / nf;
        if intrinsic {
            reward += 1.0 / nf;
        }
        Ok(StepOutcome {
            reward,
            extrinsic,
            intrinsic,
            delta,
            locally_optimal,
            revisited,
            done: self.is_done(),
        })
    }
}

/// One line of an exported episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub cut: f64,
    pub best_cut: f64,
    pub locally_optimal: bool,
    pub revisited: bool,
}

impl TraceRecord {
    pub fn from_step(env: &EnvState, action: usize, outcome: &StepOutcome) -> Self {
        TraceRecord {
            step: env.step_count(),
            action,
            reward: outcome.reward,
            cut: env.current_cut(),
            best_cut: env.best_cut(),
            locally_optimal: outcome.locally_optimal,
            revisited: outcome.revisited,
        }
    }
}

/// Write records as JSON lines.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
