//! Greedy rollouts of a trained Q-network.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::SolveResult;
use crate::env::{EnvConfig, EnvState, StepOutcome};
use crate::error::Result;
use crate::graph::{Graph, Membership};
use crate::qnet::{forward, greedy_action, QNetParams};

/// A frozen Q-network together with the environment it was trained in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub params: QNetParams,
    pub env_config: EnvConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub initial_cut: f64,
    pub best_cut: f64,
    pub best_membership: Membership,
    pub steps: usize,
    /// Wall-clock seconds spent choosing and applying actions.
    pub action_seconds: f64,
}

impl Agent {
    pub fn new(params: QNetParams, env_config: EnvConfig) -> Result<Self> {
        params.check_shapes()?;
        env_config.validate()?;
        Ok(Agent { params, env_config })
    }

    /// The greedy action in the current state.
    pub fn act(&self, env: &EnvState) -> Result<usize> {
        let q = forward(&self.params, env.graph(), env.observe().view())?;
        greedy_action(q.as_slice().expect("contiguous"), &env.allowed_mask())
    }

    /// Run one greedy episode, calling `visit` after every step.
    pub fn rollout<F>(&self, graph: Arc<Graph>, seed: u64, mut visit: F) -> Result<EpisodeSummary>
    where
        F: FnMut(&EnvState, usize, &StepOutcome),
    {
        let mut env = EnvState::reset(graph, self.env_config, seed)?;
        let start = Instant::now();
        while !env.is_done() {
            let v = self.act(&env)?;
            let outcome = env.step(v)?;
            visit(&env, v, &outcome);
        }
        let action_seconds = start.elapsed().as_secs_f64();
        let (best_membership, best_cut) = env.episode_result();
        Ok(EpisodeSummary {
            initial_cut: env.initial_cut(),
            best_cut,
            best_membership,
            steps: env.step_count(),
            action_seconds,
        })
    }

    pub fn run_episode(&self, graph: Arc<Graph>, seed: u64) -> Result<EpisodeSummary> {
        self.rollout(graph, seed, |_, _, _| {})
    }

    /// Single episode as a solver result, for use with `multi_restart`.
    pub fn solve(&self, graph: &Arc<Graph>, seed: u64) -> Result<SolveResult> {
        let ep = self.run_episode(Arc::clone(graph), seed)?;
        Ok(SolveResult {
            membership: ep.best_membership,
            cut: ep.best_cut,
            steps: ep.steps,
            restart: 0,
        })
    }
}
