//! Multi-episode evaluation and summary tables.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, quantile};
use crate::agent::Agent;
use crate::baselines::{best_of, restart_seed, SolveResult};
use crate::env::NUM_FEATURES;
use crate::error::{Error, Result};
use crate::graph::{Graph, Membership};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEval {
    /// Content hash of the graph.
    pub graph_id: String,
    pub episode_cuts: Vec<f64>,
    pub best_cut: f64,
    pub best_membership: Membership,
    pub best_restart: usize,
    pub reference: Option<f64>,
    /// The best cut beat a best-known (not proven optimal) reference.
    pub reference_exceeded: bool,
    pub best_ratio: Option<f64>,
    pub mean_episode_ratio: Option<f64>,
    pub actions: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub graph_set: String,
    pub episodes_per_graph: usize,
    pub seed: u64,
    pub graphs: Vec<GraphEval>,
    pub wall_time_s: f64,
}

/// One row of the aggregate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub graph_set: String,
    pub num_graphs: usize,
    pub episodes_per_graph: usize,
    pub mean_ratio: f64,
    pub q1_ratio: f64,
    pub q3_ratio: f64,
    pub mean_episode_ratio: f64,
    pub mean_best_cut: f64,
    pub total_actions: usize,
    pub seconds_per_action: f64,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    graph_index: usize,
    graph_id: &'a str,
    episode: usize,
    cut: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct GraphRow<'a> {
    graph_index: usize,
    graph_id: &'a str,
    best_cut: f64,
    best_restart: usize,
    reference: Option<f64>,
    reference_exceeded: bool,
    best_ratio: Option<f64>,
    mean_episode_ratio: Option<f64>,
    membership: String,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

impl EvalReport {
    pub fn best_ratios(&self) -> Vec<f64> {
        self.graphs.iter().filter_map(|g| g.best_ratio).collect()
    }

    pub fn episode_ratios(&self) -> Vec<f64> {
        self.graphs.iter().filter_map(|g| g.mean_episode_ratio).collect()
    }

    pub fn mean_best_ratio(&self) -> Option<f64> {
        mean(&self.best_ratios())
    }

    pub fn mean_episode_ratio(&self) -> Option<f64> {
        mean(&self.episode_ratios())
    }

    pub fn summary(&self) -> SummaryRow {
        let best = self.best_ratios();
        let nan = f64::NAN;
        let actions: usize = self.graphs.iter().map(|g| g.actions).sum();
        let seconds: f64 = self.graphs.iter().map(|g| g.seconds).sum();
        let cuts: Vec<f64> = self.graphs.iter().map(|g| g.best_cut).collect();
        SummaryRow {
            method: self.method.clone(),
            graph_set: self.graph_set.clone(),
            num_graphs: self.graphs.len(),
            episodes_per_graph: self.episodes_per_graph,
            mean_ratio: mean(&best).unwrap_or(nan),
            q1_ratio: quantile(&best, 0.25).unwrap_or(nan),
            q3_ratio: quantile(&best, 0.75).unwrap_or(nan),
            mean_episode_ratio: self.mean_episode_ratio().unwrap_or(nan),
            mean_best_cut: mean(&cuts).unwrap_or(nan),
            total_actions: actions,
            seconds_per_action: if actions > 0 { seconds / actions as f64 } else { nan },
            wall_time_s: self.wall_time_s,
        }
    }

    /// One row per episode.
    pub fn write_episodes_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for (i, g) in self.graphs.iter().enumerate() {
            for (e, &cut) in g.episode_cuts.iter().enumerate() {
                w.serialize(EpisodeRow {
                    graph_index: i,
                    graph_id: &g.graph_id,
                    episode: e,
                    cut,
                    ratio: g.reference.filter(|&r| r > 0.0).map(|r| cut / r),
                })
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One row per graph.
    pub fn write_graphs_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for (i, g) in self.graphs.iter().enumerate() {
            w.serialize(GraphRow {
                graph_index: i,
                graph_id: &g.graph_id,
                best_cut: g.best_cut,
                best_restart: g.best_restart,
                reference: g.reference,
                reference_exceeded: g.reference_exceeded,
                best_ratio: g.best_ratio,
                mean_episode_ratio: g.mean_episode_ratio,
                membership: g.best_membership.to_bitstring(),
            })
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reference values as `(cut, is_exact)`.
pub type Reference = Option<(f64, bool)>;

/// Run `episodes` seeded restarts of `solver` on every graph.
///
/// Restart `e` on graph `i` uses seed `restart_seed(derive_indexed(seed, i), e)`,
/// so results do not depend on scheduling.
pub fn evaluate_solver<F>(
    method: &str,
    graph_set: &str,
    solver: F,
    graphs: &[Arc<Graph>],
    references: &[Reference],
    episodes: usize,
    seed: u64,
) -> Result<EvalReport>
where
    F: Fn(&Arc<Graph>, u64) -> Result<SolveResult> + Sync,
{
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    if references.len() != graphs.len() {
        return Err(Error::LengthMismatch {
            expected: graphs.len(),
            actual: references.len(),
        });
    }
    let started = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..graphs.len())
        .flat_map(|i| (0..episodes).map(move |e| (i, e)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, e)| {
            let t = Instant::now();
            let mut r = solver(&graphs[i], restart_seed(seed::derive_indexed(seed, i as u64), e))?;
            r.restart = e;
            Ok((r, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut evals = Vec::with_capacity(graphs.len());
    for (i, chunk) in runs.chunks(episodes).enumerate() {
        let cuts: Vec<f64> = chunk.iter().map(|(r, _)| r.cut).collect();
        let best = best_of(chunk.iter().map(|(r, _)| r.clone())).expect("episodes >= 1");
        let reference = references[i];
        let positive = reference.filter(|&(r, _)| r > 0.0).map(|(r, _)| r);
        let mean_cut = mean(&cuts).expect("episodes >= 1");
        evals.push(GraphEval {
            graph_id: graphs[i].content_hash(),
            best_ratio: positive.map(|r| best.cut / r),
            mean_episode_ratio: positive.map(|r| mean_cut / r),
            reference_exceeded: matches!(reference, Some((r, false)) if best.cut > r),
            reference: reference.map(|(r, _)| r),
            episode_cuts: cuts,
            best_cut: best.cut,
            best_membership: best.membership,
            best_restart: best.restart,
            actions: chunk.iter().map(|(r, _)| r.steps).sum(),
            seconds: chunk.iter().map(|(_, s)| s).sum(),
        });
    }
    Ok(EvalReport {
        method: method.into(),
        graph_set: graph_set.into(),
        episodes_per_graph: episodes,
        seed,
        graphs: evals,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Greedy (ε = 0) evaluation of a trained agent.
pub fn evaluate_agent(
    agent: &Agent,
    graph_set: &str,
    graphs: &[Arc<Graph>],
    references: &[Reference],
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if agent.params.dims.m != NUM_FEATURES {
        return Err(Error::ArchitectureMismatch {
            expected: (NUM_FEATURES, agent.params.dims.n, agent.params.dims.k),
            found: (agent.params.dims.m, agent.params.dims.n, agent.params.dims.k),
        });
    }
    let method = if agent.env_config.reversible { "eco-dqn" } else { "irreversible-dqn" };
    evaluate_solver(method, graph_set, |g, s| agent.solve(g, s), graphs, references, episodes, seed)
}

/// Summary rows, one per report.
pub fn aggregate(reports: &[EvalReport]) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    Ok(reports.iter().map(EvalReport::summary).collect())
}

pub fn write_aggregate_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
