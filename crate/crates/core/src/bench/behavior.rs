//! Per-step behavioural flags of an episode and their moving averages.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::env::{EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::graph::{Graph, Membership};

/// Window of the trailing moving average.
pub const MOVING_AVERAGE_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorStep {
    /// 1-based step index.
    pub step: usize,
    pub action: usize,
    /// The vertex had already been flipped earlier in the episode.
    pub repeat: bool,
    /// The action had the largest gain among allowed vertices.
    pub greedy: bool,
    /// The action reduced the cut.
    pub negative: bool,
    /// The state after the action is a local optimum.
    pub locally_optimal: bool,
    /// The state after the action was already visited in the episode.
    pub revisited: bool,
    /// The best cut of the whole episode has been reached by this step.
    pub mc_found: bool,
    pub reward: f64,
    pub cut: f64,
    pub best_cut: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTrace {
    pub initial_membership: Membership,
    pub initial_cut: f64,
    pub best_cut: f64,
    pub steps: Vec<BehaviorStep>,
}

/// Run one episode under `policy` and record the per-step flags.
pub fn trace_policy<P>(graph: Arc<Graph>, config: EnvConfig, seed: u64, mut policy: P) -> Result<BehaviorTrace>
where
    P: FnMut(&EnvState) -> Result<usize>,
{
    let mut env = EnvState::reset(graph, config, seed)?;
    let initial_membership = env.membership().clone();
    let initial_cut = env.current_cut();
    let mut steps = Vec::with_capacity(env.horizon());
    while !env.is_done() {
        let v = policy(&env)?;
        if v >= env.num_vertices() {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                num_vertices: env.num_vertices(),
            });
        }
        let gain = env.gains()[v];
        let best_gain = (0..env.num_vertices())
            .filter(|&u| env.is_allowed(u))
            .map(|u| env.gains()[u])
            .fold(f64::NEG_INFINITY, f64::max);
        let repeat = env.was_flipped(v);
        let outcome = env.step(v)?;
        steps.push(BehaviorStep {
            step: env.step_count(),
            action: v,
            repeat,
            greedy: gain >= best_gain,
            negative: gain < 0.0,
            locally_optimal: outcome.locally_optimal,
            revisited: outcome.revisited,
            mc_found: false,
            reward: outcome.reward,
            cut: env.current_cut(),
            best_cut: env.best_cut(),
        });
    }
    let best_cut = env.best_cut();
    for s in &mut steps {
        s.mc_found = s.best_cut >= best_cut;
    }
    Ok(BehaviorTrace {
        initial_membership,
        initial_cut,
        best_cut,
        steps,
    })
}

/// Greedy rollout of a reversible agent.
pub fn behavior_trace(agent: &Agent, graph: Arc<Graph>, seed: u64) -> Result<BehaviorTrace> {
    if !agent.env_config.reversible {
        return Err(Error::InvalidArgument(
            "behaviour traces need a reversible agent".into(),
        ));
    }
    trace_policy(graph, agent.env_config, seed, |env| agent.act(env))
}

/// Trailing mean over at most `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Column names of [`behavior_series`].
pub const SERIES_COLUMNS: [&str; 6] = ["repeat", "non_greedy", "negative", "locally_optimal", "revisited", "mc_found"];

/// Frequency of each flag per step across traces, smoothed by
/// [`moving_average`]. Returns one row per step with the columns of
/// [`SERIES_COLUMNS`]. All traces must have the same length.
pub fn behavior_series(traces: &[BehaviorTrace], window: usize) -> Result<Vec<[f64; 6]>> {
    let Some(first) = traces.first() else {
        return Err(Error::InvalidArgument("no traces".into()));
    };
    let len = first.steps.len();
    if let Some(t) = traces.iter().find(|t| t.steps.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: t.steps.len(),
        });
    }
    let flags = |s: &BehaviorStep| [s.repeat, !s.greedy, s.negative, s.locally_optimal, s.revisited, s.mc_found];
    let count = traces.len() as f64;
    let mut columns = vec![vec![0.0; len]; 6];
    for t in traces {
        for (i, s) in t.steps.iter().enumerate() {
            for (c, f) in flags(s).into_iter().enumerate() {
                if f {
                    columns[c][i] += 1.0 / count;
                }
            }
        }
    }
    let smooth: Vec<Vec<f64>> = columns.iter().map(|c| moving_average(c, window)).collect();
    Ok((0..len).map(|i| std::array::from_fn(|c| smooth[c][i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{compute_gains, GraphFamily};
    use crate::qnet::{Dims, QNetParams};

    fn graph(n: usize, seed: u64) -> Arc<Graph> {
        Arc::new(GraphFamily::Er.sample(n, seed).unwrap())
    }

    fn greedy(env: &EnvState) -> Result<usize> {
        let g = env.gains();
        Ok((0..env.num_vertices())
            .filter(|&v| env.is_allowed(v))
            .fold(None, |best: Option<usize>, v| match best {
                Some(b) if g[b] >= g[v] => Some(b),
                _ => Some(v),
            })
            .unwrap())
    }

    #[test]
    fn moving_average_by_hand() {
        assert_eq!(moving_average(&[1.0, 0.0, 1.0, 1.0], 2), vec![1.0, 0.5, 0.5, 1.0]);
        assert_eq!(moving_average(&[2.0, 4.0], 10), vec![2.0, 3.0]);
        assert!(moving_average(&[], 10).is_empty());
    }

    #[test]
    fn greedy_policy_has_no_negative_moves_before_a_local_optimum() {
        for seed in 0..20 {
            let t = trace_policy(graph(20, seed), EnvConfig::eco(), seed, greedy).unwrap();
            let first_opt = t.steps.iter().position(|s| s.locally_optimal).unwrap();
            assert!(t.steps[..=first_opt].iter().all(|s| !s.negative && s.greedy));
        }
    }

    #[test]
    fn flags_match_an_independent_replay() {
        let p = QNetParams::init(Dims::default(), 3).unwrap();
        let agent = Agent::new(p, EnvConfig::eco()).unwrap();
        for seed in 0..10 {
            let g = graph(15, 50 + seed);
            let t = behavior_trace(&agent, Arc::clone(&g), seed).unwrap();
            assert_eq!(t.steps.len(), 30);
            let mut s = t.initial_membership.clone();
            let mut seen = vec![s.clone()];
            let mut flipped = vec![false; 15];
            for st in &t.steps {
                assert_eq!(st.repeat, flipped[st.action]);
                flipped[st.action] = true;
                s.toggle(st.action);
                let max_gain = compute_gains(&g, &s).unwrap().max();
                assert_eq!(st.locally_optimal, max_gain <= 0.0);
                assert_eq!(st.revisited, seen.contains(&s));
                seen.push(s.clone());
            }
            let mc: Vec<bool> = t.steps.iter().map(|s| s.mc_found).collect();
            assert!(mc.windows(2).all(|w| w[0] <= w[1]));
            assert!(*mc.last().unwrap());
        }
    }

    #[test]
    fn irreversible_agents_are_rejected_and_never_repeat() {
        let p = QNetParams::init(Dims::default(), 3).unwrap();
        let agent = Agent::new(p, EnvConfig::s2v()).unwrap();
        assert!(behavior_trace(&agent, graph(10, 1), 0).is_err());
        let t = trace_policy(graph(10, 1), EnvConfig::s2v(), 0, |env| agent.act(env)).unwrap();
        assert!(t.steps.iter().all(|s| !s.repeat));
    }

    #[test]
    fn series_shape_and_monotone_mc_found() {
        let p = QNetParams::init(Dims::default(), 3).unwrap();
        let agent = Agent::new(p, EnvConfig::eco()).unwrap();
        let traces: Vec<_> = (0..8)
            .map(|i| behavior_trace(&agent, graph(12, i), i).unwrap())
            .collect();
        let series = behavior_series(&traces, MOVING_AVERAGE_WINDOW).unwrap();
        assert_eq!(series.len(), 24);
        assert!(series.windows(2).all(|w| w[0][5] <= w[1][5] + 1e-12));
        assert!(series.iter().flatten().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        assert!(behavior_series(&[], 10).is_err());
        let short = trace_policy(graph(5, 0), EnvConfig::eco(), 0, greedy).unwrap();
        assert!(behavior_series(&[traces[0].clone(), short], 10).is_err());
    }
}
