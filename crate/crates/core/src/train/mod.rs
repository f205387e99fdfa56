//! Deep Q-learning with experience replay and a target network.

mod checkpoint;
mod config;
mod optim;
mod replay;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{epsilon_at, OptimizerKind, TrainConfig};
pub use optim::Optimizer;
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{read_curve_csv, select_action, train, write_curve_csv, write_timing_csv, CurvePoint, Trainer};

use crate::error::Result;
use crate::qnet::{forward, forward_batch, Batch, QNetParams};

/// Bootstrapped Q-learning target for one transition.
///
/// Terminal transitions return the reward alone. Otherwise the best
/// allowed next-state value under `target` is discounted by `gamma`,
/// after clamping at zero when `clip_nonneg` is set.
pub fn td_target(target: &QNetParams, tr: &Transition, gamma: f64, clip_nonneg: bool) -> Result<f64> {
    if tr.done {
        return Ok(tr.reward);
    }
    let q = forward(target, &tr.graph, tr.next_obs.view())?;
    Ok(tr.reward + gamma * best_allowed(q.iter().copied(), &tr.next_allowed, clip_nonneg))
}

/// [`td_target`] for many transitions, with one batched target-network pass.
pub fn td_targets(target: &QNetParams, batch: &[&Transition], gamma: f64, clip_nonneg: bool) -> Result<Vec<f64>> {
    let live: Vec<&Transition> = batch.iter().copied().filter(|t| !t.done).collect();
    let mut bootstrap = Vec::with_capacity(live.len());
    if !live.is_empty() {
        let items: Vec<_> = live.iter().map(|t| (&*t.graph, t.next_obs.view())).collect();
        let b = Batch::new(&items)?;
        let q = forward_batch(target, &b)?.q;
        for (i, t) in live.iter().enumerate() {
            bootstrap.push(best_allowed(b.segment(&q, i).iter().copied(), &t.next_allowed, clip_nonneg));
        }
    }
    let mut bootstrap = bootstrap.into_iter();
    Ok(batch
        .iter()
        .map(|t| {
            if t.done {
                t.reward
            } else {
                t.reward + gamma * bootstrap.next().expect("one value per live transition")
            }
        })
        .collect())
}

fn best_allowed(q: impl Iterator<Item = f64>, allowed: &[bool], clip_nonneg: bool) -> f64 {
    let best = q
        .zip(allowed)
        .filter(|(_, &ok)| ok)
        .map(|(v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let best = if best == f64::NEG_INFINITY { 0.0 } else { best };
    if clip_nonneg {
        best.max(0.0)
    } else {
        best
    }
}

pub fn huber_loss(error: f64, delta: f64) -> f64 {
    let a = error.abs();
    if a <= delta {
        0.5 * error * error
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber_loss`] with respect to `error`.
pub fn huber_grad(error: f64, delta: f64) -> f64 {
    error.clamp(-delta, delta)
}
