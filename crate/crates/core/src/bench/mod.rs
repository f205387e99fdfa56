//! Oracles, evaluation protocol and behavioural analytics.

pub mod behavior;
pub mod eval;
pub mod exact;
pub mod registry;

pub use behavior::{
    behavior_series, behavior_trace, moving_average, trace_policy, BehaviorStep, BehaviorTrace, MOVING_AVERAGE_WINDOW,
    SERIES_COLUMNS,
};
pub use eval::{
    aggregate, evaluate_agent, evaluate_solver, write_aggregate_csv, EvalReport, GraphEval, Reference, SummaryRow,
};
pub use exact::{brute_force_opt, elimination_opt, naive_opt, reference_cut, ReferenceKind};
pub use registry::{Registry, RegistryEntry};

use crate::error::{Error, Result};

/// `cut / reference`; the reference must be positive.
pub fn approximation_ratio(cut: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "approximation ratio needs a positive reference, got {reference}"
        )));
    }
    Ok(cut / reference)
}

/// Quantile by linear interpolation between closest ranks (inclusive).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Episodes per graph used for a GSet instance: 50 for G1 to G10, one for
/// G22 to G32.
pub fn gset_episodes(name: &str) -> Option<usize> {
    let id: usize = name.strip_prefix('G').or_else(|| name.strip_prefix('g'))?.parse().ok()?;
    match id {
        1..=10 => Some(50),
        22..=32 => Some(1),
        _ => None,
    }
}
