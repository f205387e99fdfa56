//! MaxCutApprox greedy baselines and the multi-restart wrapper.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{apply_flip, compute_gains, cut_value, Graph, Membership};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub membership: Membership,
    pub cut: f64,
    pub steps: usize,
    /// Which restart produced this result (0 for single runs).
    pub restart: usize,
}

/// Repeatedly flip the allowed vertex with the largest strictly positive
/// gain, lowest index on ties.
fn greedy_ascent(g: &Graph, mut s: Membership, add_only: bool) -> Result<SolveResult> {
    let mut gains = compute_gains(g, &s)?;
    let mut cut = cut_value(g, &s)?;
    let mut steps = 0;
    loop {
        let mut best: Option<usize> = None;
        for v in 0..g.num_vertices() {
            if add_only && s.contains(v) {
                continue;
            }
            if gains[v] > 0.0 && best.is_none_or(|b| gains[v] > gains[b]) {
                best = Some(v);
            }
        }
        let Some(v) = best else { break };
        cut += apply_flip(g, &mut s, &mut gains, v)?;
        steps += 1;
    }
    Ok(SolveResult {
        membership: s,
        cut,
        steps,
        restart: 0,
    })
}

/// MCA-irrev: start from the empty set and only add vertices.
pub fn mca_irrev(g: &Graph) -> Result<SolveResult> {
    greedy_ascent(g, Membership::empty(g.num_vertices()), true)
}

/// MCA-rev: start from a uniformly random set, flip in either direction.
pub fn mca_rev(g: &Graph, seed: u64) -> Result<SolveResult> {
    let mut rng = seed::rng(seed);
    let s = Membership::from_bits((0..g.num_vertices()).map(|_| rng.gen_bool(0.5)).collect());
    mca_rev_from(g, s)
}

/// MCA-rev from a given initial membership.
pub fn mca_rev_from(g: &Graph, initial: Membership) -> Result<SolveResult> {
    greedy_ascent(g, initial, false)
}

/// Seed of restart `i` under master seed `seed`.
pub fn restart_seed(seed: u64, i: usize) -> u64 {
    seed::derive_indexed(seed, i as u64)
}

/// Run `episodes` independently seeded restarts and return all results.
pub fn run_restarts<F>(solver: F, g: &Graph, episodes: usize, seed: u64) -> Result<Vec<SolveResult>>
where
    F: Fn(&Graph, u64) -> Result<SolveResult>,
{
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    (0..episodes)
        .map(|i| {
            let mut r = solver(g, restart_seed(seed, i))?;
            r.restart = i;
            Ok(r)
        })
        .collect()
}

/// Best of `episodes` restarts by cut value; ties go to the earliest restart.
pub fn multi_restart<F>(solver: F, g: &Graph, episodes: usize, seed: u64) -> Result<SolveResult>
where
    F: Fn(&Graph, u64) -> Result<SolveResult>,
{
    let runs = run_restarts(solver, g, episodes, seed)?;
    Ok(best_of(runs).expect("at least one restart"))
}

pub fn best_of(results: impl IntoIterator<Item = SolveResult>) -> Option<SolveResult> {
    results
        .into_iter()
        .fold(None, |best: Option<SolveResult>, r| match best {
            Some(b) if b.cut >= r.cut => Some(b),
            _ => Some(r),
        })
}

/// The combined MCA reference: best of MCA-irrev and `restarts` MCA-rev runs.
pub fn mca_best(g: &Graph, restarts: usize, seed: u64) -> Result<SolveResult> {
    let rev = multi_restart(mca_rev, g, restarts, seed)?;
    let irrev = mca_irrev(g)?;
    Ok(if irrev.cut > rev.cut { irrev } else { rev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn is_local_optimum(g: &Graph, s: &Membership) -> bool {
        let base = cut_value(g, s).unwrap();
        (0..g.num_vertices()).all(|v| {
            let mut t = s.clone();
            t.toggle(v);
            cut_value(g, &t).unwrap() <= base
        })
    }

    #[test]
    fn irrev_edge_cases() {
        let r = mca_irrev(&Graph::empty(5).unwrap()).unwrap();
        assert_eq!((r.cut, r.membership.count(), r.steps), (0.0, 0, 0));

        let r = mca_irrev(&Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap()).unwrap();
        assert_eq!(r.cut, 1.0);
        assert_eq!(r.membership.count(), 1);
    }

    #[test]
    fn irrev_triangle() {
        // Enumerating all 8 subsets: singletons and pairs cut 2, the others 0.
        let r = mca_irrev(&triangle()).unwrap();
        assert_eq!(r.cut, 2.0);
        assert_eq!(r.membership.count(), 1);
        assert_eq!(r.membership, Membership::from_members(3, &[0]).unwrap());
    }

    #[test]
    fn irrev_never_removes_and_is_bounded() {
        for s in 0..20 {
            let g = GraphFamily::Er.sample(30, s).unwrap();
            let r = mca_irrev(&g).unwrap();
            assert!(r.steps <= 30);
            assert_eq!(r.steps, r.membership.count());
            assert_eq!(r.cut, cut_value(&g, &r.membership).unwrap());
            assert!(r.cut >= 0.0);
        }
    }

    #[test]
    fn rev_keeps_local_optimum() {
        let g = triangle();
        let s = Membership::from_members(3, &[1]).unwrap();
        let r = mca_rev_from(&g, s.clone()).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.membership, s);
    }

    #[test]
    fn rev_reaches_local_optimum() {
        for s in 0..30 {
            let g = GraphFamily::Er.sample(12, s).unwrap();
            let mut rng = seed::rng(s + 1000);
            let init = Membership::from_bits((0..12).map(|_| rng.gen_bool(0.5)).collect());
            let before = cut_value(&g, &init).unwrap();
            let r = mca_rev_from(&g, init).unwrap();
            assert!(r.cut >= before);
            assert_eq!(r.cut, cut_value(&g, &r.membership).unwrap());
            assert!(is_local_optimum(&g, &r.membership));
            assert!(compute_gains(&g, &r.membership).unwrap().max() <= 0.0);
        }
    }

    #[test]
    fn rev_is_seeded() {
        let g = GraphFamily::Ba.sample(40, 3).unwrap();
        assert_eq!(mca_rev(&g, 5).unwrap(), mca_rev(&g, 5).unwrap());
    }

    #[test]
    fn restarts() {
        let g = GraphFamily::Er.sample(40, 9).unwrap();
        let one = multi_restart(mca_rev, &g, 1, 77).unwrap();
        assert_eq!(one, mca_rev(&g, restart_seed(77, 0)).unwrap());

        let all = run_restarts(mca_rev, &g, 50, 77).unwrap();
        let best = multi_restart(mca_rev, &g, 50, 77).unwrap();
        let max = all.iter().map(|r| r.cut).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.cut, max);
        let first = all.iter().position(|r| r.cut == max).unwrap();
        assert_eq!(best.restart, first);
        assert!(best.cut >= one.cut);
        assert!(run_restarts(mca_rev, &g, 0, 1).is_err());
    }
}
