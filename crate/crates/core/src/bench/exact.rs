//! Exact Max-Cut solvers for small or sparse instances.

use crate::baselines::mca_best;
use crate::error::{Error, Result};
use crate::graph::{compute_gains, cut_value, Graph, Membership};

/// Largest graph accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_LIMIT: usize = 26;
/// Largest graph accepted by [`naive_opt`].
pub const NAIVE_LIMIT: usize = 20;
/// Largest intermediate factor scope accepted by [`elimination_opt`].
pub const ELIMINATION_WIDTH_LIMIT: usize = 22;

/// Exhaustive search over the `2^(|V|-1)` memberships that leave vertex 0
/// out of `S`, visited in Gray-code order so each step is one flip.
pub fn brute_force_opt(g: &Graph) -> Result<(Membership, f64)> {
    let n = g.num_vertices();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::GraphTooLarge {
            method: "brute force",
            num_vertices: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut side = vec![false; n];
    let mut gains = compute_gains(g, &Membership::empty(n))?.into_inner();
    let mut cut = 0.0;
    let mut best = (0.0, 0u64);
    for i in 1u64..(1u64 << (n - 1)) {
        let v = i.trailing_zeros() as usize + 1;
        cut += gains[v];
        gains[v] = -gains[v];
        for &(u, w) in g.neighbors(v) {
            gains[u] += if side[u] == side[v] { -2.0 * w } else { 2.0 * w };
        }
        side[v] = !side[v];
        if cut > best.0 {
            best = (cut, i ^ (i >> 1));
        }
    }
    let s = Membership::from_bits((0..n).map(|v| v > 0 && best.1 >> (v - 1) & 1 == 1).collect());
    let value = cut_value(g, &s)?;
    Ok((s, value))
}

/// Evaluates every one of the `2^|V|` memberships from scratch.
pub fn naive_opt(g: &Graph) -> Result<(Membership, f64)> {
    let n = g.num_vertices();
    if n > NAIVE_LIMIT {
        return Err(Error::GraphTooLarge {
            method: "naive enumeration",
            num_vertices: n,
            limit: NAIVE_LIMIT,
        });
    }
    let mut best = (Membership::empty(n), 0.0);
    for mask in 0u64..(1u64 << n) {
        let s = Membership::from_bits((0..n).map(|v| mask >> v & 1 == 1).collect());
        let c = cut_value(g, &s)?;
        if c > best.1 {
            best = (s, c);
        }
    }
    Ok(best)
}

struct Factor {
    /// Sorted variable indices; bit `i` of a table index is `vars[i]`.
    vars: Vec<usize>,
    table: Vec<f64>,
}

struct Eliminated {
    var: usize,
    scope: Vec<usize>,
    /// Maximizing value of `var` for every assignment of `scope`.
    argmax: Vec<bool>,
}

fn table_index(vars: &[usize], assignment: &[bool]) -> usize {
    vars.iter()
        .enumerate()
        .fold(0, |acc, (i, &v)| acc | (assignment[v] as usize) << i)
}

/// Elimination order by minimum fill-in, lowest index on ties.
fn min_fill_order(g: &Graph) -> Vec<usize> {
    use std::collections::BTreeSet;
    let n = g.num_vertices();
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| g.neighbors(v).iter().map(|&(u, _)| u).collect())
        .collect();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let fill = |v: usize| {
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            let mut missing = 0;
            for (i, &a) in nb.iter().enumerate() {
                missing += nb[i + 1..].iter().filter(|&&b| !adj[a].contains(&b)).count();
            }
            (missing, nb.len())
        };
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (fill(v), v))
            .expect("a live vertex remains");
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &nb {
            adj[a].remove(&v);
            for &b in &nb {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[v].clear();
        alive[v] = false;
        order.push(v);
    }
    order
}

/// Exact optimum by max-sum variable elimination over the edge factors.
///
/// Exponential only in the induced width of the elimination order, so it
/// handles sparse graphs well beyond the reach of enumeration.
pub fn elimination_opt(g: &Graph) -> Result<(Membership, f64)> {
    let n = g.num_vertices();
    let mut factors: Vec<Factor> = g
        .edges()
        .map(|(u, v, w)| Factor {
            vars: vec![u, v],
            table: vec![0.0, w, w, 0.0],
        })
        .collect();
    let mut trace = Vec::with_capacity(n);
    let mut constant = 0.0;

    for var in min_fill_order(g) {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        let mut scope: Vec<usize> = touching
            .iter()
            .flat_map(|f| f.vars.iter().copied())
            .filter(|&v| v != var)
            .collect();
        scope.sort_unstable();
        scope.dedup();
        if scope.len() > ELIMINATION_WIDTH_LIMIT {
            return Err(Error::GraphTooLarge {
                method: "variable elimination (induced width)",
                num_vertices: scope.len(),
                limit: ELIMINATION_WIDTH_LIMIT,
            });
        }

        let size = 1usize << scope.len();
        let mut table = vec![0.0; size];
        let mut argmax = vec![false; size];
        let mut assignment = vec![false; n];
        for idx in 0..size {
            for (i, &v) in scope.iter().enumerate() {
                assignment[v] = idx >> i & 1 == 1;
            }
            let mut value = [0.0; 2];
            for (x, slot) in value.iter_mut().enumerate() {
                assignment[var] = x == 1;
                *slot = touching
                    .iter()
                    .map(|f| f.table[table_index(&f.vars, &assignment)])
                    .sum();
            }
            let pick = value[1] > value[0];
            table[idx] = value[pick as usize];
            argmax[idx] = pick;
        }
        if scope.is_empty() {
            constant += table[0];
        } else {
            factors.push(Factor {
                vars: scope.clone(),
                table,
            });
        }
        trace.push(Eliminated { var, scope, argmax });
    }
    debug_assert!(factors.is_empty());

    let mut assignment = vec![false; n];
    for step in trace.iter().rev() {
        assignment[step.var] = step.argmax[table_index(&step.scope, &assignment)];
    }
    let s = Membership::from_bits(assignment);
    let value = cut_value(g, &s)?;
    if (value - constant).abs() > 1e-9 * (1.0 + constant.abs()) {
        return Err(Error::Numeric(format!(
            "elimination traceback gave cut {value}, expected {constant}"
        )));
    }
    Ok((s, value))
}

/// Where an optimum or reference value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Exact,
    BestKnown,
}

/// Best available reference cut: exact when an exact method is tractable,
/// otherwise the best of the MCA heuristics.
pub fn reference_cut(g: &Graph, seed: u64) -> Result<(Membership, f64, ReferenceKind)> {
    let exact = if g.num_vertices() <= BRUTE_FORCE_LIMIT {
        Some(brute_force_opt(g)?)
    } else {
        match elimination_opt(g) {
            Ok(r) => Some(r),
            Err(Error::GraphTooLarge { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    match exact {
        Some((s, c)) => Ok((s, c, ReferenceKind::Exact)),
        None => {
            let r = mca_best(g, 50, seed)?;
            Ok((r.membership, r.cut, ReferenceKind::BestKnown))
        }
    }
}
