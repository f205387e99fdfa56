//! Random graph families.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::seed;

/// Erdős–Rényi G(n, p): every unordered pair is joined independently with
/// probability `p`. Edges carry weight +1.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("ER graph needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("edge probability {p} not in [0, 1]")));
    }
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p) {
                edges.push((u, v, 1.0));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Barabási–Albert preferential attachment with `attach` edges per new vertex.
///
/// The first `attach` vertices start isolated; vertex `attach` joins all of
/// them, and every later vertex picks `attach` distinct targets with
/// probability proportional to degree. The result is connected and has
/// exactly `attach * (n - attach)` edges.
pub fn generate_ba(n: usize, attach: usize, seed: u64) -> Result<Graph> {
    if attach == 0 {
        return Err(Error::InvalidArgument("BA attach must be >= 1".into()));
    }
    if n <= attach {
        return Err(Error::InvalidArgument(format!(
            "BA graph needs n > attach, got n={n}, attach={attach}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut edges = Vec::with_capacity(attach * (n - attach));
    // Each vertex appears once per incident edge.
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * attach * n);
    let mut targets: Vec<usize> = (0..attach).collect();
    for source in attach..n {
        for &t in &targets {
            edges.push((t, source, 1.0));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, attach));

        let mut next = Vec::with_capacity(attach);
        while next.len() < attach {
            let pick = repeated[rng.gen_range(0..repeated.len())];
            if !next.contains(&pick) {
                next.push(pick);
            }
        }
        next.sort_unstable();
        targets = next;
    }
    Graph::from_edges(n, &edges)
}

/// Replace every edge weight by an independent fair ±1.
pub fn assign_signed_weights(g: &Graph, seed: u64) -> Graph {
    let mut rng = seed::rng(seed);
    let edges: Vec<_> = g
        .edges()
        .map(|(u, v, _)| (u, v, if rng.gen_bool(0.5) { 1.0 } else { -1.0 }))
        .collect();
    Graph::from_edges(g.num_vertices(), &edges).expect("topology of a valid graph")
}

/// A distribution over signed random graphs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    /// Erdős–Rényi with edge probability 0.15.
    Er,
    /// Barabási–Albert with two edges per new vertex (mean degree ≈ 4).
    Ba,
}

impl GraphFamily {
    pub const ER_PROBABILITY: f64 = 0.15;
    pub const BA_ATTACH: usize = 2;

    /// Sample a ±1-weighted instance with `n` vertices.
    pub fn sample(self, n: usize, seed: u64) -> Result<Graph> {
        let topo = match self {
            GraphFamily::Er => generate_er(n, Self::ER_PROBABILITY, seed::derive(seed, "topology"))?,
            GraphFamily::Ba => generate_ba(n, Self::BA_ATTACH, seed::derive(seed, "topology"))?,
        };
        Ok(assign_signed_weights(&topo, seed::derive(seed, "weights")))
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphFamily::Er => "er",
            GraphFamily::Ba => "ba",
        })
    }
}

impl FromStr for GraphFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(GraphFamily::Er),
            "ba" => Ok(GraphFamily::Ba),
            other => Err(Error::Config(format!("unknown graph family {other:?} (expected er or ba)"))),
        }
    }
}
