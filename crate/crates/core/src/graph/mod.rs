//! Weighted undirected graphs, solution membership and cut arithmetic.

mod generate;
mod io;

use std::collections::HashSet;
use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use generate::{assign_signed_weights, generate_ba, generate_er, GraphFamily};
pub use io::{deserialize_graph, parse_gset, serialize_graph};

/// Undirected graph with signed real edge weights.
///
/// Neighbour lists are kept sorted by neighbour index; every summation over a
/// neighbourhood therefore runs in ascending index order. A `Graph` never
/// changes after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Vec<Vec<(usize, f64)>>,
    num_edges: usize,
}

impl Graph {
    /// Build a graph from an undirected edge list.
    ///
    /// Rejects self-loops, duplicate edges (in either orientation), out of
    /// range endpoints and non-finite weights.
    pub fn from_edges(num_vertices: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        let mut seen = HashSet::with_capacity(edges.len());
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::VertexOutOfRange {
                    vertex: u.max(v),
                    num_vertices,
                });
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("edge {i}: self-loop on vertex {u}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("edge {i}: non-finite weight")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidArgument(format!("edge {i}: duplicate edge ({u}, {v})")));
            }
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(u, _)| u);
        }
        Ok(Graph {
            adjacency,
            num_edges: edges.len(),
        })
    }

    /// Disjoint union, with the vertices of `parts[i]` shifted by
    /// `offsets[i]`. Also returns the offsets, terminated by the total count.
    pub fn disjoint_union(parts: &[&Graph]) -> Result<(Graph, Vec<usize>)> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("disjoint union of no graphs".into()));
        }
        let mut offsets = Vec::with_capacity(parts.len() + 1);
        let mut adjacency = Vec::with_capacity(parts.iter().map(|g| g.num_vertices()).sum());
        let mut num_edges = 0;
        for g in parts {
            let base = adjacency.len();
            offsets.push(base);
            adjacency.extend(
                g.adjacency
                    .iter()
                    .map(|nbrs| nbrs.iter().map(|&(u, w)| (u + base, w)).collect::<Vec<_>>()),
            );
            num_edges += g.num_edges;
        }
        offsets.push(adjacency.len());
        Ok((Graph { adjacency, num_edges }, offsets))
    }

    /// Graph with `num_vertices` isolated vertices.
    pub fn empty(num_vertices: usize) -> Result<Self> {
        Self::from_edges(num_vertices, &[])
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Weight of edge `(u, v)`, if present.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(x, _)| x)
            .ok()
            .map(|i| list[i].1)
    }

    /// Edges as `(u, v, w)` with `u < v`, sorted lexicographically.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            list.iter()
                .filter(move |&&(v, _)| v > u)
                .map(move |&(v, w)| (u, v, w))
        })
    }

    /// Sum of absolute edge weights.
    pub fn total_abs_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w.abs()).sum()
    }

    /// Relabel vertices: vertex `v` becomes `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_vertices())?;
        let edges: Vec<_> = self.edges().map(|(u, v, w)| (perm[u], perm[v], w)).collect();
        Self::from_edges(self.num_vertices(), &edges)
    }

    /// Hex SHA-256 of the canonical text serialization.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(serialize_graph(self).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn check_membership(&self, s: &Membership) -> Result<()> {
        if s.len() != self.num_vertices() {
            return Err(Error::LengthMismatch {
                expected: self.num_vertices(),
                actual: s.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut hit = vec![false; n];
    if perm.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: perm.len(),
        });
    }
    for &p in perm {
        if p >= n || hit[p] {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        hit[p] = true;
    }
    Ok(())
}

/// Solution set `S` as a bit per vertex; bit `v` set iff `v ∈ S`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Membership(Vec<bool>);

impl Membership {
    pub fn empty(n: usize) -> Self {
        Membership(vec![false; n])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Membership(bits)
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &v in members {
            if v >= n {
                return Err(Error::VertexOutOfRange {
                    vertex: v,
                    num_vertices: n,
                });
            }
            s.0[v] = true;
        }
        Ok(s)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn contains(&self, v: usize) -> bool {
        self.0[v]
    }

    #[inline]
    pub fn toggle(&mut self, v: usize) {
        self.0[v] = !self.0[v];
    }

    pub fn set(&mut self, v: usize, value: bool) {
        self.0[v] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Number of vertices in `S`.
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(v, _)| v)
    }

    pub fn hamming(&self, other: &Membership) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn complement(&self) -> Membership {
        Membership(self.0.iter().map(|b| !b).collect())
    }

    /// Membership under the relabeling `v -> perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Membership {
        let mut out = vec![false; self.len()];
        for (v, &b) in self.0.iter().enumerate() {
            out[perm[v]] = b;
        }
        Membership(out)
    }

    /// Compact `0`/`1` string, vertex 0 first.
    pub fn to_bitstring(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Data(format!("invalid membership character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Membership)
    }
}

/// Per-vertex change in cut value if that vertex were flipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainVector(Vec<f64>);

impl GainVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Largest gain, `-inf` for an empty vector.
    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for GainVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for GainVector {
    type Output = f64;
    fn index(&self, v: usize) -> &f64 {
        &self.0[v]
    }
}

/// Total weight of edges with exactly one endpoint in `s`.
pub fn cut_value(g: &Graph, s: &Membership) -> Result<f64> {
    g.check_membership(s)?;
    Ok(g.edges()
        .filter(|&(u, v, _)| s.contains(u) != s.contains(v))
        .map(|(_, _, w)| w)
        .sum())
}

/// Gain of every single-vertex flip from membership `s`.
pub fn compute_gains(g: &Graph, s: &Membership) -> Result<GainVector> {
    g.check_membership(s)?;
    let gains = (0..g.num_vertices())
        .map(|v| {
            let side = s.contains(v);
            g.neighbors(v)
                .iter()
                .map(|&(u, w)| if s.contains(u) == side { w } else { -w })
                .sum()
        })
        .collect();
    Ok(GainVector(gains))
}

/// Flip vertex `v` in place, keeping `gains` consistent.
///
/// Returns the change in cut value, which equals the pre-flip `gains[v]`.
pub fn apply_flip(g: &Graph, s: &mut Membership, gains: &mut GainVector, v: usize) -> Result<f64> {
    let n = g.num_vertices();
    if v >= n {
        return Err(Error::VertexOutOfRange {
            vertex: v,
            num_vertices: n,
        });
    }
    g.check_membership(s)?;
    if gains.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: gains.len(),
        });
    }
    let old_side = s.contains(v);
    let delta = gains.0[v];
    s.toggle(v);
    gains.0[v] = -delta;
    for &(u, w) in g.neighbors(v) {
        // u was on the same side: edge becomes cut, flipping u would now un-cut it.
        if s.contains(u) == old_side {
            gains.0[u] -= 2.0 * w;
        } else {
            gains.0[u] += 2.0 * w;
        }
    }
    Ok(delta)
}
