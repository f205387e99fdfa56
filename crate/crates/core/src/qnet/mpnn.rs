use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{GradientSet, QNetParams, QValues};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Intermediate activations of one forward pass, kept for `backward`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    x: Array2<f64>,
    h0_pre: Array2<f64>,
    /// Pre-activations of the per-edge encoding, one row per directed
    /// adjacency entry in vertex-major, neighbour-sorted order.
    edge_pre: Array2<f64>,
    /// `[mean of relu(edge_pre), |N(v)|]` per vertex.
    xi_in: Array2<f64>,
    xi_pre: Array2<f64>,
    xi: Array2<f64>,
    /// Embeddings `μ^0 … μ^K`.
    h: Vec<Array2<f64>>,
    h_pre: Vec<Array2<f64>>,
    agg: Vec<Array2<f64>>,
    m_pre: Vec<Array2<f64>>,
    m: Vec<Array2<f64>>,
    /// Vertex ranges of the graphs in a batch: graph `b` owns rows
    /// `offsets[b]..offsets[b + 1]`.
    offsets: Vec<usize>,
    /// Per-graph mean embeddings and readout activations, one row each.
    pooled: Array2<f64>,
    r_pre: Array2<f64>,
    r: Array2<f64>,
    pub q: QValues,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| if x > 0.0 { x } else { 0.0 })
}

fn relu_mask(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
}

/// `out[v] = Σ_{u ∈ N(v)} w_uv · h[u] / |N(v)|`, zero for isolated vertices.
fn neighbour_mean(g: &Graph, h: &Array2<f64>) -> Array2<f64> {
    let width = h.ncols();
    let mut out = Array2::zeros((g.num_vertices(), width));
    let src = h.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for v in 0..g.num_vertices() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let row = &mut dst[v * width..(v + 1) * width];
        for &(u, w) in nbrs {
            let scale = w * inv;
            for (o, &x) in row.iter_mut().zip(&src[u * width..(u + 1) * width]) {
                *o += scale * x;
            }
        }
    }
    out
}

/// Adjoint of `neighbour_mean`: accumulates into `dh`.
fn neighbour_mean_adjoint(g: &Graph, d_out: &Array2<f64>, dh: &mut Array2<f64>) {
    let width = d_out.ncols();
    let src = d_out.as_slice().expect("standard layout");
    let dst = dh.as_slice_mut().expect("standard layout");
    for v in 0..g.num_vertices() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let row = &src[v * width..(v + 1) * width];
        for &(u, w) in nbrs {
            let scale = w * inv;
            for (o, &x) in dst[u * width..(u + 1) * width].iter_mut().zip(row) {
                *o += scale * x;
            }
        }
    }
}

/// `a · top + b · bottom` where `theta = [top; bottom]` split at row `split`.
fn concat_matmul(a: &Array2<f64>, b: &Array2<f64>, theta: &Array2<f64>, split: usize) -> Array2<f64> {
    let mut out = a.dot(&theta.slice(s![..split, ..]));
    general_mat_mul(1.0, b, &theta.slice(s![split.., ..]), 1.0, &mut out);
    out
}

fn check_inputs(p: &QNetParams, g: &Graph, obs: ArrayView2<f64>) -> Result<()> {
    let expected = vec![g.num_vertices(), p.dims.m];
    if obs.shape() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            what: "observation matrix".into(),
            expected,
            actual: obs.shape().to_vec(),
        });
    }
    p.check_shapes()
}

pub fn forward(p: &QNetParams, g: &Graph, obs: ArrayView2<f64>) -> Result<QValues> {
    Ok(forward_cached(p, g, obs)?.q)
}

pub fn forward_cached(p: &QNetParams, g: &Graph, obs: ArrayView2<f64>) -> Result<ForwardCache> {
    forward_segments(p, g, obs, vec![0, g.num_vertices()])
}

fn forward_segments(p: &QNetParams, g: &Graph, obs: ArrayView2<f64>, offsets: Vec<usize>) -> Result<ForwardCache> {
    check_inputs(p, g, obs)?;
    let nv = g.num_vertices();
    let n = p.dims.n;
    let x = obs.to_owned();

    let h0_pre = x.dot(&p.theta1);
    let h0 = relu(&h0_pre);

    // Per-edge encoding relu(θ2 · [w_uv, x_u]) = relu(w_uv θ2[0] + x_u θ2[1..]).
    let proj = x.dot(&p.theta2.slice(s![1.., ..]));
    let w_row = p.theta2.row(0);
    let num_dir: usize = (0..nv).map(|v| g.degree(v)).sum();
    let mut edge_pre = Array2::zeros((num_dir, n - 1));
    let mut xi_in = Array2::zeros((nv, n));
    let mut e = 0;
    for v in 0..nv {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        for &(u, w) in nbrs {
            let mut pre = edge_pre.row_mut(e);
            pre.assign(&proj.row(u));
            pre.scaled_add(w, &w_row);
            let mut acc = xi_in.slice_mut(s![v, ..n - 1]);
            acc.zip_mut_with(&pre, |a, &z| {
                if z > 0.0 {
                    *a += z * inv
                }
            });
            e += 1;
        }
        xi_in[[v, n - 1]] = nbrs.len() as f64;
    }
    let xi_pre = xi_in.dot(&p.theta3);
    let xi = relu(&xi_pre);

    let k_rounds = p.dims.k;
    let mut h = Vec::with_capacity(k_rounds + 1);
    let mut h_pre = Vec::with_capacity(k_rounds);
    let mut agg = Vec::with_capacity(k_rounds);
    let mut m_pre = Vec::with_capacity(k_rounds);
    let mut m = Vec::with_capacity(k_rounds);
    h.push(h0);
    for k in 0..k_rounds {
        let a = neighbour_mean(g, &h[k]);
        let mp = concat_matmul(&a, &xi, &p.theta4[k], n);
        let mk = relu(&mp);
        let hp = concat_matmul(&h[k], &mk, &p.theta5[k], n);
        let hk = relu(&hp);
        agg.push(a);
        m_pre.push(mp);
        m.push(mk);
        h_pre.push(hp);
        h.push(hk);
    }

    let last = &h[k_rounds];
    let num_graphs = offsets.len() - 1;
    let mut pooled = Array2::zeros((num_graphs, n));
    for b in 0..num_graphs {
        let rows = last.slice(s![offsets[b]..offsets[b + 1], ..]);
        pooled.row_mut(b).assign(&rows.mean_axis(Axis(0)).expect("non-empty graph"));
    }
    let r_pre = pooled.dot(&p.theta6);
    let r = relu(&r_pre);
    let global = r.dot(&p.theta7.slice(s![..n]));
    let mut q = last.dot(&p.theta7.slice(s![n..]));
    for b in 0..num_graphs {
        q.slice_mut(s![offsets[b]..offsets[b + 1]]).map_inplace(|x| *x += global[b]);
    }

    Ok(ForwardCache {
        x,
        h0_pre,
        edge_pre,
        xi_in,
        xi_pre,
        xi,
        h,
        h_pre,
        agg,
        m_pre,
        m,
        offsets,
        pooled,
        r_pre,
        r,
        q,
    })
}

/// Several graphs evaluated in a single pass over their disjoint union.
/// The readout still pools each graph separately.
#[derive(Clone, Debug)]
pub struct Batch {
    graph: Graph,
    offsets: Vec<usize>,
    obs: Array2<f64>,
}

impl Batch {
    pub fn new(items: &[(&Graph, ArrayView2<f64>)]) -> Result<Self> {
        let graphs: Vec<&Graph> = items.iter().map(|(g, _)| *g).collect();
        let (graph, offsets) = Graph::disjoint_union(&graphs)?;
        let width = items[0].1.ncols();
        let mut obs = Array2::zeros((graph.num_vertices(), width));
        for (b, (g, x)) in items.iter().enumerate() {
            if x.shape() != [g.num_vertices(), width] {
                return Err(Error::ShapeMismatch {
                    what: format!("observation matrix {b} of batch"),
                    expected: vec![g.num_vertices(), width],
                    actual: x.shape().to_vec(),
                });
            }
            obs.slice_mut(s![offsets[b]..offsets[b + 1], ..]).assign(x);
        }
        Ok(Batch { graph, offsets, obs })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Q-values of graph `b` within the batched output.
    pub fn segment<'a>(&self, q: &'a QValues, b: usize) -> ArrayView1<'a, f64> {
        q.slice(s![self.offsets[b]..self.offsets[b + 1]])
    }
}

pub fn forward_batch(p: &QNetParams, batch: &Batch) -> Result<ForwardCache> {
    forward_segments(p, &batch.graph, batch.obs.view(), batch.offsets.clone())
}

/// Add `Σ_b coeff_b · ∂Q_b[action_b]/∂θ` into `grad`, with actions given as
/// local vertex indices of each graph.
pub fn accumulate_batch_gradient(
    p: &QNetParams,
    batch: &Batch,
    cache: &ForwardCache,
    actions: &[(usize, f64)],
    grad: &mut GradientSet,
) -> Result<()> {
    if actions.len() != batch.len() {
        return Err(Error::LengthMismatch {
            expected: batch.len(),
            actual: actions.len(),
        });
    }
    let mut global = Vec::with_capacity(actions.len());
    for (b, &(a, d)) in actions.iter().enumerate() {
        let size = batch.offsets[b + 1] - batch.offsets[b];
        if a >= size {
            return Err(Error::VertexOutOfRange {
                vertex: a,
                num_vertices: size,
            });
        }
        global.push((batch.offsets[b] + a, d));
    }
    accumulate_segments(p, &batch.graph, cache, &global, grad)
}

/// Gradient of `td_error · Q_action` with respect to every block, i.e. the
/// parameter gradient of the loss `½ (Q_action − target)²` when `td_error`
/// is `Q_action − target`.
pub fn backward(
    p: &QNetParams,
    g: &Graph,
    obs: ArrayView2<f64>,
    action: usize,
    td_error: f64,
) -> Result<GradientSet> {
    let cache = forward_cached(p, g, obs)?;
    backward_cached(p, g, &cache, action, td_error)
}

pub fn backward_cached(
    p: &QNetParams,
    g: &Graph,
    cache: &ForwardCache,
    action: usize,
    td_error: f64,
) -> Result<GradientSet> {
    let mut grad = p.zeros_like();
    accumulate_gradient(p, g, cache, action, td_error, &mut grad)?;
    Ok(grad)
}

/// Add the gradient of `td_error · Q_action` into `grad`.
pub fn accumulate_gradient(
    p: &QNetParams,
    g: &Graph,
    cache: &ForwardCache,
    action: usize,
    td_error: f64,
    grad: &mut GradientSet,
) -> Result<()> {
    accumulate_segments(p, g, cache, &[(action, td_error)], grad)
}

/// `actions[b]` is the vertex of graph `b` (a global row index) whose
/// Q-value is differentiated, and the coefficient it is weighted by.
fn accumulate_segments(
    p: &QNetParams,
    g: &Graph,
    cache: &ForwardCache,
    actions: &[(usize, f64)],
    grad: &mut GradientSet,
) -> Result<()> {
    let nv = g.num_vertices();
    let offsets = &cache.offsets;
    let num_graphs = offsets.len() - 1;
    if actions.len() != num_graphs {
        return Err(Error::LengthMismatch {
            expected: num_graphs,
            actual: actions.len(),
        });
    }
    for (b, &(a, _)) in actions.iter().enumerate() {
        if !(offsets[b]..offsets[b + 1]).contains(&a) {
            return Err(Error::VertexOutOfRange {
                vertex: a - offsets[b].min(a),
                num_vertices: offsets[b + 1] - offsets[b],
            });
        }
    }
    if actions.iter().all(|&(_, d)| d == 0.0) {
        return Ok(());
    }
    let n = p.dims.n;
    let k_rounds = p.dims.k;
    let last = &cache.h[k_rounds];

    // Readout.
    let mut dr_pre = Array2::zeros((num_graphs, n));
    for (b, &(a, d)) in actions.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad.theta7.slice_mut(s![..n]).scaled_add(d, &cache.r.row(b));
        grad.theta7.slice_mut(s![n..]).scaled_add(d, &last.row(a));
        dr_pre.row_mut(b).scaled_add(d, &p.theta7.slice(s![..n]));
    }
    relu_mask(&mut dr_pre, &cache.r_pre);
    general_mat_mul(1.0, &cache.pooled.t(), &dr_pre, 1.0, &mut grad.theta6);
    let dpooled = dr_pre.dot(&p.theta6.t());
    let mut dh = Array2::zeros((nv, n));
    for b in 0..num_graphs {
        let size = (offsets[b + 1] - offsets[b]) as f64;
        let row = &dpooled.row(b) / size;
        dh.slice_mut(s![offsets[b]..offsets[b + 1], ..])
            .rows_mut()
            .into_iter()
            .for_each(|mut r| r.assign(&row));
    }
    for &(a, d) in actions {
        dh.row_mut(a).scaled_add(d, &p.theta7.slice(s![n..]));
    }

    // Message passing, last round first.
    let mut dxi: Array2<f64> = Array2::zeros((nv, n));
    for k in (0..k_rounds).rev() {
        let mut dh_pre = dh;
        relu_mask(&mut dh_pre, &cache.h_pre[k]);
        let t5 = &p.theta5[k];
        let mut g5 = grad.theta5[k].slice_mut(s![..n, ..]);
        general_mat_mul(1.0, &cache.h[k].t(), &dh_pre, 1.0, &mut g5);
        let mut g5 = grad.theta5[k].slice_mut(s![n.., ..]);
        general_mat_mul(1.0, &cache.m[k].t(), &dh_pre, 1.0, &mut g5);
        let mut dh_k = dh_pre.dot(&t5.slice(s![..n, ..]).t());
        let mut dm = dh_pre.dot(&t5.slice(s![n.., ..]).t());

        relu_mask(&mut dm, &cache.m_pre[k]);
        let t4 = &p.theta4[k];
        let mut g4 = grad.theta4[k].slice_mut(s![..n, ..]);
        general_mat_mul(1.0, &cache.agg[k].t(), &dm, 1.0, &mut g4);
        let mut g4 = grad.theta4[k].slice_mut(s![n.., ..]);
        general_mat_mul(1.0, &cache.xi.t(), &dm, 1.0, &mut g4);
        let da = dm.dot(&t4.slice(s![..n, ..]).t());
        general_mat_mul(1.0, &dm, &t4.slice(s![n.., ..]).t(), 1.0, &mut dxi);
        neighbour_mean_adjoint(g, &da, &mut dh_k);
        dh = dh_k;
    }

    // Initial embedding.
    relu_mask(&mut dh, &cache.h0_pre);
    general_mat_mul(1.0, &cache.x.t(), &dh, 1.0, &mut grad.theta1);

    // Edge embedding.
    relu_mask(&mut dxi, &cache.xi_pre);
    general_mat_mul(1.0, &cache.xi_in.t(), &dxi, 1.0, &mut grad.theta3);
    let dxi_in = dxi.dot(&p.theta3.t());
    let mut dproj: Array2<f64> = Array2::zeros((nv, n - 1));
    let mut dw_row: Array1<f64> = Array1::zeros(n - 1);
    let mut e = 0;
    for v in 0..nv {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let upstream = dxi_in.slice(s![v, ..n - 1]);
        for &(u, w) in nbrs {
            let pre = cache.edge_pre.row(e);
            let mut dpre = upstream.to_owned() * inv;
            dpre.zip_mut_with(&pre, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            dw_row.scaled_add(w, &dpre);
            dproj.row_mut(u).scaled_add(1.0, &dpre);
            e += 1;
        }
    }
    grad.theta2.row_mut(0).scaled_add(1.0, &dw_row);
    let mut g2 = grad.theta2.slice_mut(s![1.., ..]);
    general_mat_mul(1.0, &cache.x.t(), &dproj, 1.0, &mut g2);

    Ok(())
}
