//! Message-passing Q-network.
//!
//! Shapes use the row-vector convention: an input row `x` of width `a`
//! is mapped by a block of shape `a × b` as `x · θ`.

mod mpnn;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use mpnn::{
    accumulate_batch_gradient, accumulate_gradient, backward, backward_cached, forward, forward_batch,
    forward_cached, Batch, ForwardCache,
};

/// Per-vertex Q-values.
pub type QValues = Array1<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Observation width.
    pub m: usize,
    /// Embedding width.
    pub n: usize,
    /// Message-passing rounds.
    pub k: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { m: 7, n: 64, k: 3 }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n < 2 || self.k == 0 {
            return Err(Error::InvalidArgument(format!(
                "network dims must satisfy m >= 1, n >= 2, K >= 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// The seven parameter blocks. Also used, with identical shapes, to hold
/// gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetParams {
    pub dims: Dims,
    /// `m × n`: observation to initial embedding.
    pub theta1: Array2<f64>,
    /// `(m+1) × (n-1)`: per-edge `[w_uv, x_u]` encoding.
    pub theta2: Array2<f64>,
    /// `n × n`: neighbourhood encoding plus degree to edge embedding.
    pub theta3: Array2<f64>,
    /// `K` blocks of `2n × n`: message functions.
    pub theta4: Vec<Array2<f64>>,
    /// `K` blocks of `2n × n`: update functions.
    pub theta5: Vec<Array2<f64>>,
    /// `n × n`: graph-level readout.
    pub theta6: Array2<f64>,
    /// `2n`: final linear readout.
    pub theta7: Array1<f64>,
}

/// Gradient of a scalar loss with respect to every parameter block.
pub type GradientSet = QNetParams;

impl QNetParams {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { m, n, k } = dims;
        QNetParams {
            dims,
            theta1: Array2::zeros((m, n)),
            theta2: Array2::zeros((m + 1, n - 1)),
            theta3: Array2::zeros((n, n)),
            theta4: (0..k).map(|_| Array2::zeros((2 * n, n))).collect(),
            theta5: (0..k).map(|_| Array2::zeros((2 * n, n))).collect(),
            theta6: Array2::zeros((n, n)),
            theta7: Array1::zeros(2 * n),
        }
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))` per block.
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = seed::rng(seed);
        let mut p = Self::zeros(dims);
        let mut fill = |a: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for x in a {
                *x = dist.sample(&mut rng);
            }
        };
        for (_, block, shape) in p.blocks_mut() {
            let (fan_in, fan_out) = match shape.as_slice() {
                [rows, cols] => (*rows, *cols),
                [len] => (*len, 1),
                _ => unreachable!(),
            };
            fill(block, fan_in, fan_out);
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|(_, b, _)| b.len()).sum()
    }

    /// Named flat views of every block, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out: Vec<(String, &[f64], Vec<usize>)> = Vec::with_capacity(5 + 2 * self.dims.k);
        fn flat2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        out.push(("theta1".into(), flat2(&self.theta1), self.theta1.shape().to_vec()));
        out.push(("theta2".into(), flat2(&self.theta2), self.theta2.shape().to_vec()));
        out.push(("theta3".into(), flat2(&self.theta3), self.theta3.shape().to_vec()));
        for (i, a) in self.theta4.iter().enumerate() {
            out.push((format!("theta4_{i}"), flat2(a), a.shape().to_vec()));
        }
        for (i, a) in self.theta5.iter().enumerate() {
            out.push((format!("theta5_{i}"), flat2(a), a.shape().to_vec()));
        }
        out.push(("theta6".into(), flat2(&self.theta6), self.theta6.shape().to_vec()));
        out.push((
            "theta7".into(),
            self.theta7.as_slice().expect("standard layout"),
            vec![self.theta7.len()],
        ));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64], Vec<usize>)> {
        let mut out: Vec<(String, &mut [f64], Vec<usize>)> = Vec::with_capacity(5 + 2 * self.dims.k);
        fn flat2(a: &mut Array2<f64>) -> (&mut [f64], Vec<usize>) {
            let shape = a.shape().to_vec();
            (a.as_slice_mut().expect("standard layout"), shape)
        }
        let (b, s) = flat2(&mut self.theta1);
        out.push(("theta1".into(), b, s));
        let (b, s) = flat2(&mut self.theta2);
        out.push(("theta2".into(), b, s));
        let (b, s) = flat2(&mut self.theta3);
        out.push(("theta3".into(), b, s));
        for (i, a) in self.theta4.iter_mut().enumerate() {
            let (b, s) = flat2(a);
            out.push((format!("theta4_{i}"), b, s));
        }
        for (i, a) in self.theta5.iter_mut().enumerate() {
            let (b, s) = flat2(a);
            out.push((format!("theta5_{i}"), b, s));
        }
        let (b, s) = flat2(&mut self.theta6);
        out.push(("theta6".into(), b, s));
        let len = self.theta7.len();
        out.push((
            "theta7".into(),
            self.theta7.as_slice_mut().expect("standard layout"),
            vec![len],
        ));
        out
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &QNetParams, scale: f64) {
        for ((_, a, _), (_, b, _)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b, _)| b.iter().all(|x| x.is_finite()))
    }

    /// Verify every block has the shape implied by `dims`.
    pub fn check_shapes(&self) -> Result<()> {
        let Dims { m, n, k } = self.dims;
        let mismatch = |what: &str, expected: &[usize], actual: &[usize]| Error::ShapeMismatch {
            what: what.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        };
        if self.theta4.len() != k || self.theta5.len() != k {
            return Err(mismatch("message rounds", &[k, k], &[self.theta4.len(), self.theta5.len()]));
        }
        let (square, wide) = ([n, n], [2 * n, n]);
        let (first, second, last) = ([m, n], [m + 1, n - 1], [2 * n]);
        let mut expected: Vec<(&str, &[usize], &[usize])> = vec![
            ("theta1", &first, self.theta1.shape()),
            ("theta2", &second, self.theta2.shape()),
            ("theta3", &square, self.theta3.shape()),
            ("theta6", &square, self.theta6.shape()),
            ("theta7", &last, self.theta7.shape()),
        ];
        for a in self.theta4.iter().chain(&self.theta5) {
            expected.push(("theta4/theta5", &wide, a.shape()));
        }
        for (what, want, got) in expected {
            if want != got {
                return Err(mismatch(what, want, got));
            }
        }
        Ok(())
    }
}

/// Highest-valued allowed vertex; ties go to the lowest index.
pub fn greedy_action(q: &[f64], allowed: &[bool]) -> Result<usize> {
    if q.len() != allowed.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            actual: allowed.len(),
        });
    }
    let mut best: Option<usize> = None;
    for (v, (&value, &ok)) in q.iter().zip(allowed).enumerate() {
        if ok && best.is_none_or(|b| value > q[b]) {
            best = Some(v);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no allowed action".into()))
}
