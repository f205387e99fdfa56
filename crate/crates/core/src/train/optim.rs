use serde::{Deserialize, Serialize};

use super::OptimizerKind;
use crate::qnet::{GradientSet, QNetParams};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Gradient-descent state. Adam keeps first and second moment estimates
/// per parameter; plain SGD keeps none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    pub first_moment: Option<QNetParams>,
    pub second_moment: Option<QNetParams>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, like: &QNetParams) -> Self {
        let moments = || match kind {
            OptimizerKind::Adam => Some(like.zeros_like()),
            OptimizerKind::Sgd => None,
        };
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            first_moment: moments(),
            second_moment: moments(),
        }
    }

    /// One descent step along `-grad`.
    pub fn apply(&mut self, params: &mut QNetParams, grad: &GradientSet) {
        self.step += 1;
        let lr = self.learning_rate;
        match (self.kind, &mut self.first_moment, &mut self.second_moment) {
            (OptimizerKind::Adam, Some(m), Some(v)) => {
                let t = self.step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                let blocks = params
                    .blocks_mut()
                    .into_iter()
                    .zip(grad.blocks())
                    .zip(m.blocks_mut())
                    .zip(v.blocks_mut());
                for ((((_, p, _), (_, g, _)), (_, m, _)), (_, v, _)) in blocks {
                    for i in 0..p.len() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    }
                }
            }
            _ => params.add_scaled(grad, -lr),
        }
    }
}
