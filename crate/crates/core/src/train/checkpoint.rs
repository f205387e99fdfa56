//! Versioned JSON checkpoints with named parameter arrays.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Optimizer, OptimizerKind};
use crate::agent::Agent;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::qnet::{Dims, QNetParams};

const FORMAT: &str = "ecodqn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: QNetParams,
    pub env_config: EnvConfig,
    pub optimizer: Optimizer,
    pub env_steps: usize,
    pub grad_updates: usize,
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

type ArrayMap = BTreeMap<String, NamedArray>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerRecord {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    first_moment: Option<ArrayMap>,
    second_moment: Option<ArrayMap>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointRecord {
    format: String,
    version: u32,
    dims: Dims,
    env_config: EnvConfig,
    env_steps: usize,
    grad_updates: usize,
    params: ArrayMap,
    optimizer: OptimizerRecord,
}

fn to_map(p: &QNetParams) -> ArrayMap {
    p.blocks()
        .into_iter()
        .map(|(name, data, shape)| (name, NamedArray { shape, data: data.to_vec() }))
        .collect()
}

fn from_map(dims: Dims, mut map: ArrayMap, what: &str) -> Result<QNetParams> {
    dims.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut p = QNetParams::zeros(dims);
    for (name, block, shape) in p.blocks_mut() {
        let arr = map
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("{what}: missing array {name}")))?;
        if arr.shape != shape || arr.data.len() != block.len() {
            return Err(Error::ShapeMismatch {
                what: format!("{what}.{name}"),
                expected: shape,
                actual: arr.shape,
            });
        }
        block.copy_from_slice(&arr.data);
    }
    if let Some(extra) = map.keys().next() {
        return Err(Error::Checkpoint(format!("{what}: unexpected array {extra}")));
    }
    Ok(p)
}

fn dims_tuple(d: Dims) -> (usize, usize, usize) {
    (d.m, d.n, d.k)
}

impl Checkpoint {
    pub fn agent(&self) -> Agent {
        Agent {
            params: self.params.clone(),
            env_config: self.env_config,
        }
    }

    pub fn dims(&self) -> Dims {
        self.params.dims
    }

    pub fn to_json(&self) -> String {
        let record = CheckpointRecord {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: self.params.dims,
            env_config: self.env_config,
            env_steps: self.env_steps,
            grad_updates: self.grad_updates,
            params: to_map(&self.params),
            optimizer: OptimizerRecord {
                kind: self.optimizer.kind,
                learning_rate: self.optimizer.learning_rate,
                step: self.optimizer.step,
                first_moment: self.optimizer.first_moment.as_ref().map(to_map),
                second_moment: self.optimizer.second_moment.as_ref().map(to_map),
            },
        };
        serde_json::to_string(&record).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: CheckpointRecord =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
        if record.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint file (format {:?})", record.format)));
        }
        if record.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                record.version
            )));
        }
        record.env_config.validate()?;
        let dims = record.dims;
        let params = from_map(dims, record.params, "params")?;
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        let opt = record.optimizer;
        let first_moment = opt.first_moment.map(|m| from_map(dims, m, "first_moment")).transpose()?;
        let second_moment = opt.second_moment.map(|m| from_map(dims, m, "second_moment")).transpose()?;
        if (opt.kind == OptimizerKind::Adam) != (first_moment.is_some() && second_moment.is_some()) {
            return Err(Error::Checkpoint("optimizer moments inconsistent with optimizer kind".into()));
        }
        Ok(Checkpoint {
            params,
            env_config: record.env_config,
            optimizer: Optimizer {
                kind: opt.kind,
                learning_rate: opt.learning_rate,
                step: opt.step,
                first_moment,
                second_moment,
            },
            env_steps: record.env_steps,
            grad_updates: record.grad_updates,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Load and require the given architecture.
    pub fn load_expecting(path: &Path, dims: Dims) -> Result<Self> {
        let c = Self::load(path)?;
        if c.dims() != dims {
            return Err(Error::ArchitectureMismatch {
                expected: dims_tuple(dims),
                found: dims_tuple(c.dims()),
            });
        }
        Ok(c)
    }
}
