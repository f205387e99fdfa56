//! Append-only ledger of the best cut known for each graph.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub graph_hash: String,
    pub cut: f64,
    pub method: String,
    /// Membership as a string of `0`/`1`.
    pub membership: String,
}

/// A JSON-lines file with one entry per improvement.
#[derive(Debug)]
pub struct Registry {
    path: PathBuf,
    best: HashMap<String, RegistryEntry>,
}

impl Registry {
    /// Open the registry at `path`; a missing file is an empty registry.
    pub fn load(path: &Path) -> Result<Self> {
        let mut best: HashMap<String, RegistryEntry> = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let e: RegistryEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
                    line: i + 1,
                    msg: format!("{}: {err}", path.display()),
                })?;
                if best.get(&e.graph_hash).is_none_or(|b| e.cut > b.cut) {
                    best.insert(e.graph_hash.clone(), e);
                }
            }
        }
        Ok(Registry {
            path: path.to_path_buf(),
            best,
        })
    }

    pub fn best(&self, graph_hash: &str) -> Option<&RegistryEntry> {
        self.best.get(graph_hash)
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    /// Append `entry` if it beats the stored cut. Returns whether it did.
    pub fn record(&mut self, entry: RegistryEntry) -> Result<bool> {
        if self.best(&entry.graph_hash).is_some_and(|b| b.cut >= entry.cut) {
            return Ok(false);
        }
        let mut f: File = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let line = serde_json::to_string(&entry).expect("entry serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.best.insert(entry.graph_hash.clone(), entry);
        Ok(true)
    }
}
