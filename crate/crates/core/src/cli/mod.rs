//! Command-line front end: argument parsing, run manifests and corpus files.

mod commands;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::{cmd_behavior, cmd_eval, cmd_generate, cmd_solve, cmd_train, SolutionFile};

use crate::error::{Error, Result};
use crate::graph::{deserialize_graph, Graph, GraphFamily};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Parser)]
#[command(name = "ecodqn", version, about = "Exploratory deep Q-learning for Max-Cut")]
pub struct Cli {
    /// Worker threads for parallel episodes (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a corpus of random signed graphs.
    Generate(GenerateArgs),
    /// Train an agent from a TOML config.
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline on a corpus.
    Eval(EvalArgs),
    /// Solve a single graph file.
    Solve(SolveArgs),
    /// Per-step behaviour statistics of a reversible agent.
    Behavior(BehaviorArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Eco,
    McaRev,
    McaIrrev,
    /// Best of MCA-irrev and 50 MCA-rev restarts per episode.
    Mca,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Eco => "eco",
            Method::McaRev => "mca-rev",
            Method::McaIrrev => "mca-irrev",
            Method::Mca => "mca",
            Method::Exact => "exact",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: GraphFamily,
    #[arg(long)]
    pub vertices: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Stop after this many environment steps and keep a resumable state.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Continue from a saved training state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct EvalArgs {
    /// Corpus directory or a single graph file.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Eco)]
    pub method: Method,
    /// Required for `--method eco`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Best-known cuts ledger (default: `<out>/registry.jsonl`).
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Label used in the summary table (default: corpus file name).
    #[arg(long)]
    pub graph_set: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct BehaviorArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::bench::MOVING_AVERAGE_WINDOW)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn parse_family(s: &str) -> Result<GraphFamily> {
    s.parse()
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => {
            let report = cmd_eval(&a)?;
            let s = report.summary();
            println!(
                "{} on {}: mean ratio {:.4} (q1 {:.4}, q3 {:.4}), single-episode {:.4}, {} graphs x {} episodes",
                s.method, s.graph_set, s.mean_ratio, s.q1_ratio, s.q3_ratio, s.mean_episode_ratio, s.num_graphs,
                s.episodes_per_graph
            );
            Ok(())
        }
        Command::Solve(a) => {
            let sol = cmd_solve(&a)?;
            println!("{} cut {} ({:.3} s)", sol.method, sol.cut, sol.seconds);
            Ok(())
        }
        Command::Behavior(a) => cmd_behavior(&a).map(|_| ()),
    }
}

/// Provenance record written next to every set of artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub code_version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        RunManifest {
            command: command.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_unix_s: unix_now(),
            finished_unix_s: f64::NAN,
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_unix_s = unix_now();
        write_json(&dir.join(MANIFEST_FILE), &self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Create `dir`, refusing a non-empty directory unless `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::InvalidArgument(format!(
                "{} is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub graph_hash: String,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub seed: u64,
}

/// Index of a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub family: GraphFamily,
    pub num_vertices: usize,
    pub seed: u64,
    pub graphs: Vec<IndexEntry>,
}

/// Read a graph file.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    deserialize_graph(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

/// Graphs of a corpus directory (via its index) or of a single file.
pub fn load_corpus(path: &Path) -> Result<Vec<Arc<Graph>>> {
    if path.is_dir() {
        let index: CorpusIndex = read_json(&path.join(INDEX_FILE))?;
        index
            .graphs
            .iter()
            .map(|e| {
                let g = load_graph(&path.join(&e.file))?;
                if g.content_hash() != e.graph_hash {
                    return Err(Error::Data(format!("{}: content hash does not match the index", e.file)));
                }
                Ok(Arc::new(g))
            })
            .collect()
    } else {
        Ok(vec![Arc::new(load_graph(path)?)])
    }
}
