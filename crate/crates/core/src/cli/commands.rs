use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    load_corpus, load_graph, prepare_out_dir, write_json, BehaviorArgs, CorpusIndex, EvalArgs, GenerateArgs,
    IndexEntry, Method, RunManifest, SolveArgs, TrainArgs, INDEX_FILE,
};
use crate::agent::Agent;
use crate::baselines::{mca_best, mca_irrev, mca_rev, multi_restart, SolveResult};
use crate::bench::{
    aggregate, behavior_series, behavior_trace, brute_force_opt, evaluate_agent, evaluate_solver, reference_cut,
    write_aggregate_csv, BehaviorStep, EvalReport, Reference, ReferenceKind, Registry, RegistryEntry, SERIES_COLUMNS,
};
use crate::error::{Error, Result};
use crate::graph::{serialize_graph, Graph};
use crate::seed;
use crate::train::{write_curve_csv, write_timing_csv, Checkpoint, CurvePoint, TrainConfig, Trainer};

/// Restarts per episode of the combined MCA baseline.
const MCA_RESTARTS: usize = 50;

fn io_write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `count` graphs plus an index into `out`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<CorpusIndex> {
    if args.count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let manifest = RunManifest::new("generate", args).seed("master", args.seed);
    prepare_out_dir(&args.out, args.force)?;
    let stream = seed::derive(args.seed, "graph-gen");
    let width = args.count.saturating_sub(1).to_string().len().max(4);
    let graphs: Vec<(Graph, u64)> = (0..args.count)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive_indexed(stream, i as u64);
            args.family.sample(args.vertices, s).map(|g| (g, s))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(graphs.len());
    for (i, (g, s)) in graphs.iter().enumerate() {
        let file = format!("graph_{i:0width$}.txt");
        io_write(&args.out.join(&file), serialize_graph(g))?;
        entries.push(IndexEntry {
            file,
            graph_hash: g.content_hash(),
            num_vertices: g.num_vertices(),
            num_edges: g.num_edges(),
            seed: *s,
        });
    }
    let index = CorpusIndex {
        family: args.family,
        num_vertices: args.vertices,
        seed: args.seed,
        graphs: entries,
    };
    write_json(&args.out.join(INDEX_FILE), &index)?;
    let mut manifest = manifest.seed("graph-gen", stream);
    manifest.outputs = vec![args.out.join(INDEX_FILE)];
    manifest.finish(&args.out)?;
    Ok(index)
}

/// Train, writing `checkpoint.json`, `curve.csv`, `timing.csv` and the
/// resolved `config.toml` into `out`. An interrupted run (`stop_after`)
/// also leaves `state.bin` for `resume`.
pub fn cmd_train(args: &TrainArgs) -> Result<(Checkpoint, Vec<CurvePoint>)> {
    let mut cfg = TrainConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
        cfg.validate()?;
    }
    let master = cfg.seed;
    let mut manifest = RunManifest::new("train", &cfg).seed("master", master);
    for label in ["init", "exploration", "replay-sampling", "holdout-graphs", "holdout-init", "train-graphs", "env-init"] {
        manifest = manifest.seed(label, seed::derive(master, label));
    }
    manifest.inputs.push(args.config.clone());
    prepare_out_dir(&args.out, args.force)?;

    let mut trainer = match &args.resume {
        Some(path) => {
            manifest.inputs.push(path.clone());
            let t = Trainer::load_state(path)?;
            if *t.config() != cfg {
                return Err(Error::Config(format!(
                    "{} was produced with a different configuration",
                    path.display()
                )));
            }
            t
        }
        None => Trainer::new(cfg.clone())?,
    };
    trainer.run_until(args.stop_after.unwrap_or(cfg.total_steps))?;

    let ckpt = trainer.checkpoint();
    let out = &args.out;
    let files = ["config.toml", "checkpoint.json", "curve.csv", "timing.csv"].map(|f| out.join(f));
    io_write(&files[0], cfg.to_toml())?;
    ckpt.save(&files[1])?;
    write_curve_csv(&files[2], trainer.curve())?;
    write_timing_csv(&files[3], trainer.curve())?;
    manifest.outputs.extend(files);
    let state = out.join("state.bin");
    if trainer.is_finished() {
        if state.exists() {
            std::fs::remove_file(&state).map_err(|e| Error::io(&state, e))?;
        }
    } else {
        trainer.save_state(&state)?;
        manifest.outputs.push(state);
    }
    manifest.finish(out)?;
    Ok((ckpt, trainer.curve().to_vec()))
}

fn load_agent(checkpoint: Option<&PathBuf>) -> Result<Agent> {
    let path = checkpoint.ok_or_else(|| Error::InvalidArgument("--checkpoint is required for method eco".into()))?;
    Ok(Checkpoint::load(path)?.agent())
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Multi-episode evaluation against exact or best-known references.
///
/// Writes `episodes.csv`, `graphs.csv`, `summary.csv` and `report.jsonl`.
/// Best cuts are appended to the registry whenever they improve on it.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let graphs = load_corpus(&args.corpus)?;
    let agent = match args.method {
        Method::Eco => Some(load_agent(args.checkpoint.as_ref())?),
        _ => None,
    };
    let reference_seed = seed::derive(args.seed, "reference");
    let mut manifest = RunManifest::new("eval", args)
        .seed("master", args.seed)
        .seed("reference", reference_seed);
    manifest.inputs.push(args.corpus.clone());
    manifest.inputs.extend(args.checkpoint.clone());
    prepare_out_dir(&args.out, args.force)?;

    let registry_path = args.registry.clone().unwrap_or_else(|| args.out.join("registry.jsonl"));
    let mut registry = Registry::load(&registry_path)?;
    let computed = graphs
        .par_iter()
        .map(|g| reference_cut(g, reference_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut references: Vec<Reference> = Vec::with_capacity(graphs.len());
    for (g, (membership, cut, kind)) in graphs.iter().zip(computed) {
        let hash = g.content_hash();
        let method = match kind {
            ReferenceKind::Exact => "exact",
            ReferenceKind::BestKnown => "mca",
        };
        registry.record(RegistryEntry {
            graph_hash: hash.clone(),
            cut,
            method: method.into(),
            membership: membership.to_bitstring(),
        })?;
        let best = registry.best(&hash).map_or(cut, |e| e.cut.max(cut));
        references.push(Some((best, kind == ReferenceKind::Exact)));
    }

    let set = args.graph_set.clone().unwrap_or_else(|| file_label(&args.corpus));
    let (e, s) = (args.episodes, args.seed);
    let report = match (args.method, &agent) {
        (Method::Eco, Some(a)) => evaluate_agent(a, &set, &graphs, &references, e, s)?,
        (Method::McaRev, _) => evaluate_solver("mca-rev", &set, |g, s| mca_rev(g, s), &graphs, &references, e, s)?,
        (Method::McaIrrev, _) => evaluate_solver("mca-irrev", &set, |g, _| mca_irrev(g), &graphs, &references, e, s)?,
        (Method::Mca, _) => evaluate_solver("mca", &set, |g, s| mca_best(g, MCA_RESTARTS, s), &graphs, &references, e, s)?,
        (Method::Exact, _) => evaluate_solver("exact", &set, |g, _| exact(g), &graphs, &references, e, s)?,
        (Method::Eco, None) => unreachable!("agent loaded above"),
    };
    for (g, ge) in graphs.iter().zip(&report.graphs) {
        debug_assert_eq!(g.content_hash(), ge.graph_id);
        registry.record(RegistryEntry {
            graph_hash: ge.graph_id.clone(),
            cut: ge.best_cut,
            method: report.method.clone(),
            membership: ge.best_membership.to_bitstring(),
        })?;
    }

    let out = &args.out;
    let files = ["episodes.csv", "graphs.csv", "summary.csv", "report.jsonl"].map(|f| out.join(f));
    report.write_episodes_csv(&files[0])?;
    report.write_graphs_csv(&files[1])?;
    write_aggregate_csv(&files[2], &aggregate(std::slice::from_ref(&report))?)?;
    let mut lines = String::new();
    for g in &report.graphs {
        lines.push_str(&serde_json::to_string(g).expect("graph report serializes"));
        lines.push('\n');
    }
    io_write(&files[3], lines)?;
    manifest.outputs.extend(files);
    manifest.outputs.push(registry_path);
    manifest.finish(out)?;
    Ok(report)
}

fn exact(g: &Graph) -> Result<SolveResult> {
    let (membership, cut) = brute_force_opt(g)?;
    Ok(SolveResult {
        membership,
        cut,
        steps: 0,
        restart: 0,
    })
}

/// Contents of `solution.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub method: String,
    pub graph: PathBuf,
    pub graph_hash: String,
    pub num_vertices: usize,
    pub cut: f64,
    /// Membership as a string of `0`/`1`.
    pub membership: String,
    pub episodes: usize,
    pub best_restart: usize,
    pub seed: u64,
    pub seconds: f64,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<SolutionFile> {
    let g = Arc::new(load_graph(&args.graph)?);
    let agent = match args.method {
        Method::Eco => Some(load_agent(args.checkpoint.as_ref())?),
        _ => None,
    };
    let mut manifest = RunManifest::new("solve", args).seed("master", args.seed);
    manifest.inputs.push(args.graph.clone());
    manifest.inputs.extend(args.checkpoint.clone());
    prepare_out_dir(&args.out, args.force)?;

    let started = Instant::now();
    let (e, s) = (args.episodes, args.seed);
    let result = match (args.method, &agent) {
        (Method::Eco, Some(a)) => multi_restart(|_, s| a.solve(&g, s), &g, e, s)?,
        (Method::McaRev, _) => multi_restart(mca_rev, &g, e, s)?,
        (Method::McaIrrev, _) => mca_irrev(&g)?,
        (Method::Mca, _) => mca_best(&g, e.max(1), s)?,
        (Method::Exact, _) => exact(&g)?,
        (Method::Eco, None) => unreachable!("agent loaded above"),
    };
    let sol = SolutionFile {
        method: args.method.name().into(),
        graph: args.graph.clone(),
        graph_hash: g.content_hash(),
        num_vertices: g.num_vertices(),
        cut: result.cut,
        membership: result.membership.to_bitstring(),
        episodes: e,
        best_restart: result.restart,
        seed: s,
        seconds: started.elapsed().as_secs_f64(),
    };
    let path = args.out.join("solution.json");
    write_json(&path, &sol)?;
    manifest.outputs.push(path);
    manifest.finish(&args.out)?;
    Ok(sol)
}

#[derive(Serialize)]
struct TraceLine<'a> {
    graph_index: usize,
    #[serde(flatten)]
    step: &'a BehaviorStep,
}

/// One greedy episode per corpus graph; writes the moving-average
/// `series.csv` and the raw per-step flags in `traces.jsonl`.
pub fn cmd_behavior(args: &BehaviorArgs) -> Result<Vec<[f64; 6]>> {
    let agent = Checkpoint::load(&args.checkpoint)?.agent();
    if !agent.env_config.reversible {
        return Err(Error::InvalidArgument(
            "behaviour series need a reversible checkpoint".into(),
        ));
    }
    let graphs = load_corpus(&args.corpus)?;
    let mut manifest = RunManifest::new("behavior", args).seed("master", args.seed);
    manifest.inputs = vec![args.checkpoint.clone(), args.corpus.clone()];
    prepare_out_dir(&args.out, args.force)?;

    let traces = graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| behavior_trace(&agent, Arc::clone(g), seed::derive_indexed(args.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let series = behavior_series(&traces, args.window)?;

    let path = args.out.join("series.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(e.to_string()))?;
    let header: Vec<&str> = std::iter::once("step").chain(SERIES_COLUMNS).collect();
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (i, row) in series.iter().enumerate() {
        let fields = std::iter::once((i + 1).to_string()).chain(row.iter().map(f64::to_string));
        w.write_record(fields).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let trace_path = args.out.join("traces.jsonl");
    let mut lines = String::new();
    for (graph_index, t) in traces.iter().enumerate() {
        for step in &t.steps {
            lines.push_str(&serde_json::to_string(&TraceLine { graph_index, step }).expect("trace serializes"));
            lines.push('\n');
        }
    }
    io_write(&trace_path, lines)?;
    manifest.outputs = vec![path, trace_path];
    manifest.finish(&args.out)?;
    Ok(series)
}
