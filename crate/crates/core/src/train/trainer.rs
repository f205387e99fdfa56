use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    epsilon_at, huber_grad, huber_loss, td_targets, Checkpoint, Optimizer, ReplayBuffer, TrainConfig,
    Transition,
};
use crate::agent::Agent;
use crate::bench::reference_cut;
use crate::env::{EnvConfig, EnvState, ObservationMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::qnet::{accumulate_batch_gradient, forward, forward_batch, greedy_action, Batch, QNetParams};
use crate::seed::{self, Rng};

/// One row of the learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_steps: usize,
    pub grad_updates: usize,
    pub holdout_mean_cut: f64,
    pub holdout_mean_approx_ratio: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct CurveRow {
    env_steps: usize,
    grad_updates: usize,
    holdout_mean_cut: f64,
    holdout_mean_approx_ratio: f64,
    epsilon: f64,
}

#[derive(Serialize)]
struct TimingRow {
    env_steps: usize,
    wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Holdout {
    graphs: Vec<Arc<Graph>>,
    init_seeds: Vec<u64>,
    references: Vec<f64>,
}

/// ε-greedy choice among the allowed vertices.
pub fn select_action(
    params: &QNetParams,
    env: &EnvState,
    obs: &ObservationMatrix,
    allowed: &[bool],
    epsilon: f64,
    rng: &mut Rng,
) -> Result<usize> {
    if rng.gen::<f64>() < epsilon {
        let choices: Vec<usize> = (0..allowed.len()).filter(|&v| allowed[v]).collect();
        if choices.is_empty() {
            return Err(Error::InvalidArgument("no allowed action".into()));
        }
        return Ok(choices[rng.gen_range(0..choices.len())]);
    }
    let q = forward(params, env.graph(), obs.view())?;
    greedy_action(q.as_slice().expect("contiguous"), allowed)
}

/// Resumable training state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    config: TrainConfig,
    env_config: EnvConfig,
    params: QNetParams,
    target: QNetParams,
    optimizer: Optimizer,
    replay: ReplayBuffer,
    env: Option<EnvState>,
    episodes: u64,
    env_steps: usize,
    grad_updates: usize,
    explore_rng: Rng,
    replay_rng: Rng,
    holdout: Holdout,
    curve: Vec<CurvePoint>,
    wall_time_s: f64,
    #[serde(skip)]
    pending: Option<(ObservationMatrix, Vec<bool>)>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env_config = config.env_config();
        let master = config.seed;
        let params = QNetParams::init(config.dims(), seed::derive(master, "init"))?;
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, &params);

        let holdout_graphs = seed::derive(master, "holdout-graphs");
        let holdout_init = seed::derive(master, "holdout-init");
        let graphs: Vec<Arc<Graph>> = (0..config.holdout_size)
            .map(|i| {
                config
                    .graph_type
                    .sample(config.num_vertices, seed::derive_indexed(holdout_graphs, i as u64))
                    .map(Arc::new)
            })
            .collect::<Result<_>>()?;
        let references = graphs
            .par_iter()
            .map(|g| reference_cut(g, holdout_graphs).map(|r| r.1))
            .collect::<Result<Vec<_>>>()?;
        let init_seeds = (0..graphs.len())
            .map(|i| seed::derive_indexed(holdout_init, i as u64))
            .collect();

        Ok(Trainer {
            env_config,
            target: params.clone(),
            params,
            optimizer,
            replay: ReplayBuffer::new(config.replay_capacity),
            env: None,
            episodes: 0,
            env_steps: 0,
            grad_updates: 0,
            explore_rng: seed::rng(seed::derive(master, "exploration")),
            replay_rng: seed::rng(seed::derive(master, "replay-sampling")),
            holdout: Holdout {
                graphs,
                init_seeds,
                references,
            },
            curve: Vec::new(),
            wall_time_s: 0.0,
            pending: None,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &QNetParams {
        &self.params
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn grad_updates(&self) -> usize {
        self.grad_updates
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn holdout_graphs(&self) -> &[Arc<Graph>] {
        &self.holdout.graphs
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.config.total_steps
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            env_config: self.env_config,
            optimizer: self.optimizer.clone(),
            env_steps: self.env_steps,
            grad_updates: self.grad_updates,
        }
    }

    /// Train until `steps` environment actions have been taken in total, or
    /// the configured budget is exhausted.
    pub fn run_until(&mut self, steps: usize) -> Result<()> {
        let stop = steps.min(self.config.total_steps);
        let started = Instant::now();
        let offset = self.wall_time_s;
        let result = (|| {
            if self.env_steps == 0 && stop > 0 && self.curve.is_empty() {
                self.evaluate(offset)?;
            }
            while self.env_steps < stop {
                self.step()?;
                let now = offset + started.elapsed().as_secs_f64();
                let due = self.env_steps % self.config.eval_every() == 0;
                if due || self.env_steps == self.config.total_steps {
                    self.evaluate(now)?;
                }
            }
            Ok(())
        })();
        self.wall_time_s = offset + started.elapsed().as_secs_f64();
        result
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.config.total_steps)
    }

    fn step(&mut self) -> Result<()> {
        if self.env.as_ref().is_none_or(|e| e.is_done()) {
            let i = self.episodes;
            let g = self.config.graph_type.sample(
                self.config.num_vertices,
                seed::derive_indexed(seed::derive(self.config.seed, "train-graphs"), i),
            )?;
            let env_seed = seed::derive_indexed(seed::derive(self.config.seed, "env-init"), i);
            self.env = Some(EnvState::reset(Arc::new(g), self.env_config, env_seed)?);
            self.episodes += 1;
            self.pending = None;
        }
        let env = self.env.as_mut().expect("episode in progress");
        let (obs, allowed) = match self.pending.take() {
            Some(p) => p,
            None => (env.observe(), env.allowed_mask()),
        };
        let eps = epsilon_at(&self.config, self.env_steps);
        let action = select_action(&self.params, env, &obs, &allowed, eps, &mut self.explore_rng)?;
        let outcome = env.step(action)?;
        let next_obs = env.observe();
        let next_allowed = env.allowed_mask();
        if !outcome.done {
            self.pending = Some((next_obs.clone(), next_allowed.clone()));
        }
        self.replay.push(Transition {
            graph: Arc::clone(env.graph()),
            obs,
            allowed,
            action,
            reward: outcome.reward,
            next_obs,
            next_allowed,
            done: outcome.done,
        });
        self.env_steps += 1;

        if self.env_steps % self.config.update_every == 0 && self.replay.len() >= self.config.batch_size {
            self.update()?;
        }
        Ok(())
    }

    fn update(&mut self) -> Result<()> {
        let batch = self.replay.sample(self.config.batch_size, &mut self.replay_rng)?;
        let gamma = self.env_config.gamma;
        let clip = self.config.clip_target();
        let delta = self.config.huber_delta;
        let scale = 1.0 / batch.len() as f64;
        let targets = td_targets(&self.target, &batch, gamma, clip)?;
        let items: Vec<_> = batch.iter().map(|t| (&*t.graph, t.obs.view())).collect();
        let joint = Batch::new(&items)?;
        let cache = forward_batch(&self.params, &joint)?;
        let mut loss = 0.0;
        let mut coeffs = Vec::with_capacity(batch.len());
        for (b, (tr, target)) in batch.iter().zip(&targets).enumerate() {
            let err = joint.segment(&cache.q, b)[tr.action] - target;
            loss += huber_loss(err, delta) * scale;
            coeffs.push((tr.action, huber_grad(err, delta) * scale));
        }
        let mut grad = self.params.zeros_like();
        accumulate_batch_gradient(&self.params, &joint, &cache, &coeffs, &mut grad)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} at update {} (env step {})",
                self.grad_updates + 1,
                self.env_steps
            )));
        }
        self.optimizer.apply(&mut self.params, &grad);
        if !self.params.is_finite() {
            return Err(Error::Numeric(format!(
                "parameters became non-finite at update {}",
                self.grad_updates + 1
            )));
        }
        self.grad_updates += 1;
        if self.grad_updates % self.config.target_sync_period == 0 {
            self.target = self.params.clone();
        }
        Ok(())
    }

    fn evaluate(&mut self, wall_time_s: f64) -> Result<()> {
        let agent = Agent {
            params: self.params.clone(),
            env_config: self.env_config,
        };
        let h = &self.holdout;
        let cuts = (0..h.graphs.len())
            .into_par_iter()
            .map(|i| agent.run_episode(Arc::clone(&h.graphs[i]), h.init_seeds[i]).map(|e| e.best_cut))
            .collect::<Result<Vec<f64>>>()?;
        let mean_cut = cuts.iter().sum::<f64>() / cuts.len() as f64;
        let ratios: Vec<f64> = cuts
            .iter()
            .zip(&h.references)
            .filter(|(_, &r)| r > 0.0)
            .map(|(&c, &r)| c / r)
            .collect();
        let mean_ratio = if ratios.is_empty() {
            f64::NAN
        } else {
            ratios.iter().sum::<f64>() / ratios.len() as f64
        };
        self.curve.push(CurvePoint {
            env_steps: self.env_steps,
            grad_updates: self.grad_updates,
            holdout_mean_cut: mean_cut,
            holdout_mean_approx_ratio: mean_ratio,
            epsilon: epsilon_at(&self.config, self.env_steps),
            wall_time_s,
        });
        Ok(())
    }

    pub fn save_state(&self, path: &Path) -> Result<()> {
        let bytes = bincode::serialize(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_state(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let t: Trainer =
            bincode::deserialize(&bytes).map_err(|e| Error::Checkpoint(format!("corrupt training state: {e}")))?;
        t.config.validate()?;
        t.params.check_shapes()?;
        Ok(t)
    }
}

/// Run a full training job.
pub fn train(config: TrainConfig) -> Result<(Checkpoint, Vec<CurvePoint>)> {
    let mut t = Trainer::new(config)?;
    t.run()?;
    Ok((t.checkpoint(), t.curve))
}

/// Learning curve without timings, so that reruns compare byte for byte.
pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let rows = curve.iter().map(|p| CurveRow {
        env_steps: p.env_steps,
        grad_updates: p.grad_updates,
        holdout_mean_cut: p.holdout_mean_cut,
        holdout_mean_approx_ratio: p.holdout_mean_approx_ratio,
        epsilon: p.epsilon,
    });
    write_rows(
        path,
        rows,
        &["env_steps", "grad_updates", "holdout_mean_cut", "holdout_mean_approx_ratio", "epsilon"],
    )
}

/// Wall-clock seconds at each evaluation point.
pub fn write_timing_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let rows = curve.iter().map(|p| TimingRow {
        env_steps: p.env_steps,
        wall_time_s: p.wall_time_s,
    });
    write_rows(path, rows, &["env_steps", "wall_time_s"])
}

fn write_rows<T: Serialize>(path: &Path, rows: impl ExactSizeIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    if rows.len() == 0 {
        w.write_record(header).map_err(|e| Error::Data(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a curve written by [`write_curve_csv`]; timings read as zero.
pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;

    fn tiny(total: usize, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(GraphFamily::Er, 10, total, seed);
        c.embedding_dim = 8;
        c.message_rounds = 2;
        c.batch_size = 16;
        c.update_every = 4;
        c.replay_capacity = 100;
        c.holdout_size = 5;
        c.target_sync_period = 10;
        c.eval_every = Some(50);
        c
    }

    #[test]
    fn zero_steps_returns_initial_checkpoint() {
        let cfg = tiny(0, 1);
        let fresh = Trainer::new(cfg.clone()).unwrap().checkpoint();
        let (ckpt, curve) = train(cfg).unwrap();
        assert!(curve.is_empty());
        assert_eq!(ckpt, fresh);
        assert_eq!(ckpt.env_steps, 0);
    }

    #[test]
    fn update_cadence_and_buffer_bound() {
        let mut t = Trainer::new(tiny(200, 2)).unwrap();
        for s in 1..=200 {
            t.run_until(s).unwrap();
            assert!(t.replay().len() <= 100);
            // First update once 16 transitions exist, then every 4 actions.
            let expected = if s < 16 { 0 } else { s / 4 - 3 };
            assert_eq!(t.grad_updates(), expected, "after {s} steps");
        }
        let steps: Vec<_> = t.curve().iter().map(|p| p.env_steps).collect();
        assert_eq!(steps, vec![0, 50, 100, 150, 200]);
    }

    #[test]
    fn irreversible_masks_never_reenable() {
        let mut cfg = tiny(300, 3);
        cfg.reversible = false;
        cfg.observation_tuning = false;
        cfg.intrinsic_rewards = false;
        cfg.gamma = Some(1.0);
        let mut t = Trainer::new(cfg).unwrap();
        t.run().unwrap();
        for tr in t.replay().iter() {
            for v in 0..tr.allowed.len() {
                let in_s = tr.obs[[v, 0]] == 1.0;
                assert_eq!(tr.allowed[v], !in_s);
                assert!(!(tr.next_allowed[v] && !tr.allowed[v]));
            }
            assert!(tr.allowed[tr.action]);
            assert!(!tr.next_allowed[tr.action]);
        }
    }

    #[test]
    fn greedy_when_epsilon_is_zero() {
        let p = QNetParams::init(crate::qnet::Dims::default(), 1).unwrap();
        let g = Arc::new(GraphFamily::Er.sample(15, 0).unwrap());
        let env = EnvState::reset(g, EnvConfig::eco(), 0).unwrap();
        let obs = env.observe();
        let allowed = env.allowed_mask();
        let q = forward(&p, env.graph(), obs.view()).unwrap();
        let greedy = greedy_action(q.as_slice().unwrap(), &allowed).unwrap();
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            assert_eq!(select_action(&p, &env, &obs, &allowed, 0.0, &mut rng).unwrap(), greedy);
        }
    }

    #[test]
    fn resume_matches_unbroken_run() {
        let cfg = tiny(240, 4);
        let mut whole = Trainer::new(cfg.clone()).unwrap();
        whole.run().unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        let mut first = Trainer::new(cfg).unwrap();
        first.run_until(107).unwrap();
        first.save_state(&path).unwrap();
        let mut resumed = Trainer::load_state(&path).unwrap();
        resumed.run().unwrap();

        assert_eq!(resumed.checkpoint().to_json(), whole.checkpoint().to_json());
        let strip = |c: &[CurvePoint]| {
            c.iter()
                .map(|p| CurvePoint { wall_time_s: 0.0, ..p.clone() })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(resumed.curve()), strip(whole.curve()));
    }

    #[test]
    fn curve_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let mut t = Trainer::new(tiny(100, 5)).unwrap();
        t.run().unwrap();
        write_curve_csv(&path, t.curve()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("env_steps,grad_updates,holdout_mean_cut,holdout_mean_approx_ratio,epsilon\n"));
        let untimed: Vec<_> = t
            .curve()
            .iter()
            .map(|p| CurvePoint { wall_time_s: 0.0, ..p.clone() })
            .collect();
        assert_eq!(read_curve_csv(&path).unwrap(), untimed);
        write_curve_csv(&path, &[]).unwrap();
        assert!(read_curve_csv(&path).unwrap().is_empty());

        let timing = dir.path().join("timing.csv");
        write_timing_csv(&timing, t.curve()).unwrap();
        let text = std::fs::read_to_string(&timing).unwrap();
        assert_eq!(text.lines().count(), t.curve().len() + 1);
        assert!(text.starts_with("env_steps,wall_time_s\n"));
    }

    #[test]
    fn diverging_learning_rate_aborts() {
        let mut cfg = tiny(400, 6);
        cfg.optimizer = super::super::OptimizerKind::Sgd;
        cfg.learning_rate = 1e200;
        let err = train(cfg).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        assert_eq!(err.exit_code(), 4);
    }
}
