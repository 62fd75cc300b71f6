use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::actor::{evaluate_policy, Actor, EpisodeRecord, ParamSnapshot, Snapshot};
use super::{ExperimentConfig, ReplayBuffer};
use crate::algorithms::{AgentNets, Learner, UpdateStats, Window};
use crate::error::{Error, Result};
use crate::numerics::{checkpoint, Rng};

pub const CSV_HEADER: [&str; 10] = [
    "learner_step",
    "env_steps",
    "eval_return_mean",
    "eval_return_median",
    "mean_kl",
    "default_entropy",
    "loss_pi",
    "loss_q",
    "loss_pi0",
    "wall_ms",
];

/// One row of `progress.csv`, written after every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub learner_step: u64,
    pub env_steps: u64,
    pub eval_return_mean: f64,
    pub eval_return_median: f64,
    pub mean_kl: f64,
    pub default_entropy: f64,
    pub loss_pi: f64,
    pub loss_q: f64,
    pub loss_pi0: f64,
    /// Zero in single-thread mode, so logs stay byte-identical.
    pub wall_ms: u64,
}

pub struct RunOutput {
    pub nets: AgentNets,
    pub rows: Vec<LogRow>,
    pub learner_steps: u64,
    pub env_steps: u64,
    pub episodes: u64,
}

impl RunOutput {
    /// Learner step of the first evaluation whose median return reaches `threshold`.
    pub fn steps_to_return(&self, threshold: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.eval_return_median >= threshold)
            .map(|r| r.learner_step)
    }
}

const NETS_STREAM: u64 = 1;
const LEARNER_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;
const ACTOR_STREAM: u64 = 1_000;
const EVAL_STREAM: u64 = 1 << 40;

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Writes `policy.ckpt`, `default.ckpt` and `critic.ckpt` into `dir`.
pub fn save_nets(nets: &AgentNets, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    checkpoint::save(&nets.policy, &dir.join("policy.ckpt"))?;
    checkpoint::save(&nets.default, &dir.join("default.ckpt"))?;
    checkpoint::save(&nets.critic, &dir.join("critic.ckpt"))?;
    Ok(())
}

/// Loads the nets saved by [`save_nets`] into a config's freshly built nets.
pub fn load_nets(cfg: &ExperimentConfig, dir: &Path) -> Result<AgentNets> {
    let mut nets = cfg.build_nets(&mut Rng::new(cfg.seed).fork(NETS_STREAM))?;
    for (name, net) in [
        ("policy", &mut nets.policy),
        ("default", &mut nets.default),
        ("critic", &mut nets.critic),
    ] {
        let path = dir.join(format!("{name}.ckpt"));
        let loaded = checkpoint::load(&path)?;
        if !loaded.same_layout(net) {
            return Err(Error::config(
                "checkpoint",
                format!("{} does not match the configured {name} network", path.display()),
            ));
        }
        *net = loaded;
    }
    Ok(AgentNets::from_parts(nets.policy, nets.default, nets.critic, nets.head, nets.critic_kind)?)
}

struct Logger {
    dir: Option<PathBuf>,
    csv: Option<csv::Writer<File>>,
    events: Option<BufWriter<File>>,
}

impl Logger {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let Some(dir) = cfg.run_dir() else {
            return Ok(Self { dir: None, csv: None, events: None });
        };
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        let mut csv = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join("progress.csv"))?;
        csv.write_record(CSV_HEADER)?;
        csv.flush()?;
        let events = BufWriter::new(File::create(dir.join("events.jsonl"))?);
        Ok(Self {
            dir: Some(dir),
            csv: Some(csv),
            events: Some(events),
        })
    }

    fn row(&mut self, row: &LogRow) -> Result<()> {
        if let Some(w) = &mut self.csv {
            w.serialize(row)?;
            w.flush()?;
        }
        Ok(())
    }

    fn event(&mut self, value: serde_json::Value) -> Result<()> {
        if let Some(w) = &mut self.events {
            serde_json::to_writer(&mut *w, &value)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn episode(&mut self, learner_step: u64, record: &EpisodeRecord) -> Result<()> {
        if self.events.is_none() {
            return Ok(());
        }
        let mut v = serde_json::to_value(record)?;
        v["kind"] = "episode".into();
        v["learner_step"] = learner_step.into();
        self.event(v)
    }

    fn checkpoint(&mut self, nets: &AgentNets, label: &str) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join("checkpoints").join(label);
        save_nets(nets, &path)?;
        self.event(serde_json::json!({ "kind": "checkpoint", "label": label, "path": path }))
    }

    /// Saves the failing batch next to the logs and returns the abort error.
    fn abort(&mut self, step: u64, batch: &[Window], cause: Error) -> Error {
        let Some(dir) = &self.dir else {
            return Error::Numeric(format!("aborted at learner step {step}: {cause}"));
        };
        let path = dir.join(format!("nan_dump_step_{step}.json"));
        let written = File::create(&path)
            .map_err(Error::from)
            .and_then(|f| serde_json::to_writer(BufWriter::new(f), batch).map_err(Error::from));
        let _ = self.event(serde_json::json!({ "kind": "abort", "learner_step": step, "cause": cause.to_string() }));
        let _ = self.flush();
        match written {
            Ok(()) => Error::Numeric(format!(
                "aborted at learner step {step}: {cause}; batch dumped to {}",
                path.display()
            )),
            Err(e) => Error::Numeric(format!("aborted at learner step {step}: {cause}; batch dump failed: {e}")),
        }
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.csv {
            w.flush()?;
        }
        if let Some(w) = &mut self.events {
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct StatsAccumulator {
    sum: UpdateStats,
    n: usize,
}

impl StatsAccumulator {
    fn add(&mut self, s: &UpdateStats) {
        self.sum.loss_pi += s.loss_pi;
        self.sum.loss_q += s.loss_q;
        self.sum.loss_pi0 += s.loss_pi0;
        self.sum.mean_kl += s.mean_kl;
        self.sum.default_entropy += s.default_entropy;
        self.n += 1;
    }

    fn take(&mut self) -> UpdateStats {
        let n = self.n.max(1) as f64;
        let s = std::mem::take(&mut self.sum);
        self.n = 0;
        UpdateStats {
            loss_pi: s.loss_pi / n,
            loss_q: s.loss_q / n,
            loss_pi0: s.loss_pi0 / n,
            mean_kl: s.mean_kl / n,
            default_entropy: s.default_entropy / n,
        }
    }
}

/// State shared by both execution modes.
struct Run<'a> {
    cfg: &'a ExperimentConfig,
    learner: Learner,
    replay: Arc<ReplayBuffer>,
    logger: Logger,
    rows: Vec<LogRow>,
    stats: StatsAccumulator,
    sample_rng: Rng,
    eval_env: Box<dyn crate::envs::Environment>,
    episodes: u64,
    started: Instant,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let base = Rng::new(cfg.seed);
        let nets = cfg.build_nets(&mut base.fork(NETS_STREAM))?;
        let learner = Learner::new(
            nets,
            cfg.hp.clone(),
            cfg.build_algorithm()?,
            cfg.build_regularizer()?,
            cfg.freeze_default(),
            base.fork(LEARNER_STREAM),
        )?;
        Ok(Self {
            cfg,
            learner,
            replay: Arc::new(ReplayBuffer::new(cfg.replay_capacity)?),
            logger: Logger::new(cfg)?,
            rows: Vec::new(),
            stats: StatsAccumulator::default(),
            sample_rng: base.fork(SAMPLE_STREAM),
            eval_env: cfg.build_env()?,
            episodes: 0,
            started: Instant::now(),
        })
    }

    fn actors(&self) -> Result<Vec<Actor>> {
        let setup = self.cfg.setup()?;
        let base = Rng::new(self.cfg.seed);
        (0..self.cfg.actors)
            .map(|i| {
                Ok(Actor::new(
                    i,
                    self.cfg.build_env()?,
                    &setup.obs_spec,
                    setup.mask.clone(),
                    self.cfg.hp.unroll,
                    base.fork(ACTOR_STREAM + i as u64),
                ))
            })
            .collect()
    }

    fn ready(&self) -> bool {
        self.replay.windows() > 0 && self.replay.transitions() >= self.cfg.min_replay
    }

    fn record_episode(&mut self, record: &EpisodeRecord) -> Result<()> {
        self.episodes += 1;
        self.logger.episode(self.learner.steps(), record)
    }

    /// One update; returns whether training should stop.
    fn learn(&mut self, env_steps: u64, deterministic: bool) -> Result<bool> {
        let step = self.learner.steps() + 1;
        let batch = self.replay.sample(self.cfg.hp.batch_size, &mut self.sample_rng)?;
        let stats = match self.learner.update(&batch) {
            Ok(s) => s,
            Err(e @ Error::Numeric(_)) => return Err(self.logger.abort(step, &batch, e)),
            Err(e) => return Err(e),
        };
        self.stats.add(&stats);
        if self.cfg.checkpoint_period > 0 && step % self.cfg.checkpoint_period == 0 {
            self.logger.checkpoint(self.learner.nets(), &format!("step_{step}"))?;
        }
        if step % self.cfg.eval_period != 0 {
            return Ok(false);
        }
        let setup = self.cfg.setup()?;
        let snapshot = Snapshot::of(self.learner.nets(), step);
        let mut rng = Rng::new(self.cfg.seed).fork(EVAL_STREAM + step);
        let returns = evaluate_policy(
            &snapshot,
            &mut *self.eval_env,
            &setup.obs_spec,
            self.cfg.eval_episodes,
            &mut rng,
        )?;
        let s = self.stats.take();
        let row = LogRow {
            learner_step: step,
            env_steps,
            eval_return_mean: returns.iter().sum::<f64>() / returns.len().max(1) as f64,
            eval_return_median: median(&returns),
            mean_kl: s.mean_kl,
            default_entropy: s.default_entropy,
            loss_pi: s.loss_pi,
            loss_q: s.loss_q,
            loss_pi0: s.loss_pi0,
            wall_ms: if deterministic { 0 } else { self.started.elapsed().as_millis() as u64 },
        };
        self.logger.row(&row)?;
        self.logger.event(serde_json::json!({
            "kind": "eval",
            "learner_step": step,
            "returns": returns,
        }))?;
        let stop = self.cfg.stop_at_return.is_some_and(|t| row.eval_return_median >= t);
        self.rows.push(row);
        Ok(stop)
    }

    fn finish(mut self, env_steps: u64) -> Result<RunOutput> {
        self.logger.checkpoint(self.learner.nets(), "final")?;
        self.logger.flush()?;
        Ok(RunOutput {
            learner_steps: self.learner.steps(),
            nets: self.learner.into_nets(),
            rows: self.rows,
            env_steps,
            episodes: self.episodes,
        })
    }
}

fn run_single_thread(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut run = Run::new(cfg)?;
    let mut actors = run.actors()?;
    let snapshot = ParamSnapshot::new(run.learner.nets());
    let mut current = snapshot.latest();
    let mut turn = 0usize;
    let mut env_steps = 0u64;
    let mut act = |run: &mut Run<'_>, current: &Snapshot, env_steps: &mut u64| -> Result<()> {
        let n = actors.len();
        let out = actors[turn % n].step(current)?;
        turn += 1;
        *env_steps += 1;
        if let Some(w) = out.window {
            run.replay.push(w)?;
        }
        if let Some(e) = out.episode {
            run.record_episode(&e)?;
        }
        Ok(())
    };
    if cfg.learner_steps > 0 {
        while !run.ready() {
            act(&mut run, &current, &mut env_steps)?;
        }
    }
    while run.learner.steps() < cfg.learner_steps {
        for _ in 0..cfg.env_steps_per_update {
            act(&mut run, &current, &mut env_steps)?;
        }
        let stop = run.learn(env_steps, true)?;
        if run.learner.steps() % cfg.snapshot_period == 0 {
            snapshot.publish(run.learner.nets());
            current = snapshot.latest();
        }
        if stop {
            break;
        }
    }
    run.finish(env_steps)
}

fn run_threaded(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut run = Run::new(cfg)?;
    let actors = run.actors()?;
    let snapshot = ParamSnapshot::new(run.learner.nets());
    let stop = AtomicBool::new(cfg.learner_steps == 0);
    let produced = AtomicU64::new(0);
    let learned = AtomicU64::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let (tx, rx) = mpsc::channel::<EpisodeRecord>();
    let budget = |learned: u64| cfg.min_replay as u64 + cfg.env_steps_per_update as u64 * (learned + 1);

    let result = std::thread::scope(|scope| -> Result<()> {
        for mut actor in actors {
            let tx = tx.clone();
            let replay = Arc::clone(&run.replay);
            let (stop, produced, learned, failure, snapshot) = (&stop, &produced, &learned, &failure, &snapshot);
            scope.spawn(move || {
                let mut body = || -> Result<()> {
                    while !stop.load(Ordering::Acquire) {
                        if produced.load(Ordering::Acquire) >= budget(learned.load(Ordering::Acquire)) {
                            std::thread::sleep(Duration::from_micros(50));
                            continue;
                        }
                        let out = actor.step(&snapshot.latest())?;
                        produced.fetch_add(1, Ordering::AcqRel);
                        if let Some(w) = out.window {
                            replay.push(w)?;
                        }
                        if let Some(e) = out.episode {
                            let _ = tx.send(e);
                        }
                    }
                    Ok(())
                };
                if let Err(e) = body() {
                    *failure.lock() = Some(e);
                    stop.store(true, Ordering::Release);
                }
            });
        }
        drop(tx);
        let outcome = (|| -> Result<()> {
            while run.learner.steps() < cfg.learner_steps {
                if let Some(e) = failure.lock().take() {
                    return Err(e);
                }
                while let Ok(e) = rx.try_recv() {
                    run.record_episode(&e)?;
                }
                let due = cfg.min_replay as u64 + cfg.env_steps_per_update as u64 * run.learner.steps();
                let ready = run.ready() && produced.load(Ordering::Acquire) >= due;
                if !ready {
                    std::thread::sleep(Duration::from_micros(50));
                    continue;
                }
                let done = run.learn(produced.load(Ordering::Acquire), false)?;
                learned.store(run.learner.steps(), Ordering::Release);
                if run.learner.steps() % cfg.snapshot_period == 0 {
                    snapshot.publish(run.learner.nets());
                }
                if done {
                    break;
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::Release);
        outcome
    });
    result?;
    if let Some(e) = failure.lock().take() {
        return Err(e);
    }
    while let Ok(e) = rx.try_recv() {
        run.record_episode(&e)?;
    }
    let env_steps = produced.load(Ordering::Acquire);
    run.finish(env_steps)
}

/// Trains per `cfg`: actors fill the replay buffer, the learner samples
/// batches of windows, updates, syncs targets, publishes snapshots and
/// evaluates every `eval_period` steps.
pub fn run_learner(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.threaded {
        run_threaded(cfg)
    } else {
        run_single_thread(cfg)
    }
}

/// [`run_learner`] starting from a pretrained default policy.
pub fn transfer_run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.pretrained.is_none() {
        return Err(Error::config("pretrained", "a transfer run needs a pretrained default checkpoint"));
    }
    run_learner(cfg)
}
