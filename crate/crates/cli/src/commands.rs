//! The subcommands, callable as library functions.

use std::io::Write;
use std::path::{Path, PathBuf};

use dynfold_core::cloth::ClothParams;
use dynfold_core::env::{metrics, EpisodeSpec, FoldEnv, ObservationMode, Observation, TrajectoryRecord, ACTION_DIM};
use dynfold_core::randomization::{generate_demos, identify_top_m, DemoSet, Demonstration, FabricPool};
use dynfold_core::render::{render, VisualConfig};
use dynfold_learn::checkpoint::Checkpoint;
use dynfold_learn::policy::select_action;
use dynfold_learn::sac::Agent;
use dynfold_learn::train::{eval_specs, eval_specs_per_fabric, metrics_csv, train_loop, EpisodeOutcome, EpochMetrics, TrainSetup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{require, RunConfig};
use crate::report::EvalReport;
use crate::stats::{mann_whitney_u, MannWhitney};
use crate::{CliError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Stream salt separating evaluation episodes from training ones.
const EVAL_SALT: u64 = 0xE7A1_0000_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Image observations, identified fabric pool.
    Ours,
    /// Image observations, single fabric.
    OursMinus,
    /// Tracked-point observations, single fabric.
    Fixed,
}

impl Mode {
    pub fn observation(self) -> ObservationMode {
        match self {
            Mode::Fixed => ObservationMode::State,
            Mode::Ours | Mode::OursMinus => ObservationMode::Image,
        }
    }
}

fn load_demos(cfg: &RunConfig) -> Result<DemoSet> {
    Ok(DemoSet::load(require(&cfg.paths.demos, "demos")?)?)
}

/// The fabric used by the single-cloth modes: the best pool entry if a pool is
/// configured, otherwise the demonstration fabric.
pub fn single_fabric(cfg: &RunConfig) -> Result<ClothParams> {
    match &cfg.paths.pool {
        Some(_) => {
            let pool = FabricPool::load(require(&cfg.paths.pool, "pool")?)?;
            pool.entries.first().map(|e| e.params.clone()).ok_or_else(|| CliError::Contract("pool file is empty".into()))
        }
        None => Ok(cfg.cloth.clone()),
    }
}

/// Training fabrics for `mode`.
pub fn training_fabrics(cfg: &RunConfig, mode: Mode) -> Result<Vec<ClothParams>> {
    match mode {
        Mode::Ours => Ok(FabricPool::load(require(&cfg.paths.pool, "pool")?)?.params()),
        Mode::OursMinus | Mode::Fixed => Ok(vec![single_fabric(cfg)?]),
    }
}

/// Scripted demonstrations on the configured fabric.
pub fn cmd_demos(cfg: &RunConfig, out: &Path) -> Result<DemoSet> {
    let env = dynfold_core::env::EpisodeConfig { observation: ObservationMode::State, ..cfg.env.clone() };
    let set = generate_demos(&cfg.cloth, &env, cfg.demos.count, cfg.seed)?;
    set.save(out)?;
    Ok(set)
}

/// Score candidates against the demonstrations and write the top-M pool.
pub fn cmd_identify(cfg: &RunConfig, out: &Path) -> Result<FabricPool> {
    let demos = load_demos(cfg)?;
    let env = dynfold_core::env::EpisodeConfig { observation: ObservationMode::State, ..cfg.env.clone() };
    let pool = identify_top_m(
        cfg.seed,
        &cfg.ranges,
        &demos.demos,
        cfg.identify.candidates,
        cfg.identify.pool_size,
        &env,
        Some(&demos.reference),
    )?;
    pool.save(out)?;
    Ok(pool)
}

fn write_metrics(dir: &Path, rows: &[EpochMetrics]) -> std::io::Result<()> {
    let tmp = dir.join("metrics.csv.partial");
    std::fs::write(&tmp, metrics_csv(rows))?;
    std::fs::rename(tmp, dir.join(METRICS_FILE))?;
    Ok(())
}

fn read_metrics(path: &Path, up_to: usize) -> Result<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let row = EpochMetrics::from_csv_row(line)
            .ok_or_else(|| dynfold_core::Error::Parse { line: i + 1, msg: "bad metrics row".into() })?;
        if row.epoch <= up_to {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Train in `mode`, writing metrics and a checkpoint to `out_dir` after every epoch.
///
/// With `resume`, an existing checkpoint in `out_dir` is loaded and training
/// continues after its epoch; the replay buffer and optimizer moments start empty.
pub fn cmd_train(cfg: &RunConfig, mode: Mode, out_dir: &Path, resume: bool) -> Result<Vec<EpochMetrics>> {
    let fabrics = training_fabrics(cfg, mode)?;
    let demos = match &cfg.paths.demos {
        Some(_) => Some(load_demos(cfg)?),
        None => None,
    };
    let mut learner = cfg.learner.clone();
    learner.net.observation = mode.observation();
    let env = dynfold_core::env::EpisodeConfig { observation: mode.observation(), ..cfg.env.clone() };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml()?)?;

    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    let mut agent = Agent::new(learner.net.clone(), learner.sac.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let mut history = Vec::new();
    let mut start_epoch = 0;
    if resume && checkpoint_path.exists() {
        let ckpt = Checkpoint::load(&checkpoint_path)?;
        ckpt.restore(&mut agent)?;
        start_epoch = ckpt.manifest.epoch;
        history = read_metrics(&out_dir.join(METRICS_FILE), start_epoch)?;
    }

    let setup = TrainSetup {
        env,
        pool: &fabrics,
        visual: &cfg.visual,
        demos: demos.as_ref().map_or(&[][..], |d| &d.demos[..]),
        demo_cloth: demos.as_ref().map(|d| &d.reference),
        learner: &learner,
        schedule: &cfg.schedule,
        seed: cfg.seed,
    };
    train_loop(&setup, &mut agent, start_epoch, |row, agent| {
        history.push(row.clone());
        write_metrics(out_dir, &history)?;
        Checkpoint::from_agent(agent, row.epoch).save(&checkpoint_path)?;
        Ok(())
    })?;
    Ok(history)
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub episodes: usize,
    /// `episodes` per fabric instead of in total.
    pub per_fabric: bool,
    /// Record each policy trajectory on the training fabric and replay it open loop.
    pub fixed_trajectory: bool,
    /// Replay a stored demonstration instead of running a policy.
    pub actions: Option<PathBuf>,
    /// Write every step as a trajectory-log line.
    pub log: Option<PathBuf>,
}

/// Evaluation fabrics: the whole pool if configured, else the demonstration fabric.
pub fn eval_fabrics(cfg: &RunConfig) -> Result<Vec<ClothParams>> {
    match &cfg.paths.pool {
        Some(_) => Ok(FabricPool::load(require(&cfg.paths.pool, "pool")?)?.params()),
        None => Ok(vec![cfg.cloth.clone()]),
    }
}

/// One episode from `spec`; returns the outcome, the actions taken and optional log lines.
fn run_episode<F>(env: &mut FoldEnv, spec: EpisodeSpec, mut act: F, log: bool) -> Result<(EpisodeOutcome, Vec<[f64; ACTION_DIM]>, Vec<String>)>
where
    F: FnMut(usize, &Observation) -> Result<[f64; ACTION_DIM]>,
{
    let mut last = env.reset_with(spec)?;
    let mut lines = Vec::new();
    let mut actions = Vec::new();
    if log {
        lines.push(env.log_record(&last, [0.0; ACTION_DIM])?.to_line()?);
    }
    while !last.done {
        let a = act(actions.len(), &last.observation)?;
        last = env.step(a)?;
        actions.push(a);
        if log {
            lines.push(env.log_record(&last, a)?.to_line()?);
        }
    }
    Ok((EpisodeOutcome::from_last(&last), actions, lines))
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, opts: &EvalOptions) -> Result<EvalReport> {
    let demo = match &opts.actions {
        Some(p) if !p.exists() => return Err(CliError::MissingFile { path: p.clone(), what: "actions" }),
        Some(p) => Some(serde_json::from_str::<Demonstration>(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let agent = match (checkpoint, &demo) {
        (_, Some(_)) => None,
        (Some(p), None) if !p.exists() => return Err(CliError::MissingFile { path: p.to_path_buf(), what: "checkpoint" }),
        (Some(p), None) => Some(Checkpoint::load(p)?.to_agent()?),
        (None, None) => return Err(CliError::Usage("eval needs --checkpoint or --actions".into())),
    };
    let observation = agent.as_ref().map_or(ObservationMode::State, |a| a.net.observation);
    let env_cfg = dynfold_core::env::EpisodeConfig { observation, ..cfg.env.clone() };
    let fabrics = eval_fabrics(cfg)?;
    let seed = cfg.seed ^ EVAL_SALT;
    let specs = if opts.per_fabric {
        eval_specs_per_fabric(&env_cfg, &fabrics, &cfg.visual, opts.episodes, seed)?
    } else {
        eval_specs(&env_cfg, &fabrics, &cfg.visual, opts.episodes, seed)?
    };
    let source = if opts.fixed_trajectory { Some(single_fabric(cfg)?) } else { None };

    let mut env = FoldEnv::new(env_cfg)?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut outcomes = Vec::with_capacity(specs.len());
    let mut log = Vec::new();
    for mut spec in specs {
        let (outcome, _, lines) = match (&demo, &agent) {
            (Some(d), _) => {
                spec.goal = d.goal;
                run_episode(&mut env, spec, |i, _| Ok(d.actions.get(i).copied().unwrap_or([0.0; ACTION_DIM])), opts.log.is_some())?
            }
            (None, Some(agent)) => {
                let policy = |_: usize, o: &Observation| Ok(select_action(&agent.actor, &agent.net, o, true, &mut unused)?.0);
                match &source {
                    Some(cloth) => {
                        let recorded = EpisodeSpec { params: cloth.clone(), ..spec.clone() };
                        let (_, actions, _) = run_episode(&mut env, recorded, policy, false)?;
                        run_episode(&mut env, spec, |i, _| Ok(actions.get(i).copied().unwrap_or([0.0; ACTION_DIM])), opts.log.is_some())?
                    }
                    None => run_episode(&mut env, spec, policy, opts.log.is_some())?,
                }
            }
            (None, None) => unreachable!("checked above"),
        };
        outcomes.push(outcome);
        log.extend(lines);
    }
    if let Some(path) = &opts.log {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in &log {
            writeln!(f, "{line}")?;
        }
        f.flush()?;
    }
    Ok(EvalReport::from_outcomes(&outcomes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub frames: usize,
    /// d_sum recomputed from each logged state.
    pub d_sum: Vec<f64>,
    pub logged_final_d_sum: f64,
}

/// Re-render every logged state as a PGM frame (without noise) and recompute d_sum.
pub fn cmd_replay(log: &Path, out_dir: &Path) -> Result<ReplaySummary> {
    if !log.exists() {
        return Err(CliError::MissingFile { path: log.to_path_buf(), what: "trajectory log" });
    }
    let records = TrajectoryRecord::parse_log(&std::fs::read_to_string(log)?)?;
    let last = records.last().ok_or_else(|| CliError::Contract("trajectory log is empty".into()))?;
    std::fs::create_dir_all(out_dir)?;
    let clean = VisualConfig { pixel_noise_sigma: 0.0, ..VisualConfig::default() };
    let mut d_sum = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        render(&r.state, r.grid_n, &r.camera, &clean, 0)?.write_pgm(out_dir.join(format!("frame_{i:05}.pgm")))?;
        let (p0, p1) = (r.tracked[0].position, r.tracked[1].position);
        d_sum.push(metrics(p0, p1, &r.goal, 1.0).d_sum);
    }
    Ok(ReplaySummary { frames: records.len(), d_sum, logged_final_d_sum: last.d_sum() })
}

/// Mann-Whitney U over the per-episode d_sum of two reports.
pub fn cmd_compare(a: &Path, b: &Path) -> Result<MannWhitney> {
    for p in [a, b] {
        if !p.exists() {
            return Err(CliError::MissingFile { path: p.to_path_buf(), what: "report" });
        }
    }
    mann_whitney_u(&EvalReport::load(a)?.d_sums(), &EvalReport::load(b)?.d_sums())
}
