//! Epoch/cycle training schedule, evaluation rollouts and the metrics table.

use std::fmt::Write as _;

use dynfold_core::cloth::ClothParams;
use dynfold_core::env::{rollout_actions, EpisodeConfig, EpisodeSpec, FoldEnv, Observation, StepResult, ACTION_DIM};
use dynfold_core::randomization::Demonstration;
use dynfold_core::render::VisualRanges;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::buffer::{episode_transitions, sample_batch, DemoMixer, ReplayBuffer, Transition};
use crate::policy::{select_action, NetConfig};
use crate::sac::{Agent, LossReport, SacConfig};
use crate::{LearnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub epochs: usize,
    pub cycles: usize,
    /// Agent environment steps per cycle.
    pub env_steps: usize,
    /// Gradient steps per cycle.
    pub grad_steps: usize,
    pub eval_episodes: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { epochs: 100, cycles: 20, env_steps: 1000, grad_steps: 1000, eval_episodes: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub sac: SacConfig,
    pub net: NetConfig,
    pub batch_size: usize,
    pub her_k: usize,
    pub demo_fraction: f64,
    /// Gaussian noise added once to demonstration actions at ingest, action units.
    pub demo_noise: f64,
    pub buffer_capacity: usize,
    /// Uniform-random agent steps before the policy acts.
    pub random_steps: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            sac: SacConfig::default(),
            net: NetConfig::default(),
            batch_size: 256,
            her_k: 4,
            demo_fraction: 0.1,
            demo_noise: 0.05,
            buffer_capacity: 1_000_000,
            random_steps: 1000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.sac.validate()?;
        self.net.validate()?;
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(LearnError::Config("need 0 < batch_size <= buffer_capacity".into()));
        }
        if !(self.demo_noise >= 0.0) {
            return Err(LearnError::Config("demo_noise must be >= 0".into()));
        }
        DemoMixer::new(self.demo_fraction)?;
        Ok(())
    }
}

/// Final-step outcome of one evaluation episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub fabric: usize,
    pub d0: f64,
    pub d1: f64,
    pub d_sum: f64,
    pub success: bool,
    pub steps: usize,
    pub reward: f64,
}

impl EpisodeOutcome {
    pub fn from_last(last: &StepResult) -> Self {
        let m = last.info.metrics;
        Self {
            fabric: last.info.fabric,
            d0: m.d0,
            d1: m.d1,
            d_sum: m.d_sum,
            success: m.success,
            steps: last.info.step,
            reward: last.reward,
        }
    }
}

/// Success rate and mean d_sum; `None` for an empty slice.
pub fn summarize(outcomes: &[EpisodeOutcome]) -> Option<(f64, f64)> {
    if outcomes.is_empty() {
        return None;
    }
    let n = outcomes.len() as f64;
    let success = outcomes.iter().filter(|o| o.success).count() as f64 / n;
    let d_sum = outcomes.iter().map(|o| o.d_sum).sum::<f64>() / n;
    Some((success, d_sum))
}

/// `n` evaluation episodes drawn from a dedicated seed.
pub fn eval_specs(cfg: &EpisodeConfig, pool: &[ClothParams], visual: &VisualRanges, n: usize, seed: u64) -> Result<Vec<EpisodeSpec>> {
    let env = FoldEnv::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Ok(env.sample_episode(rng.random(), pool, visual)?)).collect()
}

/// `per_fabric` episodes for every pool entry, grouped by fabric.
pub fn eval_specs_per_fabric(
    cfg: &EpisodeConfig,
    pool: &[ClothParams],
    visual: &VisualRanges,
    per_fabric: usize,
    seed: u64,
) -> Result<Vec<EpisodeSpec>> {
    let env = FoldEnv::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pool.len() * per_fabric);
    for (fabric, params) in pool.iter().enumerate() {
        for _ in 0..per_fabric {
            let mut spec = env.sample_episode(rng.random(), std::slice::from_ref(params), visual)?;
            spec.fabric = fabric;
            out.push(spec);
        }
    }
    Ok(out)
}

/// Roll out `act` on every spec until termination.
pub fn evaluate<F>(cfg: &EpisodeConfig, specs: &[EpisodeSpec], mut act: F) -> Result<Vec<EpisodeOutcome>>
where
    F: FnMut(&Observation) -> Result<[f64; ACTION_DIM]>,
{
    let mut env = FoldEnv::new(cfg.clone())?;
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut last = env.reset_with(spec.clone())?;
        while !last.done {
            let a = act(&last.observation)?;
            last = env.step(a)?;
        }
        out.push(EpisodeOutcome::from_last(&last));
    }
    Ok(out)
}

/// Deterministic-action evaluation of the agent's actor.
pub fn evaluate_agent(agent: &Agent, cfg: &EpisodeConfig, specs: &[EpisodeSpec]) -> Result<Vec<EpisodeOutcome>> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    evaluate(cfg, specs, |o| Ok(select_action(&agent.actor, &agent.net, o, true, &mut unused)?.0))
}

/// Replay one demonstration on `cloth` with per-step Gaussian action noise.
pub fn demo_trajectory<R: Rng + ?Sized>(
    env: &mut FoldEnv,
    demo: &Demonstration,
    cloth: &ClothParams,
    visual: &VisualRanges,
    noise: f64,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let mut spec = env.sample_episode(rng.random(), std::slice::from_ref(cloth), visual)?;
    spec.goal = demo.goal;
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| LearnError::Config(e.to_string()))?;
    let actions: Vec<[f64; ACTION_DIM]> = demo
        .actions
        .iter()
        .map(|a| {
            if noise == 0.0 {
                *a
            } else {
                a.map(|c| (c + rng.sample(normal)).clamp(-1.0, 1.0))
            }
        })
        .collect();
    let steps = rollout_actions(env, spec, &actions)?;
    Ok(episode_transitions(&steps, &actions[..steps.len() - 1], true))
}

/// Per-epoch training summary; epoch 0 is the untrained evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub success_rate: f64,
    pub mean_d_sum: f64,
    /// Mean losses over this epoch's gradient steps (zero when there were none).
    pub losses: LossReport,
    pub updates: usize,
    pub env_steps: usize,
    pub demo_trajectories: usize,
    pub discarded_episodes: usize,
}

pub const METRICS_HEADER: &str =
    "epoch,success_rate,mean_d_sum,critic1_loss,critic2_loss,actor_loss,alpha,entropy,aux_loss,updates,env_steps,demo_trajectories,discarded_episodes";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.success_rate,
            self.mean_d_sum,
            l.critic1,
            l.critic2,
            l.actor,
            l.alpha,
            l.entropy,
            l.aux,
            self.updates,
            self.env_steps,
            self.demo_trajectories,
            self.discarded_episodes
        )
        .expect("writing to a String");
        s
    }

    /// Inverse of [`csv_row`](Self::csv_row); `None` on a malformed line.
    pub fn from_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 13 {
            return None;
        }
        let x = |i: usize| f[i].parse::<f64>().ok();
        let n = |i: usize| f[i].parse::<usize>().ok();
        Some(Self {
            epoch: n(0)?,
            success_rate: x(1)?,
            mean_d_sum: x(2)?,
            losses: LossReport { critic1: x(3)?, critic2: x(4)?, actor: x(5)?, alpha: x(6)?, entropy: x(7)?, aux: x(8)? },
            updates: n(9)?,
            env_steps: n(10)?,
            demo_trajectories: n(11)?,
            discarded_episodes: n(12)?,
        })
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// What to train on.
#[derive(Clone, Debug)]
pub struct TrainSetup<'a> {
    pub env: EpisodeConfig,
    pub pool: &'a [ClothParams],
    pub visual: &'a VisualRanges,
    pub demos: &'a [Demonstration],
    /// Fabric the demonstrations are replayed on.
    pub demo_cloth: Option<&'a ClothParams>,
    pub learner: &'a LearnerConfig,
    pub schedule: &'a Schedule,
    pub seed: u64,
}

const EVAL_STREAM: u64 = 0x5EED_E7A1;

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// The fixed evaluation episodes used after every epoch.
pub fn training_eval_specs(setup: &TrainSetup) -> Result<Vec<EpisodeSpec>> {
    eval_specs(&setup.env, setup.pool, setup.visual, setup.schedule.eval_episodes, setup.seed ^ EVAL_STREAM)
}

/// Run epochs `start_epoch + 1 ..= schedule.epochs`, calling `on_epoch` after each.
///
/// A fresh run (`start_epoch == 0`) first reports the untrained policy as epoch 0.
pub fn train_loop<F>(setup: &TrainSetup, agent: &mut Agent, start_epoch: usize, mut on_epoch: F) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&EpochMetrics, &Agent) -> Result<()>,
{
    let learner = setup.learner;
    let schedule = setup.schedule;
    learner.validate()?;
    if setup.env.observation != learner.net.observation || agent.net != learner.net {
        return Err(LearnError::Config("environment observation mode and network config disagree".into()));
    }
    if setup.pool.is_empty() {
        return Err(LearnError::Config("training pool is empty".into()));
    }
    let demo_cloth = match (setup.demos.is_empty(), setup.demo_cloth) {
        (true, _) => None,
        (false, Some(c)) => Some(c),
        (false, None) => return Err(LearnError::Config("demonstrations given without their fabric".into())),
    };
    let delta = setup.env.delta;
    let specs = training_eval_specs(setup)?;
    let mut history = Vec::new();
    if start_epoch == 0 {
        let (success_rate, mean_d_sum) = summarize(&evaluate_agent(agent, &setup.env, &specs)?).unwrap_or((0.0, 0.0));
        let row = EpochMetrics {
            epoch: 0,
            success_rate,
            mean_d_sum,
            losses: LossReport::default(),
            updates: 0,
            env_steps: 0,
            demo_trajectories: 0,
            discarded_episodes: 0,
        };
        on_epoch(&row, agent)?;
        history.push(row);
    }

    let mut env = FoldEnv::new(setup.env.clone())?;
    let mut buffer = ReplayBuffer::new(learner.buffer_capacity)?;
    let mut mixer = DemoMixer::new(if demo_cloth.is_some() { learner.demo_fraction } else { 0.0 })?;
    let mut total_steps = start_epoch * schedule.cycles * schedule.env_steps;

    for epoch in start_epoch + 1..=schedule.epochs {
        let mut rng = epoch_rng(setup.seed, epoch);
        let mut sums = LossReport::default();
        let (mut updates, mut env_steps, mut demo_count, mut discarded) = (0, 0, 0, 0);
        for _ in 0..schedule.cycles {
            let mut cycle_steps = 0;
            while cycle_steps < schedule.env_steps {
                let mut steps = vec![env.reset(&mut rng, setup.pool, setup.visual)?];
                let mut actions = Vec::new();
                let mut failed = false;
                while !steps.last().expect("non-empty").done && cycle_steps < schedule.env_steps {
                    let obs = &steps.last().expect("non-empty").observation;
                    let a = if total_steps < learner.random_steps {
                        [0; ACTION_DIM].map(|_| rng.random_range(-1.0..=1.0))
                    } else {
                        select_action(&agent.actor, &agent.net, obs, false, &mut rng)?.0
                    };
                    cycle_steps += 1;
                    total_steps += 1;
                    env_steps += 1;
                    match env.step(a) {
                        Ok(r) => {
                            steps.push(r);
                            actions.push(a);
                        }
                        Err(dynfold_core::Error::Numeric { .. }) => {
                            failed = true;
                            break;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if failed {
                    discarded += 1;
                    continue;
                }
                buffer.push_trajectory(episode_transitions(&steps, &actions, false), learner.her_k, delta, &mut rng);
                if let Some(cloth) = demo_cloth {
                    for _ in 0..mixer.after_agent_trajectory() {
                        let demo = &setup.demos[rng.random_range(0..setup.demos.len())];
                        match demo_trajectory(&mut env, demo, cloth, setup.visual, learner.demo_noise, &mut rng) {
                            Ok(t) => {
                                buffer.push_trajectory(t, learner.her_k, delta, &mut rng);
                                demo_count += 1;
                            }
                            Err(LearnError::Core(dynfold_core::Error::Numeric { .. })) => discarded += 1,
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            for _ in 0..schedule.grad_steps {
                let batch = match sample_batch(&buffer, learner.batch_size, &learner.net, &mut rng) {
                    Ok(b) => b,
                    Err(LearnError::NotReady { .. }) => break,
                    Err(e) => return Err(e),
                };
                let r = agent.update(&batch, &mut rng)?;
                sums.critic1 += r.critic1;
                sums.critic2 += r.critic2;
                sums.actor += r.actor;
                sums.alpha += r.alpha;
                sums.entropy += r.entropy;
                sums.aux += r.aux;
                updates += 1;
            }
        }
        let n = updates.max(1) as f64;
        let losses = LossReport {
            critic1: sums.critic1 / n,
            critic2: sums.critic2 / n,
            actor: sums.actor / n,
            alpha: sums.alpha / n,
            entropy: sums.entropy / n,
            aux: sums.aux / n,
        };
        let (success_rate, mean_d_sum) = summarize(&evaluate_agent(agent, &setup.env, &specs)?).unwrap_or((0.0, 0.0));
        let row = EpochMetrics {
            epoch,
            success_rate,
            mean_d_sum,
            losses,
            updates,
            env_steps,
            demo_trajectories: demo_count,
            discarded_episodes: discarded,
        };
        on_epoch(&row, agent)?;
        history.push(row);
    }
    Ok(history)
}
