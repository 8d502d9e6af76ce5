//! Goal-conditioned dynamic sideways-fold episode.
//!
//! The cloth lies flat on the table, centred on the world origin, with its
//! grasped corner p1 rigidly attached to the effector. A successful fold brings
//! p1 and the other corner on the grasped edge (p0) onto the goals sampled next
//! to the corners across the fold line.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloth::{Cloth, ClothParams, ClothState, TrackedPoint, TrackedPoints, TRACKED_POINTS};
use crate::effector::{interpolate_setpoint, osc_command, step_effector, ControllerGains, EffectorState};
use crate::render::{corner_labels, render, sample_visual_config, CameraConfig, GrayImage, VisualConfig, VisualRanges};
use crate::{Error, Result, Vec3};

/// Scale applied to positions (m) before they reach a network.
pub const POSITION_SCALE: f64 = 10.0;
pub const ACTION_DIM: usize = 3;
pub const GOAL_DIM: usize = 6;
pub const TRACKED_FEATURES: usize = 6 * TRACKED_POINTS;
pub const LABEL_DIM: usize = 2 * TRACKED_POINTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// Rendered grayscale image (deployable).
    Image,
    /// Tracked cloth points (simulation-only baseline).
    State,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    /// Control iterations per policy step.
    pub substeps: usize,
    /// Duration of one control iteration, s.
    pub sim_dt: f64,
    /// Cloth integration steps per control iteration.
    pub physics_substeps: usize,
    pub delta: f64,
    pub action_scale: f64,
    pub hold_limit: usize,
    pub goal_radius: f64,
    pub effector_mass: f64,
    pub kp: f64,
    pub kd: f64,
    pub gravity: Vec3,
    pub table: bool,
    pub observation: ObservationMode,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        let kp = 300.0;
        let effector_mass = 1.0;
        Self {
            max_steps: 25,
            substeps: 10,
            sim_dt: 0.010,
            physics_substeps: 5,
            delta: 0.04,
            action_scale: 0.03,
            hold_limit: 10,
            goal_radius: 0.02,
            effector_mass,
            kp,
            kd: 2.0 * (kp * effector_mass).sqrt(),
            gravity: crate::gravity(),
            table: true,
            observation: ObservationMode::Image,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.substeps == 0 || self.physics_substeps == 0 {
            return Err(Error::Config("step counts must be positive".into()));
        }
        let positive = [
            ("sim_dt", self.sim_dt),
            ("delta", self.delta),
            ("action_scale", self.action_scale),
            ("goal_radius", self.goal_radius),
            ("effector_mass", self.effector_mass),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("env.{name} must be > 0, got {v}")));
            }
        }
        if self.hold_limit == 0 {
            return Err(Error::Config("env.hold_limit must be positive".into()));
        }
        self.gains().validate()
    }

    pub fn gains(&self) -> ControllerGains {
        ControllerGains { kp: Vec3::repeat(self.kp), kd: Vec3::repeat(self.kd) }
    }

    /// Simulated time covered by one policy step.
    pub fn policy_dt(&self) -> f64 {
        self.substeps as f64 * self.sim_dt
    }
}

/// Target positions for p0 and p1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub g0: Vec3,
    pub g1: Vec3,
}

impl Goal {
    pub fn features(&self) -> [f64; GOAL_DIM] {
        let s = POSITION_SCALE;
        [self.g0.x * s, self.g0.y * s, self.g0.z * s, self.g1.x * s, self.g1.y * s, self.g1.z * s]
    }

    pub fn to_array(&self) -> [f64; GOAL_DIM] {
        [self.g0.x, self.g0.y, self.g0.z, self.g1.x, self.g1.y, self.g1.z]
    }

    pub fn from_array(a: [f64; GOAL_DIM]) -> Self {
        Self { g0: Vec3::new(a[0], a[1], a[2]), g1: Vec3::new(a[3], a[4], a[5]) }
    }

    /// The corner positions that would exactly satisfy this goal.
    pub fn achieved(tracked: &TrackedPoints) -> Self {
        Self { g0: tracked.p0(), g1: tracked.p1() }
    }
}

/// Per-step reward: `0.5 * sum(1 - d_i / delta)` when both corners are within
/// `delta`, otherwise -1.
pub fn reward(p0: Vec3, p1: Vec3, g0: Vec3, g1: Vec3, delta: f64) -> f64 {
    let d0 = (p0 - g0).norm();
    let d1 = (p1 - g1).norm();
    if d0 <= delta && d1 <= delta {
        0.5 * ((1.0 - d0 / delta) + (1.0 - d1 / delta))
    } else {
        -1.0
    }
}

pub fn goal_reward(achieved: &Goal, goal: &Goal, delta: f64) -> f64 {
    reward(achieved.g0, achieved.g1, goal.g0, goal.g1, delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub d0: f64,
    pub d1: f64,
    pub d_sum: f64,
    pub success: bool,
}

pub fn metrics(p0: Vec3, p1: Vec3, goal: &Goal, delta: f64) -> Metrics {
    let d0 = (p0 - goal.g0).norm();
    let d1 = (p1 - goal.g1).norm();
    Metrics { d0, d1, d_sum: d0 + d1, success: d0 <= delta && d1 <= delta }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    /// p1 stayed within delta of its goal for more than `hold_limit` consecutive steps.
    Hold,
    Timeout,
}

/// Termination from the per-step history of d1 (one entry per completed policy step).
pub fn check_termination(d1_history: &[f64], delta: f64, hold_limit: usize, max_steps: usize) -> Option<DoneReason> {
    let consecutive = d1_history.iter().rev().take_while(|&&d| d <= delta).count();
    if consecutive > hold_limit {
        Some(DoneReason::Hold)
    } else if d1_history.len() >= max_steps {
        Some(DoneReason::Timeout)
    } else {
        None
    }
}

/// What the policy is allowed to see.
#[derive(Clone, Debug, PartialEq)]
pub enum ActorView {
    Image(Arc<GrayImage>),
    State(Arc<TrackedPoints>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub view: ActorView,
    pub prev_action: [f64; ACTION_DIM],
    pub goal: Goal,
}

impl Observation {
    pub fn with_goal(&self, goal: Goal) -> Self {
        Self { view: self.view.clone(), prev_action: self.prev_action, goal }
    }
}

/// Privileged simulator state consumed by the critics.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub tracked: Arc<TrackedPoints>,
    pub goal: Goal,
}

impl FullState {
    pub fn with_goal(&self, goal: Goal) -> Self {
        Self { tracked: self.tracked.clone(), goal }
    }

    pub fn achieved(&self) -> Goal {
        Goal::achieved(&self.tracked)
    }
}

/// Network features of the tracked points: scaled positions followed by velocities, per point.
pub fn tracked_features(tracked: &TrackedPoints) -> [f64; TRACKED_FEATURES] {
    let mut out = [0.0; TRACKED_FEATURES];
    for (i, p) in tracked.0.iter().enumerate() {
        for k in 0..3 {
            out[6 * i + k] = p.position[k] * POSITION_SCALE;
            out[6 * i + 3 + k] = p.velocity[k];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub metrics: Metrics,
    pub reason: Option<DoneReason>,
    pub action_clamped: bool,
    pub corner_labels: Vec<f64>,
    pub effector: Vec3,
    pub fabric: usize,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub full_state: FullState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Everything that pins down one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSpec {
    pub fabric: usize,
    pub params: ClothParams,
    pub goal: Goal,
    pub camera: CameraConfig,
    pub visual: VisualConfig,
    pub seed: u64,
}

/// The corner-adjacent positions across the fold line on a freshly built cloth.
pub fn nominal_goal(params: &ClothParams) -> Result<Goal> {
    let cloth = Cloth::new(params.clone(), cloth_origin(params))?;
    Ok(Goal {
        g0: cloth.state.positions[cloth.landmarks.p0_partner()],
        g1: cloth.state.positions[cloth.landmarks.p1_partner()],
    })
}

/// Cloth corner `(0, 0)` such that the square is centred on the world origin.
pub fn cloth_origin(params: &ClothParams) -> Vec3 {
    Vec3::new(-0.5 * params.side_length, -0.5 * params.side_length, 0.0)
}

fn ball_sample<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Goals jittered uniformly within `radius` of the nominal fold targets.
pub fn sample_goal<R: Rng + ?Sized>(rng: &mut R, params: &ClothParams, radius: f64) -> Result<Goal> {
    let nominal = nominal_goal(params)?;
    Ok(Goal { g0: nominal.g0 + ball_sample(rng, radius), g1: nominal.g1 + ball_sample(rng, radius) })
}

pub struct FoldEnv {
    cfg: EpisodeConfig,
    cloth: Option<Cloth>,
    effector: EffectorState,
    reference: Vec3,
    setpoint: Vec3,
    spec: Option<EpisodeSpec>,
    prev_action: Vec3,
    d1_history: Vec<f64>,
    done: bool,
}

impl FoldEnv {
    pub fn new(cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            effector: EffectorState::at_rest(Vec3::zeros(), cfg.effector_mass),
            cfg,
            cloth: None,
            reference: Vec3::zeros(),
            setpoint: Vec3::zeros(),
            spec: None,
            prev_action: Vec3::zeros(),
            d1_history: Vec::new(),
            done: true,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn cloth(&self) -> Option<&Cloth> {
        self.cloth.as_ref()
    }

    pub fn effector(&self) -> &EffectorState {
        &self.effector
    }

    pub fn spec(&self) -> Option<&EpisodeSpec> {
        self.spec.as_ref()
    }

    /// Commanded end-effector position `x_t` (the running sum of scaled actions).
    pub fn reference(&self) -> Vec3 {
        self.reference
    }

    pub fn setpoint(&self) -> Vec3 {
        self.setpoint
    }

    pub fn steps_taken(&self) -> usize {
        self.d1_history.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Draw an episode seed from `rng` and reset from it.
    pub fn reset<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        pool: &[ClothParams],
        visual_ranges: &VisualRanges,
    ) -> Result<StepResult> {
        let seed = rng.random();
        let spec = self.sample_episode(seed, pool, visual_ranges)?;
        self.reset_with(spec)
    }

    /// Sample fabric, goal and visuals for the episode identified by `seed`.
    pub fn sample_episode(&self, seed: u64, pool: &[ClothParams], visual_ranges: &VisualRanges) -> Result<EpisodeSpec> {
        if pool.is_empty() {
            return Err(Error::Config("cloth parameter pool is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fabric = rng.random_range(0..pool.len());
        let params = pool[fabric].clone();
        let goal = sample_goal(&mut rng, &params, self.cfg.goal_radius)?;
        let (camera, visual) = sample_visual_config(&mut rng, visual_ranges, Vec3::zeros())?;
        Ok(EpisodeSpec { fabric, params, goal, camera, visual, seed })
    }

    pub fn reset_with(&mut self, spec: EpisodeSpec) -> Result<StepResult> {
        let cloth = Cloth::new(spec.params.clone(), cloth_origin(&spec.params))?;
        let grasp = cloth.grasped_position();
        self.effector = EffectorState::at_rest(grasp, self.cfg.effector_mass);
        self.reference = grasp;
        self.setpoint = grasp;
        self.cloth = Some(cloth);
        self.spec = Some(spec);
        self.prev_action = Vec3::zeros();
        self.d1_history.clear();
        self.done = false;
        self.observe(0.0, None, false)
    }

    /// One policy step: scale the action, run the control loop, score the result.
    pub fn step(&mut self, action: [f64; ACTION_DIM]) -> Result<StepResult> {
        if self.done || self.cloth.is_none() {
            return Err(Error::EpisodeInactive);
        }
        let raw = Vec3::from(action);
        if !raw.iter().all(|c| c.is_finite()) {
            return Err(Error::Numeric { index: 0, what: "action".into() });
        }
        let clamped = raw.map(|c| c.clamp(-1.0, 1.0));
        let action_clamped = clamped != raw;
        let displacement = clamped * self.cfg.action_scale;

        let cfg = &self.cfg;
        let gains = cfg.gains();
        let cloth = self.cloth.as_mut().expect("checked above");
        let table = cfg.table.then_some(cloth.origin.z);
        let cloth_dt = cfg.sim_dt / cfg.physics_substeps as f64;
        for _ in 0..cfg.substeps {
            self.setpoint = interpolate_setpoint(self.reference, displacement, self.setpoint);
            let force = osc_command(&self.effector, self.setpoint, &gains, cfg.gravity);
            let start = self.effector.position;
            self.effector = step_effector(&self.effector, force, cfg.gravity, cfg.sim_dt)?;
            let end = self.effector.position;
            let velocity = self.effector.velocity;
            for s in 1..=cfg.physics_substeps {
                let grasp = if s == cfg.physics_substeps {
                    end
                } else {
                    start + velocity * (cloth_dt * s as f64)
                };
                cloth.step(grasp, velocity, cfg.gravity, cloth_dt, table)?;
            }
        }
        self.reference += displacement;
        self.prev_action = clamped;

        let tracked = cloth.tracked();
        let goal = self.spec.as_ref().expect("active episode").goal;
        let m = metrics(tracked.p0(), tracked.p1(), &goal, self.cfg.delta);
        self.d1_history.push(m.d1);
        let r = reward(tracked.p0(), tracked.p1(), goal.g0, goal.g1, self.cfg.delta);
        let reason = check_termination(&self.d1_history, self.cfg.delta, self.cfg.hold_limit, self.cfg.max_steps);
        self.done = reason.is_some();
        self.observe(r, reason, action_clamped)
    }

    fn observe(&self, reward: f64, reason: Option<DoneReason>, action_clamped: bool) -> Result<StepResult> {
        let cloth = self.cloth.as_ref().ok_or(Error::EpisodeInactive)?;
        let spec = self.spec.as_ref().ok_or(Error::EpisodeInactive)?;
        let tracked = Arc::new(cloth.tracked());
        let view = match self.cfg.observation {
            ObservationMode::Image => {
                let noise_seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(self.d1_history.len() as u64);
                ActorView::Image(Arc::new(render(
                    &cloth.state,
                    cloth.params.grid_n,
                    &spec.camera,
                    &spec.visual,
                    noise_seed,
                )?))
            }
            ObservationMode::State => ActorView::State(tracked.clone()),
        };
        let m = metrics(tracked.p0(), tracked.p1(), &spec.goal, self.cfg.delta);
        let labels = corner_labels(&tracked, &spec.camera).to_vec();
        Ok(StepResult {
            observation: Observation { view, prev_action: self.prev_action.into(), goal: spec.goal },
            full_state: FullState { tracked, goal: spec.goal },
            reward,
            done: self.done,
            info: StepInfo {
                step: self.d1_history.len(),
                metrics: m,
                reason,
                action_clamped,
                corner_labels: labels,
                effector: self.effector.position,
                fabric: spec.fabric,
            },
        })
    }

    /// One trajectory-log record describing the current instant.
    pub fn log_record(&self, result: &StepResult, action: [f64; ACTION_DIM]) -> Result<TrajectoryRecord> {
        let cloth = self.cloth.as_ref().ok_or(Error::EpisodeInactive)?;
        let spec = self.spec.as_ref().ok_or(Error::EpisodeInactive)?;
        Ok(TrajectoryRecord {
            seed: spec.seed,
            step: result.info.step,
            action,
            effector: self.effector.position,
            tracked: result.full_state.tracked.0.to_vec(),
            reward: result.reward,
            d0: result.info.metrics.d0,
            d1: result.info.metrics.d1,
            done: result.done,
            goal: spec.goal,
            grid_n: cloth.params.grid_n,
            state: cloth.state.clone(),
            camera: spec.camera.clone(),
        })
    }
}

/// One line of the JSON-lines trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub step: usize,
    pub action: [f64; ACTION_DIM],
    pub effector: Vec3,
    pub tracked: Vec<TrackedPoint>,
    pub reward: f64,
    pub d0: f64,
    pub d1: f64,
    pub done: bool,
    pub goal: Goal,
    pub grid_n: usize,
    pub state: ClothState,
    pub camera: CameraConfig,
}

impl TrajectoryRecord {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parse a whole log; errors carry the 1-based line number.
    pub fn parse_log(text: &str) -> Result<Vec<Self>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() }))
            .collect()
    }

    pub fn d_sum(&self) -> f64 {
        self.d0 + self.d1
    }
}

/// Replay a fixed action sequence from `spec`, stopping at termination.
pub fn rollout_actions(env: &mut FoldEnv, spec: EpisodeSpec, actions: &[[f64; ACTION_DIM]]) -> Result<Vec<StepResult>> {
    let mut out = vec![env.reset_with(spec)?];
    for a in actions {
        let r = env.step(*a)?;
        let done = r.done;
        out.push(r);
        if done {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_law_points() {
        let o = Vec3::zeros();
        let d = 0.04;
        assert_eq!(reward(o, o, o, o, d), 1.0);
        let at = Vec3::new(d, 0.0, 0.0);
        assert!(reward(at, at, o, o, d).abs() < 1e-15);
        assert_eq!(reward(Vec3::new(2.0 * d, 0.0, 0.0), o, o, o, d), -1.0);
    }

    #[test]
    fn metrics_examples() {
        let g = Goal { g0: Vec3::zeros(), g1: Vec3::zeros() };
        let m = metrics(Vec3::zeros(), Vec3::zeros(), &g, 0.04);
        assert_eq!(m.d_sum, 0.0);
        assert!(m.success);
        let m = metrics(Vec3::new(0.03, 0.0, 0.0), Vec3::new(0.0, 0.02, 0.0), &g, 0.04);
        assert!((m.d_sum - 0.05).abs() < 1e-15);
        assert!(m.success);
        let m = metrics(Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.0, 0.01, 0.0), &g, 0.04);
        assert!(!m.success);
    }

    #[test]
    fn hold_rule_is_strict_and_consecutive() {
        let inside = vec![0.01; 11];
        assert_eq!(check_termination(&inside, 0.04, 10, 25), Some(DoneReason::Hold));
        assert_eq!(check_termination(&inside[..10], 0.04, 10, 25), None);
        let mut broken = vec![0.01; 10];
        broken.push(0.05);
        assert_eq!(check_termination(&broken, 0.04, 10, 25), None);
        let never = vec![1.0; 25];
        assert_eq!(check_termination(&never, 0.04, 10, 25), Some(DoneReason::Timeout));
        assert_eq!(check_termination(&never[..24], 0.04, 10, 25), None);
    }

    fn env(mode: ObservationMode) -> FoldEnv {
        FoldEnv::new(EpisodeConfig { observation: mode, ..EpisodeConfig::default() }).unwrap()
    }

    #[test]
    fn empty_pool_is_config_error() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(e.reset(&mut rng, &[], &VisualRanges::default()), Err(Error::Config(_))));
    }

    #[test]
    fn step_before_reset_fails() {
        let mut e = env(ObservationMode::State);
        assert!(matches!(e.step([0.0; 3]), Err(Error::EpisodeInactive)));
    }

    #[test]
    fn goals_respect_radius() {
        let e = env(ObservationMode::State);
        let params = ClothParams::default();
        let nominal = nominal_goal(&params).unwrap();
        for seed in 0..1000 {
            let spec = e.sample_episode(seed, std::slice::from_ref(&params), &VisualRanges::default()).unwrap();
            assert!((spec.goal.g0 - nominal.g0).norm() <= 0.02 + 1e-12);
            assert!((spec.goal.g1 - nominal.g1).norm() <= 0.02 + 1e-12);
        }
    }

    #[test]
    fn nominal_goal_is_reflection_across_fold_line() {
        let params = ClothParams::default();
        let cloth = Cloth::new(params.clone(), cloth_origin(&params)).unwrap();
        let goal = nominal_goal(&params).unwrap();
        let t = cloth.tracked();
        let fold_x = cloth.fold_line_x();
        assert!((goal.g1.x - (2.0 * fold_x - t.p1().x)).abs() < 1e-12);
        assert!((goal.g0.x - (2.0 * fold_x - t.p0().x)).abs() < 1e-12);
        assert_eq!(goal.g1.y, t.p1().y);
        assert_eq!(goal.g0.y, t.p0().y);
    }

    #[test]
    fn zero_action_holds_position() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r0 = e.reset(&mut rng, &[ClothParams::default()], &VisualRanges::default()).unwrap();
        let r1 = e.step([0.0; 3]).unwrap();
        assert!((r1.info.effector - r0.info.effector).norm() < 1e-3);
    }

    #[test]
    fn full_action_sets_exact_target() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        e.reset(&mut rng, &[ClothParams::default()], &VisualRanges::default()).unwrap();
        let before = e.reference();
        e.step([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.reference(), before + Vec3::new(0.03, 0.0, 0.0));
    }

    #[test]
    fn clamping_is_flagged() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        e.reset(&mut rng, &[ClothParams::default()], &VisualRanges::default()).unwrap();
        let before = e.reference();
        let r = e.step([2.0, -3.0, 0.5]).unwrap();
        assert!(r.info.action_clamped);
        assert_eq!(r.observation.prev_action, [1.0, -1.0, 0.5]);
        assert!((e.reference() - before - Vec3::new(0.03, -0.03, 0.015)).norm() < 1e-15);
    }

    #[test]
    fn episode_times_out_at_25() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        e.reset(&mut rng, &[ClothParams::default()], &VisualRanges::default()).unwrap();
        for i in 1..=25 {
            let r = e.step([0.0, 0.0, 0.0]).unwrap();
            assert_eq!(r.done, i == 25);
            if i == 25 {
                assert_eq!(r.info.reason, Some(DoneReason::Timeout));
            }
        }
        assert!(e.step([0.0; 3]).is_err());
    }

    #[test]
    fn rigid_link_holds_after_steps() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        e.reset(&mut rng, &[ClothParams::default()], &VisualRanges::default()).unwrap();
        for a in [[-1.0, 0.0, 1.0], [-1.0, 0.2, 0.5], [0.3, 0.0, -1.0]] {
            let r = e.step(a).unwrap();
            assert_eq!(r.full_state.tracked.p1(), e.effector().position);
        }
    }

    #[test]
    fn image_mode_renders_visible_cloth() {
        let mut e = env(ObservationMode::Image);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = e.reset(&mut rng, &[ClothParams::default()], &VisualRanges::default()).unwrap();
        match &r.observation.view {
            ActorView::Image(img) => {
                assert_eq!((img.width, img.height), (100, 100));
                assert!(img.pixels.iter().filter(|&&p| p > 60).count() > 100);
            }
            ActorView::State(_) => panic!("image mode produced state view"),
        }
        assert_eq!(r.info.corner_labels.len(), LABEL_DIM);
        assert!(r.info.corner_labels.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn trajectory_log_round_trip_and_line_numbers() {
        let mut e = env(ObservationMode::State);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        e.reset(&mut rng, &[ClothParams { grid_n: 3, ..ClothParams::default() }], &VisualRanges::default()).unwrap();
        let r = e.step([0.5, 0.0, 0.5]).unwrap();
        let rec = e.log_record(&r, [0.5, 0.0, 0.5]).unwrap();
        let line = rec.to_line().unwrap();
        let text = format!("{line}\n{}\n", &line[..line.len() / 2]);
        let parsed = TrajectoryRecord::parse_log(&line).unwrap();
        assert_eq!(parsed[0], rec);
        match TrajectoryRecord::parse_log(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
