//! Cloth-dynamics randomization and demonstration-scored fabric identification.
//!
//! Candidate fabrics are drawn uniformly from [`ParamRanges`], each candidate
//! replays every demonstration open-loop, and the `M` candidates with the
//! highest mean final-step reward form the training pool.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloth::ClothParams;
use crate::env::{cloth_origin, rollout_actions, sample_goal, EpisodeConfig, EpisodeSpec, FoldEnv, Goal, ObservationMode, ACTION_DIM};
use crate::render::{CameraConfig, VisualConfig};
use crate::{Error, Range, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    /// Inclusive integer range.
    pub grid_n: [usize; 2],
    pub side_length: Range,
    pub mass_per_point: Range,
    pub k_struct: Range,
    pub k_shear: Range,
    pub k_bend: Range,
    pub damping: Range,
    pub air_drag: Range,
    pub friction: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            grid_n: [9, 9],
            side_length: Range::fixed(0.3),
            mass_per_point: Range(0.002, 0.005),
            k_struct: Range(50.0, 200.0),
            k_shear: Range(5.0, 40.0),
            k_bend: Range(0.5, 5.0),
            damping: Range(0.02, 0.1),
            air_drag: Range(0.001, 0.02),
            friction: Range(0.2, 0.8),
        }
    }
}

impl ParamRanges {
    /// Ranges spanning `[value / factor, value * factor]` around `params` (geometry fixed).
    pub fn around(params: &ClothParams, factor: f64) -> Self {
        let r = |v: f64| Range(v / factor, v * factor);
        Self {
            grid_n: [params.grid_n, params.grid_n],
            side_length: Range::fixed(params.side_length),
            mass_per_point: r(params.mass_per_point),
            k_struct: r(params.k_struct),
            k_shear: r(params.k_shear),
            k_bend: r(params.k_bend),
            damping: r(params.damping),
            air_drag: r(params.air_drag),
            friction: r(params.friction),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n[0] > self.grid_n[1] || self.grid_n[0] < 3 {
            return Err(Error::Config(format!("grid_n range {:?} is invalid", self.grid_n)));
        }
        let named = [
            ("side_length", self.side_length),
            ("mass_per_point", self.mass_per_point),
            ("k_struct", self.k_struct),
            ("k_shear", self.k_shear),
            ("k_bend", self.k_bend),
            ("damping", self.damping),
            ("air_drag", self.air_drag),
            ("friction", self.friction),
        ];
        for (name, r) in named {
            r.validate(name)?;
            if r.low() <= 0.0 {
                return Err(Error::Config(format!("range {name} must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// Draw one fabric, every field independently uniform in its range.
pub fn sample_cloth_params<R: Rng + ?Sized>(rng: &mut R, ranges: &ParamRanges) -> Result<ClothParams> {
    ranges.validate()?;
    let grid_n = rng.random_range(ranges.grid_n[0]..=ranges.grid_n[1]);
    let params = ClothParams {
        grid_n,
        side_length: ranges.side_length.sample(rng),
        mass_per_point: ranges.mass_per_point.sample(rng),
        k_struct: ranges.k_struct.sample(rng),
        k_shear: ranges.k_shear.sample(rng),
        k_bend: ranges.k_bend.sample(rng),
        damping: ranges.damping.sample(rng),
        air_drag: ranges.air_drag.sample(rng),
        friction: ranges.friction.sample(rng),
    };
    params.validate()?;
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub goal: Goal,
    pub annotation: String,
}

impl Demonstration {
    pub fn validate(&self, max_steps: usize) -> Result<()> {
        if self.actions.is_empty() || self.actions.len() > max_steps {
            return Err(Error::Config(format!(
                "demonstration must have 1..={max_steps} actions, has {}",
                self.actions.len()
            )));
        }
        if self.actions.iter().flatten().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(Error::Config("demonstration action outside [-1, 1]".into()));
        }
        Ok(())
    }
}

/// Demonstrations together with the fabric they were recorded on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub reference: ClothParams,
    pub demos: Vec<Demonstration>,
}

impl DemoSet {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Waypoints of the scripted fold: lift and carry, approach the goal, settle on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertPlan {
    /// Fraction of the side length travelled toward the fold target during the lift.
    pub carry_fraction: f64,
    pub lift_height: f64,
    /// Offset along y at the top of the arc, toward the far edge.
    pub lateral: f64,
    /// x offset of the approach point relative to g1.
    pub overshoot: f64,
    /// Height of the approach point above g1.
    pub approach_height: f64,
}

impl ExpertPlan {
    pub fn waypoints(&self, start: Vec3, goal: &Goal, side_length: f64) -> [Vec3; 3] {
        [
            start + Vec3::new(-self.carry_fraction * side_length, self.lateral, self.lift_height),
            goal.g1 + Vec3::new(self.overshoot, 0.0, self.approach_height),
            goal.g1,
        ]
    }

    /// Plans tried in order by [`search_expert`].
    pub fn candidates() -> Vec<ExpertPlan> {
        let mut out = Vec::new();
        for carry_fraction in [0.5, 0.65, 0.8] {
            for lift_height in [0.1, 0.15, 0.2, 0.25] {
                for lateral in [0.06, 0.09, 0.12] {
                    for overshoot in [-0.12, -0.09, -0.06] {
                        for approach_height in [0.0, 0.03, 0.06] {
                            out.push(ExpertPlan { carry_fraction, lift_height, lateral, overshoot, approach_height });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Greedy tracking of waypoints in commanded-position space.
///
/// The commanded position advances by `action * scale` per step, so the plan
/// is open-loop and independent of the cloth.
pub fn track_waypoints(start: Vec3, waypoints: &[Vec3], scale: f64, steps: usize) -> Vec<[f64; ACTION_DIM]> {
    let mut reference = start;
    let mut next = 0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        while next < waypoints.len() && (waypoints[next] - reference).norm() < 1e-9 {
            next += 1;
        }
        let action = match waypoints.get(next) {
            Some(w) => ((w - reference) / scale).map(|c| c.clamp(-1.0, 1.0)),
            None => Vec3::zeros(),
        };
        reference += action * scale;
        out.push(action.into());
    }
    out
}

fn replay_env(cfg: &EpisodeConfig) -> Result<FoldEnv> {
    FoldEnv::new(EpisodeConfig { observation: ObservationMode::State, ..cfg.clone() })
}

fn replay_spec(params: &ClothParams, goal: Goal) -> EpisodeSpec {
    EpisodeSpec {
        fabric: 0,
        params: params.clone(),
        goal,
        camera: CameraConfig::default(),
        visual: VisualConfig::default(),
        seed: 0,
    }
}

/// Final-step reward and success of an open-loop replay.
pub fn replay_final(
    params: &ClothParams,
    goal: Goal,
    actions: &[[f64; ACTION_DIM]],
    cfg: &EpisodeConfig,
) -> Result<(f64, bool)> {
    let mut env = replay_env(cfg)?;
    let results = rollout_actions(&mut env, replay_spec(params, goal), actions)?;
    let last = results.last().expect("rollout always contains the reset");
    if !last.full_state.tracked.0.iter().all(|p| p.position.iter().chain(p.velocity.iter()).all(|c| c.is_finite())) {
        return Err(Error::Numeric { index: 0, what: "replay state".into() });
    }
    Ok((last.reward, last.info.metrics.success))
}

/// Scripted fold for `goal` on `reference`; accepted only if it succeeds there.
pub fn scripted_expert(reference: &ClothParams, goal: Goal, plan: &ExpertPlan, cfg: &EpisodeConfig) -> Result<Demonstration> {
    let origin = cloth_origin(reference);
    let n = reference.grid_n;
    let start = origin + Vec3::new((n - 1) as f64 * reference.spacing(), 0.0, 0.0);
    let waypoints = plan.waypoints(start, &goal, reference.side_length);
    let actions = track_waypoints(start, &waypoints, cfg.action_scale, cfg.max_steps);
    let (reward, success) = replay_final(reference, goal, &actions, cfg)?;
    if !success {
        return Err(Error::Expert(format!("plan {plan:?} ends with reward {reward}")));
    }
    Ok(Demonstration {
        actions,
        goal,
        annotation: format!(
            "scripted fold: carry {:.2}, lift {:.2} m, lateral {:.2} m, overshoot {:.2} m, approach {:.2} m; final reward {reward:.4}",
            plan.carry_fraction, plan.lift_height, plan.lateral, plan.overshoot, plan.approach_height
        ),
    })
}

/// Try every candidate plan and keep the successful one with the highest final reward.
pub fn search_expert(reference: &ClothParams, goal: Goal, cfg: &EpisodeConfig) -> Result<Demonstration> {
    let plans = ExpertPlan::candidates();
    let scored: Vec<Option<(f64, Demonstration)>> = plans
        .par_iter()
        .map(|plan| {
            let demo = scripted_expert(reference, goal, plan, cfg).ok()?;
            let (reward, _) = replay_final(reference, goal, &demo.actions, cfg).ok()?;
            Some((reward, demo))
        })
        .collect();
    let mut best: Option<(f64, Demonstration)> = None;
    for (reward, demo) in scored.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| reward > *b) {
            best = Some((reward, demo));
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| Error::Expert(format!("no candidate plan succeeds for goal {goal:?}")))
}

/// `count` demonstrations for goals sampled around the nominal fold targets.
pub fn generate_demos(reference: &ClothParams, cfg: &EpisodeConfig, count: usize, seed: u64) -> Result<DemoSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demos = Vec::with_capacity(count);
    let mut attempts = 0;
    while demos.len() < count {
        if attempts >= 4 * count.max(1) {
            return Err(Error::Expert(format!(
                "only {} of {count} demonstrations found after {attempts} goals",
                demos.len()
            )));
        }
        attempts += 1;
        let goal = sample_goal(&mut rng, reference, cfg.goal_radius)?;
        if let Ok(demo) = search_expert(reference, goal, cfg) {
            demos.push(demo);
        }
    }
    Ok(DemoSet { reference: reference.clone(), demos })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateScore {
    pub score: f64,
    pub blew_up: bool,
}

/// Mean final-step reward of the demonstrations replayed on `candidate`.
pub fn evaluate_candidate(candidate: &ClothParams, demos: &[Demonstration], cfg: &EpisodeConfig) -> Result<CandidateScore> {
    if demos.is_empty() {
        return Err(Error::Config("no demonstrations to score against".into()));
    }
    let mut total = 0.0;
    for demo in demos {
        match replay_final(candidate, demo.goal, &demo.actions, cfg) {
            Ok((reward, _)) => total += reward,
            Err(Error::Numeric { .. }) | Err(Error::Params(_)) => {
                return Ok(CandidateScore { score: -1.0, blew_up: true });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CandidateScore { score: total / demos.len() as f64, blew_up: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub params: ClothParams,
    pub score: f64,
    /// Position in the candidate sampling order.
    pub candidate: usize,
}

/// The identified training fabrics, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricPool {
    pub seed: u64,
    pub candidates: usize,
    pub entries: Vec<PoolEntry>,
}

impl FabricPool {
    pub fn params(&self) -> Vec<ClothParams> {
        self.entries.iter().map(|e| e.params.clone()).collect()
    }

    /// Pool holding only the best entry.
    pub fn best_only(&self) -> Self {
        Self { seed: self.seed, candidates: self.candidates, entries: self.entries.iter().take(1).cloned().collect() }
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Candidate list in sampling order: the optional anchor first, then uniform draws.
pub fn sample_candidates(
    seed: u64,
    ranges: &ParamRanges,
    n_candidates: usize,
    anchor: Option<&ClothParams>,
) -> Result<Vec<ClothParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_candidates);
    if let Some(anchor) = anchor {
        out.push(anchor.clone());
    }
    while out.len() < n_candidates {
        out.push(sample_cloth_params(&mut rng, ranges)?);
    }
    out.truncate(n_candidates);
    Ok(out)
}

/// Indices of the `m` best scores, descending; ties keep the earlier index.
pub fn select_top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

/// Sample, score and rank candidates; return the `m` best as the training pool.
///
/// `anchor` (typically the demonstration fabric) is scored as candidate 0.
pub fn identify_top_m(
    seed: u64,
    ranges: &ParamRanges,
    demos: &[Demonstration],
    n_candidates: usize,
    m: usize,
    cfg: &EpisodeConfig,
    anchor: Option<&ClothParams>,
) -> Result<FabricPool> {
    if m == 0 || n_candidates < m {
        return Err(Error::Config(format!("need n_candidates >= M >= 1, got {n_candidates} and {m}")));
    }
    let candidates = sample_candidates(seed, ranges, n_candidates, anchor)?;
    let scores = candidates
        .par_iter()
        .map(|c| evaluate_candidate(c, demos, cfg))
        .collect::<Result<Vec<_>>>()?;
    let failures: Vec<usize> = scores.iter().enumerate().filter(|(_, s)| s.blew_up).map(|(i, _)| i).collect();
    let finite = scores.len() - failures.len();
    if finite < m {
        return Err(Error::Identification { finite, required: m, failures });
    }
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let entries = select_top_m(&values, m)
        .into_iter()
        .map(|i| PoolEntry { params: candidates[i].clone(), score: values[i], candidate: i })
        .collect();
    Ok(FabricPool { seed, candidates: n_candidates, entries })
}
