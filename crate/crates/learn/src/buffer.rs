//! Transitions, hindsight relabeling, demonstration mixing and the replay buffer.

use std::collections::VecDeque;
use std::sync::Arc;

use dynfold_core::env::{goal_reward, FullState, Goal, Observation, StepResult, ACTION_DIM, LABEL_DIM};
use rand::Rng;

use crate::nn::Mat;
use crate::policy::{actor_batch, critic_states, NetConfig};
use crate::sac::Batch;
use crate::{LearnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub full_state: FullState,
    pub observation: Observation,
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub next_full_state: FullState,
    pub next_observation: Observation,
    pub goal: Goal,
    /// Corner positions reached by this step, i.e. those of `next_full_state`.
    pub achieved_goal: Goal,
    /// Rendered corner labels of `observation`.
    pub labels: Arc<[f64; LABEL_DIM]>,
    pub done: bool,
    pub demo: bool,
}

impl Transition {
    /// Copy with every goal replaced and the reward recomputed.
    pub fn relabeled(&self, goal: Goal, delta: f64) -> Self {
        Self {
            full_state: self.full_state.with_goal(goal),
            observation: self.observation.with_goal(goal),
            next_full_state: self.next_full_state.with_goal(goal),
            next_observation: self.next_observation.with_goal(goal),
            reward: goal_reward(&self.achieved_goal, &goal, delta),
            goal,
            ..self.clone()
        }
    }
}

/// Pair consecutive step results into transitions.
///
/// `steps[0]` is the reset result and `steps[i + 1]` follows `actions[i]`.
pub fn episode_transitions(steps: &[StepResult], actions: &[[f64; ACTION_DIM]], demo: bool) -> Vec<Transition> {
    assert_eq!(steps.len(), actions.len() + 1, "one more step result than actions");
    steps
        .windows(2)
        .zip(actions)
        .map(|(w, a)| {
            let (cur, next) = (&w[0], &w[1]);
            let labels: [f64; LABEL_DIM] = cur.info.corner_labels.as_slice().try_into().expect("label width");
            Transition {
                full_state: cur.full_state.clone(),
                observation: cur.observation.clone(),
                action: a.map(|c| c.clamp(-1.0, 1.0)),
                reward: next.reward,
                next_full_state: next.full_state.clone(),
                next_observation: next.observation.clone(),
                goal: cur.full_state.goal,
                achieved_goal: next.full_state.achieved(),
                labels: Arc::new(labels),
                done: next.done,
                demo,
            }
        })
        .collect()
}

/// For each transition, `k` copies relabeled with the achieved goal of a
/// uniformly chosen step at or after it in the same episode.
pub fn her_relabel<R: Rng + ?Sized>(episode: &[Transition], k: usize, delta: f64, rng: &mut R) -> Vec<Transition> {
    let mut out = Vec::with_capacity(episode.len() * k);
    for (t, tr) in episode.iter().enumerate() {
        for _ in 0..k {
            let future = rng.random_range(t..episode.len());
            out.push(tr.relabeled(episode[future].achieved_goal, delta));
        }
    }
    out
}

/// Decides how many demonstration trajectories follow each agent trajectory
/// so that `fraction` of all stored trajectories are demonstrations.
#[derive(Clone, Debug)]
pub struct DemoMixer {
    per_agent: f64,
    credit: f64,
}

impl DemoMixer {
    pub fn new(fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(LearnError::Config(format!("demo fraction must lie in [0, 1), got {fraction}")));
        }
        Ok(Self { per_agent: fraction / (1.0 - fraction), credit: 0.0 })
    }

    /// Demonstrations owed after one more agent trajectory.
    pub fn after_agent_trajectory(&mut self) -> usize {
        self.credit += self.per_agent;
        let n = (self.credit + 1e-9).floor();
        self.credit -= n;
        n as usize
    }
}

/// FIFO buffer with exact capacity.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: VecDeque<Transition>,
    pub agent_trajectories: usize,
    pub demo_trajectories: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(LearnError::Config("buffer capacity must be > 0".into()));
        }
        Ok(Self { capacity, data: VecDeque::new(), agent_trajectories: 0, demo_trajectories: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.data.get(i)
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(t);
    }

    /// Store one trajectory and its hindsight copies.
    pub fn push_trajectory<R: Rng + ?Sized>(&mut self, episode: Vec<Transition>, her_k: usize, delta: f64, rng: &mut R) {
        if episode.is_empty() {
            return;
        }
        if episode[0].demo {
            self.demo_trajectories += 1;
        } else {
            self.agent_trajectories += 1;
        }
        let relabeled = her_relabel(&episode, her_k, delta, rng);
        for t in episode.into_iter().chain(relabeled) {
            self.push(t);
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.data.len() < batch_size || batch_size == 0 {
            return Err(LearnError::NotReady { have: self.data.len(), need: batch_size.max(1) });
        }
        Ok((0..batch_size).map(|_| &self.data[rng.random_range(0..self.data.len())]).collect())
    }
}

/// Assemble network inputs from sampled transitions.
pub fn make_batch(transitions: &[&Transition], net: &NetConfig) -> Result<Batch> {
    let obs: Vec<&Observation> = transitions.iter().map(|t| &t.observation).collect();
    let next_obs: Vec<&Observation> = transitions.iter().map(|t| &t.next_observation).collect();
    let states: Vec<&FullState> = transitions.iter().map(|t| &t.full_state).collect();
    let next_states: Vec<&FullState> = transitions.iter().map(|t| &t.next_full_state).collect();
    let actions: Vec<[f64; ACTION_DIM]> = transitions.iter().map(|t| t.action).collect();
    let labels: Vec<[f64; LABEL_DIM]> = transitions.iter().map(|t| *t.labels).collect();
    Ok(Batch {
        obs: actor_batch(&obs, net)?,
        next_obs: actor_batch(&next_obs, net)?,
        states: critic_states(&states),
        next_states: critic_states(&next_states),
        actions: Mat::from_rows(&actions),
        rewards: transitions.iter().map(|t| t.reward).collect(),
        labels: Mat::from_rows(&labels),
    })
}

/// Sample a batch, or report that the buffer is not ready yet.
pub fn sample_batch<R: Rng + ?Sized>(buffer: &ReplayBuffer, batch_size: usize, net: &NetConfig, rng: &mut R) -> Result<Batch> {
    make_batch(&buffer.sample(batch_size, rng)?, net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixer_reaches_ten_percent() {
        let mut m = DemoMixer::new(0.1).unwrap();
        let demos: usize = (0..90).map(|_| m.after_agent_trajectory()).sum();
        assert_eq!(demos, 10);
        let mut none = DemoMixer::new(0.0).unwrap();
        assert_eq!((0..50).map(|_| none.after_agent_trajectory()).sum::<usize>(), 0);
        assert!(DemoMixer::new(1.0).is_err());
    }
}
