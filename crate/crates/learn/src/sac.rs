//! Soft actor-critic update with asymmetric inputs and the auxiliary corner loss.

use dynfold_core::env::{ACTION_DIM, LABEL_DIM};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{polyak, Adam, Mat, Module, Param};
use crate::policy::{ActorBatch, NetConfig, PolicyNet, QNet, Sample};
use crate::{LearnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub target_entropy: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    /// Polyak coefficient for the target critics.
    pub tau: f64,
    pub aux_weight: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            // the 25-step episodes bootstrap through the time limit; at 0.99 the critic
            // extrapolates ~100 steps of return and its estimates drift upward
            gamma: 0.98,
            target_entropy: -(ACTION_DIM as f64),
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 0.1,
            tau: 0.005,
            aux_weight: 0.1,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(LearnError::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(LearnError::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        let positive = [self.actor_lr, self.critic_lr, self.alpha_lr, self.initial_alpha];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(LearnError::Config("learning rates and initial_alpha must be > 0".into()));
        }
        if !(self.aux_weight >= 0.0) {
            return Err(LearnError::Config("aux_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Network inputs for one gradient step. Actor rows see observations; critic rows see full state.
#[derive(Clone, Debug)]
pub struct Batch {
    pub obs: ActorBatch,
    pub next_obs: ActorBatch,
    pub states: Mat,
    pub next_states: Mat,
    pub actions: Mat,
    pub rewards: Vec<f64>,
    /// Rendered corner labels for `obs`.
    pub labels: Mat,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha: f64,
    /// Mean of `-log pi` over the batch.
    pub entropy: f64,
    pub aux: f64,
}

impl LossReport {
    fn check(&self) -> Result<()> {
        let named = [
            ("critic1 loss", self.critic1),
            ("critic2 loss", self.critic2),
            ("actor loss", self.actor),
            ("temperature", self.alpha),
            ("entropy", self.entropy),
            ("aux loss", self.aux),
        ];
        for (what, value) in named {
            if !value.is_finite() {
                return Err(LearnError::NonFinite { what: what.into(), value });
            }
        }
        Ok(())
    }
}

/// Actor-side loss terms for fixed noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorLoss {
    pub policy: f64,
    pub aux: f64,
    pub mean_log_prob: f64,
}

impl ActorLoss {
    pub fn total(&self, aux_weight: f64) -> f64 {
        self.policy + aux_weight * self.aux
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize) -> Mat {
    Mat::from_vec(rows, ACTION_DIM, (0..rows * ACTION_DIM).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
}

/// Actor, twin critics, their targets and the entropy temperature.
#[derive(Clone, Debug)]
pub struct Agent {
    pub net: NetConfig,
    pub cfg: SacConfig,
    pub actor: PolicyNet,
    pub q1: QNet,
    pub q2: QNet,
    pub q1_target: QNet,
    pub q2_target: QNet,
    pub log_alpha: Param,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
}

struct Scalar<'a>(&'a mut Param);

impl Module for Scalar<'_> {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(self.0);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(self.0);
    }
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(net: NetConfig, cfg: SacConfig, rng: &mut R) -> Result<Self> {
        net.validate()?;
        cfg.validate()?;
        let actor = PolicyNet::new(&net, rng);
        let q1 = QNet::new("q1", &net.critic_hidden, rng);
        let q2 = QNet::new("q2", &net.critic_hidden, rng);
        let mut q1_target = q1.clone();
        let mut q2_target = q2.clone();
        relabel(&mut q1_target, "q1", "q1_target");
        relabel(&mut q2_target, "q2", "q2_target");
        Ok(Self {
            log_alpha: Param::new("log_alpha", vec![cfg.initial_alpha.ln()]),
            opt_actor: Adam::new(cfg.actor_lr),
            opt_q1: Adam::new(cfg.critic_lr),
            opt_q2: Adam::new(cfg.critic_lr),
            opt_alpha: Adam::new(cfg.alpha_lr),
            net,
            cfg,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value[0].exp()
    }

    /// Soft Bellman targets `r + gamma * (min Q_target(s', a') - alpha log pi(a'|o'))`.
    ///
    /// Episodes end on a time limit or a hold condition, neither of which is
    /// an absorbing state, so every transition bootstraps.
    pub fn critic_targets(&self, batch: &Batch, next_eps: Mat) -> Result<Vec<f64>> {
        let fwd = self.actor.forward(&batch.next_obs)?;
        let s = PolicyNet::sample_with(&fwd, next_eps);
        let q1 = self.q1_target.values(&batch.next_states, &s.action);
        let q2 = self.q2_target.values(&batch.next_states, &s.action);
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|i| batch.rewards[i] + self.cfg.gamma * (q1[i].min(q2[i]) - alpha * s.log_prob[i]))
            .collect())
    }

    /// `0.5 * mean((Q(s, a) - y)^2)`; accumulates gradients when `grad`.
    pub fn critic_loss(q: &mut QNet, batch: &Batch, targets: &[f64], grad: bool) -> f64 {
        let cache = q.forward(&batch.states, &batch.actions);
        let n = batch.len() as f64;
        let diff: Vec<f64> = cache.output.data.iter().zip(targets).map(|(q, y)| q - y).collect();
        if grad {
            let d: Vec<f64> = diff.iter().map(|d| d / n).collect();
            q.backward(&cache, &d, true);
        }
        0.5 * diff.iter().map(|d| d * d).sum::<f64>() / n
    }

    /// `mean(alpha log pi - min Q)` plus the corner MSE; accumulates actor gradients when `grad`.
    pub fn actor_loss(&mut self, batch: &Batch, eps: Mat, alpha: f64, grad: bool) -> Result<ActorLoss> {
        let fwd = self.actor.forward(&batch.obs)?;
        let s: Sample = PolicyNet::sample_with(&fwd, eps);
        let c1 = self.q1.forward(&batch.states, &s.action);
        let c2 = self.q2.forward(&batch.states, &s.action);
        let b = batch.len();
        let n = b as f64;
        let mut policy = 0.0;
        let mut d_q1 = vec![0.0; b];
        let mut d_q2 = vec![0.0; b];
        for i in 0..b {
            let (v1, v2) = (c1.output.data[i], c2.output.data[i]);
            policy += alpha * s.log_prob[i] - v1.min(v2);
            if v1 <= v2 {
                d_q1[i] = -1.0 / n;
            } else {
                d_q2[i] = -1.0 / n;
            }
        }
        policy /= n;
        let mut aux = 0.0;
        let mut d_corners = Mat::zeros(b, LABEL_DIM);
        let denom = (b * LABEL_DIM) as f64;
        for ((d, p), l) in d_corners.data.iter_mut().zip(&fwd.corners.data).zip(&batch.labels.data) {
            aux += (p - l) * (p - l);
            *d = self.cfg.aux_weight * 2.0 * (p - l) / denom;
        }
        aux /= denom;
        let mean_log_prob = s.log_prob.iter().sum::<f64>() / n;
        if grad {
            let mut d_action = self.q1.backward(&c1, &d_q1, false);
            let d2 = self.q2.backward(&c2, &d_q2, false);
            for (a, b) in d_action.data.iter_mut().zip(&d2.data) {
                *a += b;
            }
            let d_log_prob = vec![alpha / n; b];
            let d_corners = (self.cfg.aux_weight > 0.0).then_some(&d_corners);
            self.actor.backward(&fwd, &s, &d_action, &d_log_prob, d_corners);
        }
        Ok(ActorLoss { policy, aux, mean_log_prob })
    }

    /// One full update: critics, actor, temperature, then target critics.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<LossReport> {
        let targets = self.critic_targets(batch, standard_normal(rng, batch.len()))?;
        self.q1.zero_grad();
        self.q2.zero_grad();
        let critic1 = Self::critic_loss(&mut self.q1, batch, &targets, true);
        let critic2 = Self::critic_loss(&mut self.q2, batch, &targets, true);
        if !(critic1.is_finite() && critic2.is_finite() && self.q1.grads_finite() && self.q2.grads_finite()) {
            return Err(LearnError::NonFinite { what: "critic loss".into(), value: critic1 + critic2 });
        }
        self.opt_q1.step(&mut self.q1);
        self.opt_q2.step(&mut self.q2);

        let alpha = self.alpha();
        self.actor.zero_grad();
        let actor = self.actor_loss(batch, standard_normal(rng, batch.len()), alpha, true)?;
        if !(actor.total(self.cfg.aux_weight).is_finite() && self.actor.grads_finite()) {
            return Err(LearnError::NonFinite { what: "actor loss".into(), value: actor.total(self.cfg.aux_weight) });
        }
        self.opt_actor.step(&mut self.actor);

        // d/dlog_alpha of -log_alpha * (log pi + target_entropy)
        self.log_alpha.grad[0] = -(actor.mean_log_prob + self.cfg.target_entropy);
        self.opt_alpha.step(&mut Scalar(&mut self.log_alpha));

        polyak(&mut self.q1_target, &self.q1, self.cfg.tau);
        polyak(&mut self.q2_target, &self.q2, self.cfg.tau);

        let report = LossReport {
            critic1,
            critic2,
            actor: actor.total(self.cfg.aux_weight),
            alpha: self.alpha(),
            entropy: -actor.mean_log_prob,
            aux: actor.aux,
        };
        report.check()?;
        Ok(report)
    }

    /// Every trainable and target tensor in a fixed order.
    pub fn visit_all(&self, f: &mut dyn FnMut(&Param)) {
        self.actor.visit(f);
        self.q1.visit(f);
        self.q2.visit(f);
        self.q1_target.visit(f);
        self.q2_target.visit(f);
        f(&self.log_alpha);
    }

    pub fn visit_all_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.actor.visit_mut(f);
        self.q1.visit_mut(f);
        self.q2.visit_mut(f);
        self.q1_target.visit_mut(f);
        self.q2_target.visit_mut(f);
        f(&mut self.log_alpha);
    }
}

fn relabel(q: &mut QNet, from: &str, to: &str) {
    q.visit_mut(&mut |p| p.name = p.name.replacen(from, to, 1));
}
