//! Actor (image or state encoder, squashed-Gaussian head, corner head) and critic networks.

use dynfold_core::env::{tracked_features, ActorView, FullState, Observation, ObservationMode, ACTION_DIM, GOAL_DIM, LABEL_DIM, TRACKED_FEATURES};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{ConvEncoder, Mat, Mlp, MlpCache, Module, Param, Shape};
use crate::{LearnError, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Previous action and goal features appended to the latent.
pub const EXTRA_DIM: usize = ACTION_DIM + GOAL_DIM;
/// Tracked-point features plus goal features.
pub const CRITIC_STATE_DIM: usize = TRACKED_FEATURES + GOAL_DIM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub observation: ObservationMode,
    /// Side of the square grayscale input.
    pub image_size: usize,
    pub channels: Vec<usize>,
    pub latent: usize,
    pub actor_hidden: Vec<usize>,
    pub aux_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            observation: ObservationMode::Image,
            image_size: dynfold_core::render::DEFAULT_IMAGE_SIZE,
            channels: vec![8, 16, 32],
            latent: 128,
            actor_hidden: vec![256, 256],
            aux_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.observation == ObservationMode::Image && (self.image_size == 0 || self.latent == 0) {
            return Err(LearnError::Config("image encoder needs image_size and latent > 0".into()));
        }
        let all = self.channels.iter().chain(&self.actor_hidden).chain(&self.aux_hidden).chain(&self.critic_hidden);
        if all.copied().any(|n| n == 0) {
            return Err(LearnError::Config("layer widths must be > 0".into()));
        }
        Ok(())
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

/// h1: observation to latent.
#[derive(Clone, Debug)]
pub enum Encoder {
    Conv(ConvEncoder),
    /// Tracked-point features used directly as the latent.
    State,
}

/// Actor inputs for a batch.
#[derive(Clone, Debug)]
pub enum ViewBatch {
    /// `batch x size x size`, intensities in [0, 1].
    Images { pixels: Vec<f64>, batch: usize },
    States(Mat),
}

#[derive(Clone, Debug)]
pub struct ActorBatch {
    pub view: ViewBatch,
    /// Previous action followed by scaled goal, per row.
    pub extra: Mat,
}

impl ActorBatch {
    pub fn len(&self) -> usize {
        self.extra.rows
    }

    pub fn is_empty(&self) -> bool {
        self.extra.rows == 0
    }
}

/// Stack observations into network inputs, checking them against `cfg`.
pub fn actor_batch(observations: &[&Observation], cfg: &NetConfig) -> Result<ActorBatch> {
    let batch = observations.len();
    let mut extra = Mat::zeros(batch, EXTRA_DIM);
    for (i, o) in observations.iter().enumerate() {
        let row = extra.row_mut(i);
        row[..ACTION_DIM].copy_from_slice(&o.prev_action);
        row[ACTION_DIM..].copy_from_slice(&o.goal.features());
    }
    let view = match cfg.observation {
        ObservationMode::Image => {
            let n = cfg.image_size;
            let mut pixels = Vec::with_capacity(batch * n * n);
            for o in observations {
                let ActorView::Image(img) = &o.view else {
                    return Err(LearnError::Contract("image policy received a state view".into()));
                };
                if img.width != n || img.height != n {
                    return Err(LearnError::Contract(format!(
                        "expected a {n}x{n} image, got {}x{}",
                        img.width, img.height
                    )));
                }
                pixels.extend(img.pixels.iter().map(|&p| p as f64 / 255.0));
            }
            ViewBatch::Images { pixels, batch }
        }
        ObservationMode::State => {
            let mut m = Mat::zeros(batch, TRACKED_FEATURES);
            for (i, o) in observations.iter().enumerate() {
                let ActorView::State(tracked) = &o.view else {
                    return Err(LearnError::Contract("state policy received an image view".into()));
                };
                m.row_mut(i).copy_from_slice(&tracked_features(tracked));
            }
            ViewBatch::States(m)
        }
    };
    Ok(ActorBatch { view, extra })
}

/// Critic state rows: tracked features then scaled goal.
pub fn critic_states(states: &[&FullState]) -> Mat {
    let mut m = Mat::zeros(states.len(), CRITIC_STATE_DIM);
    for (i, s) in states.iter().enumerate() {
        let row = m.row_mut(i);
        row[..TRACKED_FEATURES].copy_from_slice(&tracked_features(&s.tracked));
        row[TRACKED_FEATURES..].copy_from_slice(&s.goal.features());
    }
    m
}

fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u.abs() - (-2.0 * u.abs()).exp().ln_1p())
}

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub encoder: Encoder,
    /// h2: (latent, previous action, goal) to mean and raw log-std.
    pub head: Mlp,
    /// h3: latent to 16 corner coordinates (sigmoid outputs).
    pub aux: Mlp,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct PolicyForward {
    encoder: Option<crate::nn::EncoderCache>,
    head: MlpCache,
    aux: MlpCache,
    pub mean: Mat,
    pub raw_log_std: Mat,
    pub log_std: Mat,
    /// Corner predictions in [0, 1].
    pub corners: Mat,
}

/// A reparameterized sample `a = tanh(mean + std * eps)`.
#[derive(Clone, Debug)]
pub struct Sample {
    pub eps: Mat,
    pub action: Mat,
    pub log_prob: Vec<f64>,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Self {
        let (encoder, latent) = match cfg.observation {
            ObservationMode::Image => {
                let n = cfg.image_size;
                let enc = ConvEncoder::new("actor.encoder", Shape { c: 1, h: n, w: n }, &cfg.channels, cfg.latent, rng);
                (Encoder::Conv(enc), cfg.latent)
            }
            ObservationMode::State => (Encoder::State, TRACKED_FEATURES),
        };
        let head = Mlp::new("actor.head", &sizes(latent + EXTRA_DIM, &cfg.actor_hidden, 2 * ACTION_DIM), rng);
        let aux = Mlp::new("actor.aux", &sizes(latent, &cfg.aux_hidden, LABEL_DIM), rng);
        Self { encoder, head, aux }
    }

    pub fn observation_mode(&self) -> ObservationMode {
        match self.encoder {
            Encoder::Conv(_) => ObservationMode::Image,
            Encoder::State => ObservationMode::State,
        }
    }

    pub fn forward(&self, input: &ActorBatch) -> Result<PolicyForward> {
        let (encoder, latent) = match (&self.encoder, &input.view) {
            (Encoder::Conv(enc), ViewBatch::Images { pixels, batch }) => {
                let cache = enc.forward(pixels, *batch);
                let latent = cache.latent.clone();
                (Some(cache), latent)
            }
            (Encoder::State, ViewBatch::States(m)) => (None, m.clone()),
            _ => return Err(LearnError::Contract("actor input kind does not match the encoder".into())),
        };
        let head = self.head.forward(Mat::hcat(&[&latent, &input.extra]));
        let aux = self.aux.forward(latent);
        let b = input.len();
        let mean = head.output.columns(0, ACTION_DIM);
        let raw_log_std = head.output.columns(ACTION_DIM, ACTION_DIM);
        let log_std = Mat::from_vec(b, ACTION_DIM, raw_log_std.data.iter().map(|&r| squash_log_std(r)).collect());
        let corners = Mat::from_vec(b, LABEL_DIM, aux.output.data.iter().map(|&z| sigmoid(z)).collect());
        Ok(PolicyForward { encoder, head, aux, mean, raw_log_std, log_std, corners })
    }

    /// Reparameterized sample with caller-provided standard-normal noise.
    pub fn sample_with(fwd: &PolicyForward, eps: Mat) -> Sample {
        let b = fwd.mean.rows;
        let mut action = Mat::zeros(b, ACTION_DIM);
        let mut log_prob = vec![0.0; b];
        for i in 0..b {
            for j in 0..ACTION_DIM {
                let e = eps.get(i, j);
                let ls = fwd.log_std.get(i, j);
                let u = fwd.mean.get(i, j) + ls.exp() * e;
                action.data[i * ACTION_DIM + j] = u.tanh();
                log_prob[i] += -0.5 * e * e - ls - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(u);
            }
        }
        Sample { eps, action, log_prob }
    }

    pub fn sample<R: Rng + ?Sized>(fwd: &PolicyForward, rng: &mut R) -> Sample {
        let b = fwd.mean.rows;
        let eps = Mat::from_vec(b, ACTION_DIM, (0..b * ACTION_DIM).map(|_| rng.sample(StandardNormal)).collect());
        Self::sample_with(fwd, eps)
    }

    /// Accumulate gradients given `dL/da`, `dL/dlogp` and `dL/dcorners` (any may be zero).
    pub fn backward(&mut self, fwd: &PolicyForward, sample: &Sample, d_action: &Mat, d_log_prob: &[f64], d_corners: Option<&Mat>) {
        let b = fwd.mean.rows;
        let mut d_head = Mat::zeros(b, 2 * ACTION_DIM);
        for i in 0..b {
            for j in 0..ACTION_DIM {
                let a = sample.action.get(i, j);
                let e = sample.eps.get(i, j);
                let std = fwd.log_std.get(i, j).exp();
                let du = d_action.get(i, j) * (1.0 - a * a) + d_log_prob[i] * 2.0 * a;
                let d_log_std = du * std * e - d_log_prob[i];
                let t = fwd.raw_log_std.get(i, j).tanh();
                d_head.data[i * 2 * ACTION_DIM + j] = du;
                d_head.data[i * 2 * ACTION_DIM + ACTION_DIM + j] =
                    d_log_std * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t);
            }
        }
        let d_in = self.head.backward(&fwd.head, &d_head, true);
        let latent_dim = d_in.cols - EXTRA_DIM;
        let mut d_latent = d_in.columns(0, latent_dim);
        if let Some(dc) = d_corners {
            let mut dz = dc.clone();
            for (g, s) in dz.data.iter_mut().zip(&fwd.corners.data) {
                *g *= s * (1.0 - s);
            }
            let d_aux_in = self.aux.backward(&fwd.aux, &dz, true);
            for (a, b) in d_latent.data.iter_mut().zip(&d_aux_in.data) {
                *a += b;
            }
        }
        if let (Encoder::Conv(enc), Some(cache)) = (&mut self.encoder, &fwd.encoder) {
            enc.backward(cache, &d_latent);
        }
    }
}

impl Module for PolicyNet {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        if let Encoder::Conv(enc) = &self.encoder {
            enc.visit(f);
        }
        self.head.visit(f);
        self.aux.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        if let Encoder::Conv(enc) = &mut self.encoder {
            enc.visit_mut(f);
        }
        self.head.visit_mut(f);
        self.aux.visit_mut(f);
    }
}

/// Action and corner prediction for one observation.
pub fn select_action<R: Rng + ?Sized>(
    policy: &PolicyNet,
    cfg: &NetConfig,
    observation: &Observation,
    deterministic: bool,
    rng: &mut R,
) -> Result<([f64; ACTION_DIM], [f64; LABEL_DIM])> {
    let input = actor_batch(&[observation], cfg)?;
    let fwd = policy.forward(&input)?;
    let action = if deterministic {
        let mut a = [0.0; ACTION_DIM];
        for (o, m) in a.iter_mut().zip(fwd.mean.row(0)) {
            *o = m.tanh();
        }
        a
    } else {
        let s = PolicyNet::sample(&fwd, rng);
        s.action.row(0).try_into().expect("action width")
    };
    Ok((action, fwd.corners.row(0).try_into().expect("label width")))
}

/// Q(s, g, a) over privileged state.
#[derive(Clone, Debug)]
pub struct QNet {
    pub mlp: Mlp,
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(name: &str, hidden: &[usize], rng: &mut R) -> Self {
        Self { mlp: Mlp::new(name, &sizes(CRITIC_STATE_DIM + ACTION_DIM, hidden, 1), rng) }
    }

    pub fn forward(&self, states: &Mat, actions: &Mat) -> MlpCache {
        self.mlp.forward(Mat::hcat(&[states, actions]))
    }

    pub fn values(&self, states: &Mat, actions: &Mat) -> Vec<f64> {
        self.forward(states, actions).output.data
    }

    /// Returns `dL/daction`; parameter gradients only when `param_grads`.
    pub fn backward(&mut self, cache: &MlpCache, d_q: &[f64], param_grads: bool) -> Mat {
        let dy = Mat::from_vec(d_q.len(), 1, d_q.to_vec());
        self.mlp.backward(cache, &dy, param_grads).columns(CRITIC_STATE_DIM, ACTION_DIM)
    }
}

impl Module for QNet {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.mlp.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.mlp.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_std_stays_in_range() {
        for raw in [-1e3, -3.0, 0.0, 3.0, 1e3] {
            let l = squash_log_std(raw);
            assert!((LOG_STD_MIN..=LOG_STD_MAX).contains(&l));
        }
        assert!((squash_log_std(0.0) - (-1.5)).abs() < 1e-12);
    }

    #[test]
    fn stable_log_jacobian_matches_direct_form() {
        for u in [-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let direct = (1.0 - u.tanh().powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - direct).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(40.0).is_finite());
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-800.0, -2.0, 0.0, 2.0, 800.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
