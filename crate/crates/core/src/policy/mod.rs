//! Actor-critic network.
//!
//! Each of the actor and the critic is an independent tower: three two-layer
//! tanh encoders (self, neighbor, obstacle), multi-head attention over the
//! neighbor and obstacle embeddings, and a two-layer head on the concatenation
//! `[e_self, ê_neigh, ê_obst]`. Neighbor rows share one encoder and are mean
//! pooled, so the same parameters serve any neighbor count.
//!
//! The actor emits pre-squash means of a diagonal Gaussian with a learned,
//! state-independent log standard deviation; sampled values pass through a
//! sigmoid to give thrust levels in `[0, 1]`.
//!
//! Parameters live in one flat `Vec<f64>` so the optimizer, checkpointing and
//! finite-difference checks can treat them uniformly. [`Layout`] names every tensor.

mod kernels;
pub mod tower;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use kernels::sigmoid;
pub use tower::{DenseSlot, TowerCache, TowerLayout};

use crate::error::{Error, Result};
use crate::obs::RobotObservation;

pub const ACTION_DIM: usize = 4;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub activation: Activation,
    /// Initial value of every action log standard deviation.
    pub log_std_init: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::training()
    }
}

impl PolicyConfig {
    pub fn training() -> Self {
        PolicyConfig {
            hidden_dim: 64,
            n_heads: 8,
            activation: Activation::Tanh,
            log_std_init: -0.5,
        }
    }

    /// Onboard-scale network: width 10, one attention head.
    pub fn deployment() -> Self {
        PolicyConfig {
            hidden_dim: 10,
            n_heads: 1,
            ..PolicyConfig::training()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::config("policy.hidden_dim", "must be at least 1"));
        }
        if self.n_heads == 0 || self.hidden_dim % self.n_heads != 0 {
            return Err(Error::config(
                "policy.n_heads",
                format!("must divide hidden_dim {} (got {})", self.hidden_dim, self.n_heads),
            ));
        }
        if !self.log_std_init.is_finite() {
            return Err(Error::config("policy.log_std_init", "must be finite"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    /// Number of scalars in the full actor-critic parameter vector.
    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    /// Parameters needed to compute action means (no critic, no log-std).
    pub fn inference_param_count(&self) -> usize {
        let l = self.layout();
        l.actor.len() - ACTION_DIM
    }
}

/// Which tower of the actor-critic to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tower {
    Actor,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub actor: TowerLayout,
    pub critic: TowerLayout,
    pub total: usize,
}

impl Layout {
    fn new(config: &PolicyConfig) -> Self {
        let actor = TowerLayout::new(0, config.hidden_dim, config.n_heads, ACTION_DIM, true);
        let critic = TowerLayout::new(actor.end, config.hidden_dim, config.n_heads, 1, false);
        let total = critic.end;
        Layout { actor, critic, total }
    }

    pub fn tower(&self, t: Tower) -> &TowerLayout {
        match t {
            Tower::Actor => &self.actor,
            Tower::Critic => &self.critic,
        }
    }

    /// Every parameter tensor, in storage order.
    pub fn tensors(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        for (prefix, tower) in [("actor", &self.actor), ("critic", &self.critic)] {
            for (name, slot) in tower.dense_slots() {
                out.push(TensorInfo {
                    name: format!("{prefix}.{name}.weight"),
                    offset: slot.w,
                    len: slot.n_out * slot.n_in,
                });
                out.push(TensorInfo {
                    name: format!("{prefix}.{name}.bias"),
                    offset: slot.b,
                    len: slot.n_out,
                });
            }
            if let Some(at) = tower.log_std {
                out.push(TensorInfo {
                    name: format!("{prefix}.log_std"),
                    offset: at,
                    len: tower.out_dim,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    config: PolicyConfig,
    layout: Layout,
    data: Vec<f64>,
}

/// Result of a forward pass for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    /// Squashed action means in `[0, 1]`.
    pub action_mean: [f64; ACTION_DIM],
    /// Gaussian means before squashing.
    pub action_mean_pre: [f64; ACTION_DIM],
    pub action_log_std: [f64; ACTION_DIM],
    pub value: f64,
}

/// Upstream loss gradient with respect to one [`PolicyOutput`].
///
/// `action_mean` is taken through the sigmoid; `action_mean_pre` bypasses it.
/// Both may be set and are summed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OutputGrad {
    pub action_mean: [f64; ACTION_DIM],
    pub action_mean_pre: [f64; ACTION_DIM],
    pub action_log_std: [f64; ACTION_DIM],
    pub value: f64,
}

/// Preallocated forward/backward buffers for both towers.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub actor: TowerCache,
    pub critic: TowerCache,
}

impl Workspace {
    pub fn new(config: &PolicyConfig, k_neighbors: usize) -> Self {
        Workspace {
            actor: TowerCache::new(config.hidden_dim, config.n_heads, ACTION_DIM, k_neighbors),
            critic: TowerCache::new(config.hidden_dim, config.n_heads, 1, k_neighbors),
        }
    }

    pub fn cache(&self, t: Tower) -> &TowerCache {
        match t {
            Tower::Actor => &self.actor,
            Tower::Critic => &self.critic,
        }
    }

    pub fn footprint_bytes(&self) -> usize {
        self.actor.footprint_bytes() + self.critic.footprint_bytes()
    }
}

impl PolicyParams {
    pub fn zeros(config: &PolicyConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let data = vec![0.0; layout.total];
        Ok(PolicyParams {
            config: config.clone(),
            layout,
            data,
        })
    }

    /// Uniform fan-in initialization with zero biases. The action layer is scaled
    /// down so that initial thrust levels sit near 0.5.
    pub fn init<R: Rng + ?Sized>(config: &PolicyConfig, rng: &mut R) -> Result<Self> {
        let mut params = PolicyParams::zeros(config)?;
        let layout = params.layout.clone();
        for tower in [&layout.actor, &layout.critic] {
            for (name, slot) in tower.dense_slots() {
                let bound = (1.0 / slot.n_in as f64).sqrt();
                let gain = if name == "head.1" && tower.log_std.is_some() { 0.01 } else { 1.0 };
                for w in &mut params.data[slot.w..slot.w + slot.n_out * slot.n_in] {
                    *w = gain * rng.gen_range(-bound..bound);
                }
            }
            if let Some(at) = tower.log_std {
                params.data[at..at + tower.out_dim].fill(config.log_std_init);
            }
        }
        Ok(params)
    }

    pub fn from_vec(config: &PolicyConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if data.len() != layout.total {
            return Err(Error::Dimension(format!(
                "parameter vector has {} entries, config needs {}",
                data.len(),
                layout.total
            )));
        }
        Ok(PolicyParams {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn log_std(&self) -> [f64; ACTION_DIM] {
        let at = self.layout.actor.log_std.expect("actor owns log-std");
        self.data[at..at + ACTION_DIM].try_into().unwrap()
    }

    pub fn workspace(&self, k_neighbors: usize) -> Workspace {
        Workspace::new(&self.config, k_neighbors)
    }

    /// Encoders of one tower: `(e_self, e_neigh, e_obst)`.
    pub fn encode(&self, tower: Tower, obs: &RobotObservation) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut ws = self.workspace(obs.k());
        let cache = match tower {
            Tower::Actor => &mut ws.actor,
            Tower::Critic => &mut ws.critic,
        };
        tower::encode(self.layout.tower(tower), &self.data, obs, cache);
        (cache.e_self().to_vec(), cache.e_neigh().to_vec(), cache.e_obst().to_vec())
    }

    /// Attention block of one tower on explicit embeddings. Returns
    /// `(ê_neigh, ê_obst, weights)` with weights laid out head-major, 2 × 2 per head.
    pub fn attend(&self, tower: Tower, e_neigh: &[f64], e_obst: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.config.hidden_dim;
        assert_eq!(e_neigh.len(), h);
        assert_eq!(e_obst.len(), h);
        let layout = self.layout.tower(tower);
        let mut cache = TowerCache::new(h, self.config.n_heads, layout.out_dim, 0);
        cache.tokens[..h].copy_from_slice(e_neigh);
        cache.tokens[h..].copy_from_slice(e_obst);
        tower::attend(layout, &self.data, &mut cache);
        (cache.attended_neigh().to_vec(), cache.attended_obst().to_vec(), cache.attn.clone())
    }

    /// Actor tower only; returns pre-squash means.
    pub fn forward_actor(&self, obs: &RobotObservation, ws: &mut Workspace) -> Result<[f64; ACTION_DIM]> {
        tower::forward(&self.layout.actor, &self.data, obs, &mut ws.actor);
        let out: [f64; ACTION_DIM] = ws.actor.output().try_into().unwrap();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("actor output"));
        }
        Ok(out)
    }

    pub fn forward_critic(&self, obs: &RobotObservation, ws: &mut Workspace) -> Result<f64> {
        tower::forward(&self.layout.critic, &self.data, obs, &mut ws.critic);
        let v = ws.critic.output()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("critic output"));
        }
        Ok(v)
    }

    pub fn forward_with(&self, obs: &RobotObservation, ws: &mut Workspace) -> Result<PolicyOutput> {
        let pre = self.forward_actor(obs, ws)?;
        let value = self.forward_critic(obs, ws)?;
        Ok(PolicyOutput {
            action_mean: pre.map(sigmoid),
            action_mean_pre: pre,
            action_log_std: self.log_std(),
            value,
        })
    }

    pub fn forward(&self, obs: &RobotObservation) -> Result<PolicyOutput> {
        let mut ws = self.workspace(obs.k());
        self.forward_with(obs, &mut ws)
    }

    /// Accumulate parameter gradients for the last `forward_with` held in `ws`.
    pub fn backward_into(&self, ws: &mut Workspace, grad: &OutputGrad, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.data.len());
        let mut d_pre = grad.action_mean_pre;
        let mut any_actor = false;
        for (k, d) in d_pre.iter_mut().enumerate() {
            let s = sigmoid(ws.actor.output()[k]);
            *d += grad.action_mean[k] * s * (1.0 - s);
            any_actor |= *d != 0.0;
        }
        if any_actor {
            tower::backward(&self.layout.actor, &self.data, &mut ws.actor, &d_pre, out);
        }
        if let Some(at) = self.layout.actor.log_std {
            for (o, g) in out[at..at + ACTION_DIM].iter_mut().zip(grad.action_log_std) {
                *o += g;
            }
        }
        if grad.value != 0.0 {
            tower::backward(&self.layout.critic, &self.data, &mut ws.critic, &[grad.value], out);
        }
    }

    /// Gradient of `Σ_b ⟨upstream_b, output_b⟩` over a batch.
    pub fn backward(&self, batch: &[RobotObservation], upstream: &[OutputGrad]) -> Result<Vec<f64>> {
        if batch.len() != upstream.len() {
            return Err(Error::Dimension(format!(
                "{} observations but {} upstream gradients",
                batch.len(),
                upstream.len()
            )));
        }
        let mut grad = vec![0.0; self.data.len()];
        let mut ws = self.workspace(batch.first().map_or(0, |o| o.k()));
        for (obs, up) in batch.iter().zip(upstream) {
            self.forward_with(obs, &mut ws)?;
            self.backward_into(&mut ws, up, &mut grad);
        }
        Ok(grad)
    }
}

/// Log-density of a diagonal Gaussian at `x`.
pub fn gaussian_log_prob(x: &[f64; ACTION_DIM], mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM]) -> f64 {
    let mut lp = 0.0;
    for k in 0..ACTION_DIM {
        let z = (x[k] - mean[k]) * (-log_std[k]).exp();
        lp += -0.5 * z * z - log_std[k] - 0.5 * LN_2PI;
    }
    lp
}

pub fn gaussian_entropy(log_std: &[f64; ACTION_DIM]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (1.0 + LN_2PI)).sum()
}

/// Draw pre-squash actions; returns `(sample, log_prob)`.
pub fn sample_action<R: Rng + ?Sized>(
    mean: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
    rng: &mut R,
) -> ([f64; ACTION_DIM], f64) {
    let mut x = [0.0; ACTION_DIM];
    for k in 0..ACTION_DIM {
        let n = Normal::new(0.0, 1.0).unwrap().sample(rng);
        x[k] = mean[k] + log_std[k].exp() * n;
    }
    let lp = gaussian_log_prob(&x, mean, log_std);
    (x, lp)
}
