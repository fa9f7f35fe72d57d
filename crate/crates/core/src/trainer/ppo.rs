//! Clipped-surrogate PPO update over a flat batch of agent transitions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::gae::normalize_advantages;
use crate::error::{Error, Result};
use crate::obs::RobotObservation;
use crate::policy::{gaussian_entropy, gaussian_log_prob, OutputGrad, PolicyParams, Workspace, ACTION_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    /// Decay the learning rate linearly to zero over `train.total_env_steps`.
    pub lr_anneal: bool,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            epochs: 4,
            minibatch_size: 1024,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            lr_anneal: false,
            entropy_coef: 0.003,
            value_coef: 0.5,
            max_grad_norm: 5.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("train.ppo.{name}"), format!("must lie in (0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        unit("clip_eps", self.clip_eps)?;
        if self.epochs == 0 {
            return Err(Error::config("train.ppo.epochs", "must be at least 1"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("train.ppo.minibatch_size", "must be at least 1"));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("train.ppo.{name}"), "must be positive"));
            }
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("train.ppo.{name}"), "must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Transitions ready for an update. `actions` are pre-squash Gaussian samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub obs: Vec<RobotObservation>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub values: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: f64,
    pub grad_norm: f64,
}

struct SampleTerms {
    parts: LossParts,
    ratio: f64,
    grad: OutputGrad,
}

/// Loss terms and output gradient of one transition. `weight` scales the gradient.
#[allow(clippy::too_many_arguments)]
fn sample_terms(
    params: &PolicyParams,
    ws: &mut Workspace,
    obs: &RobotObservation,
    action: &[f64; ACTION_DIM],
    old_log_prob: f64,
    advantage: f64,
    ret: f64,
    cfg: &PpoConfig,
    weight: f64,
) -> Result<SampleTerms> {
    let out = params.forward_with(obs, ws)?;
    let mean = out.action_mean_pre;
    let log_std = out.action_log_std;
    let log_prob = gaussian_log_prob(action, &mean, &log_std);
    let ratio = (log_prob - old_log_prob).exp();
    let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let surr_raw = ratio * advantage;
    let surr_clip = clipped * advantage;
    let policy = -surr_raw.min(surr_clip);
    let entropy = gaussian_entropy(&log_std);
    let v_err = out.value - ret;
    let value = 0.5 * v_err * v_err;
    let total = policy + cfg.value_coef * value - cfg.entropy_coef * entropy;

    // d(policy)/d(log_prob) is nonzero only where the unclipped branch is the minimum.
    let d_logp = if surr_raw <= surr_clip { -advantage * ratio } else { 0.0 };
    let mut grad = OutputGrad::default();
    for k in 0..ACTION_DIM {
        let inv_var = (-2.0 * log_std[k]).exp();
        let diff = action[k] - mean[k];
        grad.action_mean_pre[k] = weight * d_logp * diff * inv_var;
        grad.action_log_std[k] = weight * (d_logp * (diff * diff * inv_var - 1.0) - cfg.entropy_coef);
    }
    grad.value = weight * cfg.value_coef * v_err;
    Ok(SampleTerms {
        parts: LossParts {
            policy,
            value,
            entropy,
            total,
        },
        ratio,
        grad,
    })
}

/// Mean loss of the batch under `params`, using batch-normalized advantages.
pub fn batch_loss(params: &PolicyParams, batch: &Batch, cfg: &PpoConfig) -> Result<LossParts> {
    let mut adv = batch.advantages.clone();
    normalize_advantages(&mut adv);
    let mut ws = params.workspace(batch.obs.first().map_or(0, |o| o.k()));
    let mut acc = LossParts::default();
    for i in 0..batch.len() {
        let t = sample_terms(
            params,
            &mut ws,
            &batch.obs[i],
            &batch.actions[i],
            batch.log_probs[i],
            adv[i],
            batch.returns[i],
            cfg,
            1.0,
        )?;
        acc.policy += t.parts.policy;
        acc.value += t.parts.value;
        acc.entropy += t.parts.entropy;
        acc.total += t.parts.total;
    }
    let n = batch.len().max(1) as f64;
    Ok(LossParts {
        policy: acc.policy / n,
        value: acc.value / n,
        entropy: acc.entropy / n,
        total: acc.total / n,
    })
}

/// Several epochs of shuffled minibatch updates on one batch.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    opt: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoDiagnostics> {
    if batch.is_empty() {
        return Ok(PpoDiagnostics::default());
    }
    let mut adv = batch.advantages.clone();
    normalize_advantages(&mut adv);

    let n = batch.len();
    let mb = cfg.minibatch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; params.len()];
    let mut ws = params.workspace(batch.obs[0].k());

    let mut diag = PpoDiagnostics::default();
    let mut seen = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            grad.fill(0.0);
            let weight = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let t = sample_terms(
                    params,
                    &mut ws,
                    &batch.obs[i],
                    &batch.actions[i],
                    batch.log_probs[i],
                    adv[i],
                    batch.returns[i],
                    cfg,
                    weight,
                )?;
                if !t.parts.total.is_finite() {
                    return Err(Error::NonFinite("ppo loss"));
                }
                params.backward_into(&mut ws, &t.grad, &mut grad);
                diag.policy_loss += t.parts.policy;
                diag.value_loss += t.parts.value;
                diag.entropy += t.parts.entropy;
                diag.approx_kl += (t.ratio - 1.0) - t.ratio.ln();
                if (t.ratio - 1.0).abs() > cfg.clip_eps {
                    diag.clip_fraction += 1.0;
                }
                seen += 1;
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite("ppo gradient"));
            }
            diag.grad_norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.lr = cfg.learning_rate;
            opt.step(params.as_mut_slice(), &grad);
        }
    }
    let s = seen as f64;
    diag.policy_loss /= s;
    diag.value_loss /= s;
    diag.entropy /= s;
    diag.approx_kl /= s;
    diag.clip_fraction /= s;
    diag.explained_variance = explained_variance(&batch.values, &batch.returns);
    Ok(diag)
}

/// `1 - Var(returns - values) / Var(returns)`.
pub fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    if returns.is_empty() {
        return 0.0;
    }
    let mean_r = returns.iter().sum::<f64>() / n;
    let var_r = returns.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / n;
    if var_r == 0.0 {
        return 0.0;
    }
    let diffs: Vec<f64> = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    let mean_d = diffs.iter().sum::<f64>() / n;
    let var_d = diffs.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / n;
    1.0 - var_d / var_r
}

/// Clipped surrogate of one sample: `min(r·A, clip(r, 1-ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{sample_action, PolicyConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs<R: Rng>(rng: &mut R) -> RobotObservation {
        RobotObservation {
            self_obs: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
            neighbor_obs: vec![std::array::from_fn(|_| rng.gen_range(-1.0..1.0)); 2],
            obstacle_obs: std::array::from_fn(|_| rng.gen_range(0.0..2.0)),
        }
    }

    fn make_batch(params: &PolicyParams, n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Batch::default();
        for _ in 0..n {
            let o = obs(&mut rng);
            let out = params.forward(&o).unwrap();
            let (a, lp) = sample_action(&out.action_mean_pre, &out.action_log_std, &mut rng);
            b.obs.push(o);
            b.actions.push(a);
            b.log_probs.push(lp);
            b.advantages.push(rng.gen_range(-1.0..1.0));
            b.returns.push(rng.gen_range(-1.0..1.0));
            b.values.push(out.value);
        }
        b
    }

    fn config() -> PolicyConfig {
        PolicyConfig {
            hidden_dim: 8,
            n_heads: 2,
            ..Default::default()
        }
    }

    #[test]
    fn clip_definition() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, 1.0, 0.2) - 0.5).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn update_decreases_batch_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = PolicyParams::init(&config(), &mut rng).unwrap();
        let batch = make_batch(&params, 64, 2);
        let cfg = PpoConfig {
            epochs: 1,
            minibatch_size: 64,
            learning_rate: 1e-3,
            ..Default::default()
        };
        let before = batch_loss(&params, &batch, &cfg).unwrap();
        let mut opt = Adam::new(params.len(), cfg.learning_rate);
        ppo_update(&mut params, &mut opt, &batch, &cfg, &mut rng).unwrap();
        let after = batch_loss(&params, &batch, &cfg).unwrap();
        assert!(after.total < before.total, "{} -> {}", before.total, after.total);
    }

    #[test]
    fn zero_advantages_only_move_value_and_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = PolicyParams::init(&config(), &mut rng).unwrap();
        let mut batch = make_batch(&params, 16, 4);
        batch.advantages.fill(0.0);
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            ..Default::default()
        };
        let mut ws = params.workspace(2);
        let mut grad = vec![0.0; params.len()];
        for i in 0..batch.len() {
            let t = sample_terms(
                &params,
                &mut ws,
                &batch.obs[i],
                &batch.actions[i],
                batch.log_probs[i],
                0.0,
                batch.returns[i],
                &cfg,
                1.0,
            )
            .unwrap();
            params.backward_into(&mut ws, &t.grad, &mut grad);
        }
        let actor = &params.layout().actor;
        assert!(grad[actor.start..actor.end].iter().all(|g| *g == 0.0));
        let critic = &params.layout().critic;
        assert!(grad[critic.start..critic.end].iter().any(|g| *g != 0.0));
    }

    #[test]
    fn diagnostics_are_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = PolicyParams::init(&config(), &mut rng).unwrap();
        let batch = make_batch(&params, 32, 6);
        let cfg = PpoConfig {
            minibatch_size: 8,
            ..Default::default()
        };
        let mut opt = Adam::new(params.len(), cfg.learning_rate);
        let d = ppo_update(&mut params, &mut opt, &batch, &cfg, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&d.clip_fraction));
        assert!(d.approx_kl >= 0.0);
        assert!(d.entropy.is_finite() && d.value_loss >= 0.0);
        assert_eq!(opt.steps(), 16);
    }

    #[test]
    fn explained_variance_limits() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(explained_variance(&r, &r), 1.0);
        assert_eq!(explained_variance(&[0.0; 3], &r), 0.0);
    }

    #[test]
    fn rejects_bad_discount() {
        let cfg = PpoConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
