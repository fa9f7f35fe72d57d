//! Teacher-student distillation onto a (usually smaller) policy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::obs::{observe_all, RobotObservation};
use crate::policy::{OutputGrad, PolicyConfig, PolicyParams, ACTION_DIM};
use crate::world::generate_world;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub max_epochs: usize,
    /// Weight of the value-matching term relative to the action term.
    pub value_weight: f64,
    /// Stop once this many epochs pass without a relative improvement of `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            learning_rate: 1e-3,
            minibatch_size: 256,
            max_epochs: 200,
            value_weight: 0.1,
            patience: 10,
            min_improvement: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillReport {
    pub epochs: usize,
    /// Mean squared error between squashed action means, per action component.
    pub action_mse: f64,
    pub value_mse: f64,
}

/// Observations visited by rolling out the teacher's mean actions.
pub fn collect_teacher_dataset(teacher: &PolicyParams, config: &RunConfig, n_steps: usize, seed: u64) -> Result<Vec<RobotObservation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = generate_world(&config.world, &config.quad, &mut rng)?;
    let mut ws = teacher.workspace(config.obs.k_neighbors);
    let mut data = Vec::new();
    for _ in 0..n_steps {
        if world.tick >= config.world.episode_length {
            world = generate_world(&config.world, &config.quad, &mut rng)?;
        }
        let obs = observe_all(&world, &config.obs)?;
        let mut actions = Vec::with_capacity(obs.len());
        for o in &obs {
            let pre = teacher.forward_actor(o, &mut ws)?;
            actions.push(pre.map(crate::policy::sigmoid));
        }
        data.extend(obs);
        world.step(&actions, &config.quad)?;
    }
    Ok(data)
}

struct Targets {
    mean: Vec<[f64; ACTION_DIM]>,
    value: Vec<f64>,
}

fn evaluate(student: &PolicyParams, data: &[RobotObservation], targets: &Targets) -> Result<(f64, f64)> {
    let mut ws = student.workspace(data[0].k());
    let (mut am, mut vm) = (0.0, 0.0);
    for (i, o) in data.iter().enumerate() {
        let out = student.forward_with(o, &mut ws)?;
        for k in 0..ACTION_DIM {
            am += (out.action_mean[k] - targets.mean[i][k]).powi(2);
        }
        vm += (out.value - targets.value[i]).powi(2);
    }
    let n = data.len() as f64;
    Ok((am / (n * ACTION_DIM as f64), vm / n))
}

/// Fit a freshly initialized student to the teacher's action means and values
/// by minibatch Adam on mean squared error, until the loss plateaus.
pub fn distill(
    teacher: &PolicyParams,
    student_config: &PolicyConfig,
    dataset: &[RobotObservation],
    cfg: &DistillConfig,
) -> Result<(PolicyParams, DistillReport)> {
    if dataset.is_empty() {
        return Err(Error::config("distill.dataset", "no observations to distill on"));
    }
    let k = dataset[0].k();
    if dataset.iter().any(|o| o.k() != k) {
        return Err(Error::Dimension("dataset mixes neighbor counts".into()));
    }
    student_config.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut student = PolicyParams::init(student_config, &mut rng)?;
    let mut ws = teacher.workspace(k);
    let mut targets = Targets {
        mean: Vec::with_capacity(dataset.len()),
        value: Vec::with_capacity(dataset.len()),
    };
    for o in dataset {
        let out = teacher.forward_with(o, &mut ws)?;
        targets.mean.push(out.action_mean);
        targets.value.push(out.value);
    }

    let mut opt = Adam::new(student.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad = vec![0.0; student.len()];
    let mut ws = student.workspace(k);
    let mb = cfg.minibatch_size.clamp(1, dataset.len());

    let objective = |(a, v): (f64, f64)| a + cfg.value_weight * v;
    let mut best = objective(evaluate(&student, dataset, &targets)?);
    let mut stale = 0;
    let mut epochs = 0;
    while epochs < cfg.max_epochs && stale < cfg.patience {
        order.shuffle(&mut rng);
        for chunk in order.chunks(mb) {
            grad.fill(0.0);
            let w = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let out = student.forward_with(&dataset[i], &mut ws)?;
                let mut g = OutputGrad::default();
                for kk in 0..ACTION_DIM {
                    g.action_mean[kk] = w * 2.0 * (out.action_mean[kk] - targets.mean[i][kk]) / ACTION_DIM as f64;
                }
                g.value = w * cfg.value_weight * 2.0 * (out.value - targets.value[i]);
                student.backward_into(&mut ws, &g, &mut grad);
            }
            clip_grad_norm(&mut grad, 10.0);
            opt.step(student.as_mut_slice(), &grad);
        }
        epochs += 1;
        let loss = objective(evaluate(&student, dataset, &targets)?);
        if loss < best * (1.0 - cfg.min_improvement) {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    let (action_mse, value_mse) = evaluate(&student, dataset, &targets)?;
    Ok((
        student,
        DistillReport {
            epochs,
            action_mse,
            value_mse,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sharp_teacher(config: &PolicyConfig, seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = PolicyParams::init(config, &mut rng).unwrap();
        // Spread the action means across [0, 1] so the target is not trivially 0.5.
        let head = t.layout().actor.head2;
        for v in &mut t.as_mut_slice()[head.w..head.w + head.n_out * head.n_in] {
            *v = rng.gen_range(-1.5..1.5);
        }
        t
    }

    fn dataset(n: usize, seed: u64) -> Vec<RobotObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| RobotObservation {
                self_obs: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                neighbor_obs: vec![std::array::from_fn(|_| rng.gen_range(-1.0..1.0)); 2],
                obstacle_obs: std::array::from_fn(|_| rng.gen_range(0.0..2.0)),
            })
            .collect()
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let c = PolicyConfig::deployment();
        let t = sharp_teacher(&c, 0);
        assert!(distill(&t, &c, &[], &DistillConfig::default()).is_err());
    }

    #[test]
    fn invalid_student_config_is_rejected() {
        let c = PolicyConfig::deployment();
        let t = sharp_teacher(&c, 0);
        let bad = PolicyConfig {
            hidden_dim: 10,
            n_heads: 4,
            ..c
        };
        assert!(matches!(
            distill(&t, &bad, &dataset(4, 0), &DistillConfig::default()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn student_means_stay_bounded() {
        let teacher_cfg = PolicyConfig {
            hidden_dim: 16,
            n_heads: 2,
            ..Default::default()
        };
        let t = sharp_teacher(&teacher_cfg, 1);
        let data = dataset(200, 2);
        let cfg = DistillConfig {
            max_epochs: 5,
            ..Default::default()
        };
        let (s, report) = distill(&t, &PolicyConfig::deployment(), &data, &cfg).unwrap();
        assert!(report.epochs <= 5);
        for o in &data {
            let out = s.forward(o).unwrap();
            assert!(out.action_mean.iter().all(|a| (0.0..=1.0).contains(a)));
        }
    }
}
