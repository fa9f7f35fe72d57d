use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadswarm::policy::{PolicyConfig, PolicyParams};
use quadswarm::trainer::distill::{collect_teacher_dataset, distill, DistillConfig};
use quadswarm::RunConfig;

#[test]
fn self_distillation_reaches_teacher() {
    let mut config = RunConfig::default();
    config.policy = PolicyConfig::deployment();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut teacher = PolicyParams::init(&config.policy, &mut rng).unwrap();
    // Move the teacher away from the initialization distribution so the student
    // cannot succeed by accident.
    for v in teacher.as_mut_slice() {
        *v += rng.gen_range(-0.3..0.3);
    }
    let data = collect_teacher_dataset(&teacher, &config, 150, 3).unwrap();
    let (student, report) = distill(&teacher, &config.policy, &data, &DistillConfig::default()).unwrap();
    assert!(report.action_mse < 1e-4, "{report:?}");
    for o in data.iter().step_by(37) {
        let out = student.forward(o).unwrap();
        assert!(out.action_mean.iter().all(|m| (0.0..=1.0).contains(m)));
    }
}
