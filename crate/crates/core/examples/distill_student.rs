//! Compress a training-size teacher into the deployment architecture.

use quadswarm::evalkit::{run_episode, score_episode};
use quadswarm::policy::{PolicyConfig, PolicyParams};
use quadswarm::trainer::distill::{collect_teacher_dataset, distill, DistillConfig};
use quadswarm::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let mut config = RunConfig::default();
    config.policy = PolicyConfig {
        hidden_dim: 32,
        n_heads: 4,
        ..PolicyConfig::training()
    };
    let teacher = PolicyParams::init(&config.policy, &mut ChaCha8Rng::seed_from_u64(5))?;
    let data = collect_teacher_dataset(&teacher, &config, 400, 1)?;
    let student_config = PolicyConfig::deployment();
    let (student, report) = distill(&teacher, &student_config, &data, &DistillConfig::default())?;
    println!(
        "teacher {} params -> student {} params on {} observations: {} epochs, action mse {:.2e}, value mse {:.2e}",
        teacher.len(),
        student.len(),
        data.len(),
        report.epochs,
        report.action_mse,
        report.value_mse
    );

    let mut student_run = config.clone();
    student_run.policy = student_config;
    let t = score_episode(&run_episode(&teacher, &config, 9)?, 0.3);
    let s = score_episode(&run_episode(&student, &student_run, 9)?, 0.3);
    println!("final distance teacher {:.3} m, student {:.3} m", t.mean_final_distance, s.mean_final_distance);
    Ok(())
}
