//! Command-line surface behind the `quadswarm` binary.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{checkpoint_policy, load_checkpoint, save_checkpoint};
use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::evalkit::{named_suite, results_csv, run_suite, v_value_map};
use crate::micro::{export_micro, micro_forward, MicroModel, MicroWorkspace};
use crate::obs::RobotObservation;
use crate::policy::PolicyConfig;
use crate::trainer::distill::{collect_teacher_dataset, distill, DistillConfig};
use crate::trainer::{Adam, Trainer, UpdateMetrics};
use crate::world::{generate_world, ROOM_EXTENT};

#[derive(Debug, Parser)]
#[command(name = "quadswarm", version, about = "Decentralized quadrotor swarm navigation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes config.toml, metrics.jsonl and checkpoint.bin under --out.
    Train {
        #[arg(long, required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long, conflicts_with = "config")]
        resume: Option<PathBuf>,
        /// Stop after this many updates even if the step budget remains.
        #[arg(long)]
        max_updates: Option<u64>,
    },
    /// Evaluate a checkpoint over a scaling suite; writes one CSV row per grid cell.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// base, robots, neighbors, density, size, stress or full.
        #[arg(long, default_value = "base")]
        suite: String,
        #[arg(long, default_value_t = 4)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides world.episode_length.
        #[arg(long)]
        episode_length: Option<u32>,
    },
    /// Critic values over a horizontal slice of the room.
    Vmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        robot: usize,
        #[arg(long, default_value_t = 2.0)]
        z: f64,
        #[arg(long, default_value_t = 0.1)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the generated world.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export the actor of a single-head checkpoint to the micro format.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a checkpoint's policy into the deployment architecture.
    Distill {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Environment steps of teacher rollouts to collect.
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the micro runtime on random observations.
    InferBench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        neighbors: usize,
    },
}

/// Parse arguments, run, and map failures to a one-line `error kind=...` message.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}

pub fn run<W: Write>(command: Command, stdout: &mut W) -> Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            out,
            resume,
            max_updates,
        } => train(config.as_deref(), seed, &out, resume.as_deref(), max_updates, stdout),
        Command::Eval {
            checkpoint,
            suite,
            episodes,
            out,
            seed,
            episode_length,
        } => {
            let cells = named_suite(&suite)?;
            let state = load_checkpoint(&checkpoint)?;
            let params = checkpoint_policy(&state)?;
            let mut config = state.config;
            if let Some(len) = episode_length {
                config.world.episode_length = len;
            }
            let results = run_suite(&params, &config, &cells, episodes, seed)?;
            write_file(&out, results_csv(&results).as_bytes())?;
            say(stdout, format!("wrote {} cells to {}", results.len(), out.display()))
        }
        Command::Vmap {
            checkpoint,
            robot,
            z,
            resolution,
            out,
            seed,
        } => {
            let state = load_checkpoint(&checkpoint)?;
            let params = checkpoint_policy(&state)?;
            let config = &state.config;
            let world = generate_world(&config.world, &config.quad, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let map = v_value_map(&params, &world, &config.obs, robot, z, [ROOM_EXTENT[0], ROOM_EXTENT[1]], resolution)?;
            write_file(&out, map.to_csv().as_bytes())?;
            say(stdout, format!("wrote {}x{} map to {}", map.nx, map.ny, out.display()))
        }
        Command::Export { checkpoint, out } => {
            let params = checkpoint_policy(&load_checkpoint(&checkpoint)?)?;
            let bytes = export_micro(&params)?;
            write_file(&out, &bytes)?;
            say(stdout, format!("wrote {} bytes ({} parameters) to {}", bytes.len(), params.config().inference_param_count(), out.display()))
        }
        Command::Distill {
            checkpoint,
            out,
            steps,
            seed,
        } => {
            let mut state = load_checkpoint(&checkpoint)?;
            let teacher = checkpoint_policy(&state)?;
            let data = collect_teacher_dataset(&teacher, &state.config, steps, seed)?;
            let student_config = PolicyConfig::deployment();
            let cfg = DistillConfig {
                seed,
                ..Default::default()
            };
            let (student, report) = distill(&teacher, &student_config, &data, &cfg)?;
            state.config.policy = student_config;
            state.optimizer = Adam::new(student.len(), state.config.train.ppo.learning_rate);
            state.params = student.as_slice().to_vec();
            save_checkpoint(&out, &state)?;
            say(
                stdout,
                format!(
                    "distilled on {} observations in {} epochs: action_mse={:.3e} value_mse={:.3e}",
                    data.len(),
                    report.epochs,
                    report.action_mse,
                    report.value_mse
                ),
            )
        }
        Command::InferBench { model, iters, neighbors } => {
            let bytes = std::fs::read(&model).map_err(|e| Error::io(&model, e))?;
            let report = infer_bench(&MicroModel::from_bytes(&bytes)?, iters, neighbors)?;
            say(stdout, report.to_string())
        }
    }
}

fn say<W: Write>(w: &mut W, line: String) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io("stdout", e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn train<W: Write>(
    config_path: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    resume: Option<&Path>,
    max_updates: Option<u64>,
    stdout: &mut W,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut trainer = match resume {
        Some(ck) => Trainer::from_state(load_checkpoint(ck)?)?,
        None => {
            let mut config = match config_path {
                Some(p) => load_config(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                config.train.seed = s;
            }
            config.validate()?;
            Trainer::new(config)?
        }
    };
    write_file(&out.join("config.toml"), trainer.config().to_toml().as_bytes())?;

    let log_path = out.join("metrics.jsonl");
    let mut log = OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let ck_path = out.join("checkpoint.bin");
    let every = trainer.config().train.checkpoint_every;
    let mut done = 0u64;
    while !trainer.is_done() && max_updates.map_or(true, |m| done < m) {
        let m = trainer.train_update()?;
        write_metrics_line(&mut log, &m).map_err(|e| Error::io(&log_path, e))?;
        if every > 0 && m.update % every == 0 {
            save_checkpoint(&ck_path, &trainer.state())?;
        }
        done += 1;
    }
    save_checkpoint(&ck_path, &trainer.state())?;
    say(
        stdout,
        format!(
            "trained {} updates ({} env steps); checkpoint at {}",
            trainer.updates(),
            trainer.env_steps(),
            ck_path.display()
        ),
    )
}

pub fn write_metrics_line<W: Write>(log: &mut W, m: &UpdateMetrics) -> std::io::Result<()> {
    let line = serde_json::to_string(m).expect("metrics serialize");
    writeln!(log, "{line}")?;
    log.flush()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub iters: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "iters={} mean_ms={:.6} p50_ms={:.6} p99_ms={:.6} max_ms={:.6}",
            self.iters, self.mean_ms, self.p50_ms, self.p99_ms, self.max_ms
        )
    }
}

/// Per-call latency of [`micro_forward`] over random observations with `neighbors` rows.
pub fn infer_bench(model: &MicroModel, iters: usize, neighbors: usize) -> Result<BenchReport> {
    if iters == 0 {
        return Err(Error::config("iters", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let observations: Vec<RobotObservation> = (0..iters.min(1024))
        .map(|_| RobotObservation {
            self_obs: std::array::from_fn(|_| rng.gen_range(-2.0..2.0)),
            neighbor_obs: (0..neighbors).map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0))).collect(),
            obstacle_obs: std::array::from_fn(|_| rng.gen_range(0.0..2.0)),
        })
        .collect();
    let mut ws = MicroWorkspace::new(model);
    for o in observations.iter().take(100) {
        std::hint::black_box(micro_forward(model, o, &mut ws)?);
    }
    let mut times = Vec::with_capacity(iters);
    for i in 0..iters {
        let o = &observations[i % observations.len()];
        let t = Instant::now();
        std::hint::black_box(micro_forward(model, std::hint::black_box(o), &mut ws)?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / iters as f64;
    times.sort_by(f64::total_cmp);
    let pct = |q: f64| times[((q * (iters - 1) as f64).round() as usize).min(iters - 1)];
    Ok(BenchReport {
        iters,
        mean_ms,
        p50_ms: pct(0.5),
        p99_ms: pct(0.99),
        max_ms: times[iters - 1],
    })
}
