use std::path::Path;
use std::process::{Command, Output};

const DEPLOY_CONFIG: &str = "\
[world]
n_robots = 3
obstacle_density = 0.2
episode_length = 60

[policy]
hidden_dim = 10
n_heads = 1

[train]
n_parallel_envs = 1
horizon = 40
total_env_steps = 100000

[train.ppo]
minibatch_size = 40
epochs = 1
";

fn quadswarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadswarm")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn trained(dir: &Path, config: &str) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("run");
    let o = quadswarm(&["train", "--config", s(&cfg), "--out", s(&out), "--max-updates", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count(), 2);
    assert!(out.join("config.toml").exists());
    out.join("checkpoint.bin")
}

#[test]
fn train_export_bench_eval_vmap() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path(), DEPLOY_CONFIG);

    let model = dir.path().join("policy.swgp");
    let o = quadswarm(&["export", "--checkpoint", s(&ck), "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::metadata(&model).unwrap().len() <= 8192);

    let o = quadswarm(&["infer-bench", "--model", s(&model), "--iters", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("mean_ms"), "{text}");

    let csv = dir.path().join("eval.csv");
    let o = quadswarm(&[
        "eval", "--checkpoint", s(&ck), "--suite", "size", "--episodes", "1", "--episode-length", "30", "--out", s(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<String> = std::fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(rows.len(), 1 + 3, "{rows:?}");
    assert!(rows[0].starts_with("n_robots,"));

    let map = dir.path().join("vmap.csv");
    let o = quadswarm(&["vmap", "--checkpoint", s(&ck), "--resolution", "0.5", "--out", s(&map)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&map).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 20);
    assert!(data.iter().all(|l| l.split(',').count() == 20));
}

#[test]
fn multi_head_export_reports_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path(), &DEPLOY_CONFIG.replace("n_heads = 1", "n_heads = 2"));
    let o = quadswarm(&["export", "--checkpoint", s(&ck), "--out", s(&dir.path().join("x.swgp"))]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error kind=config"), "{err}");
    assert!(err.contains("policy.n_heads"), "{err}");
}

#[test]
fn distilled_checkpoint_exports() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path(), &DEPLOY_CONFIG.replace("hidden_dim = 10", "hidden_dim = 16"));
    let student = dir.path().join("student.bin");
    let o = quadswarm(&["distill", "--checkpoint", s(&ck), "--out", s(&student), "--steps", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = quadswarm(&["export", "--checkpoint", s(&student), "--out", s(&dir.path().join("s.swgp"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadswarm(&["train", "--out", s(dir.path())]);
    assert!(!o.status.success());

    let o = quadswarm(&["eval", "--checkpoint", s(&dir.path().join("missing.bin")), "--out", "x.csv"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error kind=io"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let o = quadswarm(&["export", "--checkpoint", s(&junk), "--out", s(&dir.path().join("y"))]);
    assert!(stderr(&o).starts_with("error kind=decode"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[world]\nobstacle_density = 1.5\n").unwrap();
    let o = quadswarm(&["train", "--config", s(&cfg), "--out", s(dir.path())]);
    let err = stderr(&o);
    assert!(err.starts_with("error kind=config"), "{err}");
    assert!(err.contains("world.obstacle_density"), "{err}");
}
