//! End-to-end checks of the installed binary: exit codes, output schemas,
//! and the environment seed fallback.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bbvi-lab"))
}

fn tmp(name: &str) -> String {
    let dir = std::env::temp_dir().join("bbvi_lab_cli_tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn constants_prints_and_exits_zero() {
    let out = bin().arg("constants").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.167096"), "{text}");
    assert!(text.contains("0.260345"), "{text}");
}

#[test]
fn bad_invocations_exit_two() {
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("usage"));

    let out = bin().args(["sweep", "--config", "missing.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["constants", "--bogus", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn small_run_config(seed: u64, out_path: &str) -> String {
    format!(
        "target.kind = generated\n\
         target.dim = 2\n\
         target.kappa = 4.0\n\
         target.smoothness = 4.0\n\
         family.kind = cholesky\n\
         family.conditioner = identity\n\
         optimizer.kind = prox_sgd\n\
         estimator.kind = cfe\n\
         schedule.kind = fixed\n\
         schedule.gamma = 1.0e-2\n\
         run.samples_per_step = 4\n\
         run.max_iters = 100\n\
         run.eps_kl = 1.0\n\
         run.replications = 2\n\
         run.base_seed = {seed}\n\
         run.checkpoint_every = 25\n\
         run.init_scale = 1.0\n\
         output.path = {out_path}\n\
         sweep.stepsizes = 1.0e-2\n\
         sweep.init_scales = 1.0\n\
         sweep.variants = prox_sgd:identity\n"
    )
}

#[test]
fn run_emits_trajectory_schema() {
    let cfg = tmp("run.cfg");
    let csv = tmp("run.csv");
    std::fs::write(&cfg, small_run_config(3, &csv)).unwrap();
    let out = bin().args(["run", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,optimizer,conditioner,estimator,stepsize,init_scale,iteration,kl,param_dist_sq,elbo,clamps"
    );
    // 2 replications x checkpoints at 0, 25, 50, 75, 100
    assert_eq!(lines.count(), 10);
}

#[test]
fn sweep_emits_sweep_schema() {
    let cfg = tmp("sweep.cfg");
    let csv = tmp("sweep.csv");
    std::fs::write(&cfg, small_run_config(4, &csv)).unwrap();
    let out = bin().args(["sweep", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "trial,optimizer,conditioner,stepsize,init_scale,iters_to_eps,censored,final_kl"
    );
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn env_seed_is_the_fallback_and_flag_wins() {
    let r1 = tmp("env_a.jsonl");
    let r2 = tmp("env_b.jsonl");
    let r3 = tmp("env_c.jsonl");
    // --seed 9 with a conflicting environment value
    let st = bin()
        .args(["verify", "--seed", "9", "--out", &r1])
        .env("BBVI_LAB_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    // environment only
    let st = bin()
        .args(["verify", "--out", &r2])
        .env("BBVI_LAB_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    // explicit seed 9, no environment
    let st = bin()
        .args(["verify", "--seed", "9", "--out", &r3])
        .env_remove("BBVI_LAB_SEED")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    let a = std::fs::read(&r1).unwrap();
    let b = std::fs::read(&r2).unwrap();
    let c = std::fs::read(&r3).unwrap();
    assert_eq!(a, c, "flag must override the environment");
    assert_eq!(b, c, "environment must act as the fallback seed");
}
