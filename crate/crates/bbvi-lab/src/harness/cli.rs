//! Command-line interface.
//!
//! Subcommands: `verify` (numerical verification suite), `sweep`
//! (stepsize-grid benchmark), `run` (trajectories), `constants` (softplus
//! smoothness constants). Exit codes: 0 on success, 1 when a verification
//! check fails, 2 on configuration errors.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::{csv, sweep};
use crate::theory;

pub const USAGE: &str = "\
usage: bbvi-lab <command> [flags]

commands:
  verify      run the numerical verification suite
  sweep       run a stepsize/initialization sweep, write sweep CSV
  run         run trajectories, write trajectory CSV
  constants   print the softplus smoothness constants

flags:
  --config PATH   experiment configuration file (sweep, run)
  --seed U64      seed override (defaults to BBVI_LAB_SEED, then 0)
  --out PATH      output file (CSV for sweep/run, records for verify)
  --threads N     worker threads for sweep cells (default 1)
";

/// Verification-suite wall clock budget, seconds.
const VERIFY_BUDGET_SECS: u64 = 300;

struct Flags {
    config: Option<String>,
    seed: Option<u64>,
    out: Option<String>,
    threads: usize,
}

fn parse_flags(args: &[String]) -> Result<Flags> {
    let mut flags = Flags {
        config: None,
        seed: None,
        out: None,
        threads: 1,
    };
    let mut i = 0;
    while i < args.len() {
        let flag = args[i].as_str();
        let value = args.get(i + 1).ok_or_else(|| {
            Error::Config(format!("flag '{flag}' expects a value"))
        });
        match flag {
            "--config" => flags.config = Some(value?.clone()),
            "--out" => flags.out = Some(value?.clone()),
            "--seed" => {
                flags.seed = Some(value?.parse().map_err(|_| {
                    Error::Config(format!("bad seed '{}'", args[i + 1]))
                })?)
            }
            "--threads" => {
                flags.threads = value?.parse().map_err(|_| {
                    Error::Config(format!("bad thread count '{}'", args[i + 1]))
                })?;
                if flags.threads == 0 {
                    return Err(Error::Config("thread count must be >= 1".into()));
                }
            }
            other => return Err(Error::Config(format!("unknown flag '{other}'"))),
        }
        i += 2;
    }
    Ok(flags)
}

fn env_seed() -> Option<u64> {
    std::env::var("BBVI_LAB_SEED").ok().and_then(|v| v.parse().ok())
}

/// Flag wins, then the environment fallback, then zero.
fn effective_seed(flags: &Flags) -> u64 {
    flags.seed.or_else(env_seed).unwrap_or(0)
}

fn report_lines(reports: &[theory::VerificationReport]) -> String {
    let mut text = String::new();
    for r in reports {
        text.push_str(&format!(
            "{{\"check\":\"{}\",\"status\":\"{}\",\"statistic\":{},\"tolerance\":{},\"seed\":{}}}\n",
            r.check_name,
            r.status.name(),
            csv::fmt_float(r.statistic),
            csv::fmt_float(r.tolerance),
            r.seed,
        ));
    }
    text
}

fn report_table(reports: &[theory::VerificationReport]) -> String {
    let mut text = String::new();
    let width = reports
        .iter()
        .map(|r| r.check_name.len())
        .max()
        .unwrap_or(8)
        .max(8);
    text.push_str(&format!(
        "{:<width$}  {:<6}  {:>13}  {:>13}  detail\n",
        "check", "status", "statistic", "tolerance"
    ));
    for r in reports {
        text.push_str(&format!(
            "{:<width$}  {:<6}  {:>13.6e}  {:>13.6e}  {}\n",
            r.check_name,
            r.status.name(),
            r.statistic,
            r.tolerance,
            r.detail
        ));
    }
    text
}

fn cmd_verify(flags: &Flags, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let seed = effective_seed(flags);
    let started = Instant::now();
    let reports = theory::run_all(seed)?;
    let elapsed = started.elapsed();
    out.write_all(report_table(&reports).as_bytes())?;
    let lines = report_lines(&reports);
    match flags.out.as_deref() {
        Some(p) => std::fs::write(p, lines)?,
        None => out.write_all(lines.as_bytes())?,
    }
    let mut failed = reports.iter().filter(|r| !r.passed()).count();
    if elapsed.as_secs() >= VERIFY_BUDGET_SECS {
        writeln!(
            err,
            "verification suite exceeded its {VERIFY_BUDGET_SECS}s budget ({}s)",
            elapsed.as_secs()
        )?;
        failed += 1;
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

/// Seed precedence: --seed flag, then an explicit config file's value, then
/// the environment fallback over the built-in defaults.
fn load_config(flags: &Flags) -> Result<ExperimentConfig> {
    let mut config = match flags.config.as_deref() {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = flags.seed {
        config.base_seed = seed;
    } else if flags.config.is_none() {
        if let Some(seed) = env_seed() {
            config.base_seed = seed;
        }
    }
    if let Some(out) = &flags.out {
        config.output_path = out.clone();
    }
    Ok(config)
}

fn with_thread_pool<T: Send>(threads: usize, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(job)
}

fn cmd_sweep(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let config = load_config(flags)?;
    let rows = with_thread_pool(flags.threads, || {
        sweep::run_sweep(&config, &config.sweep_stepsizes, &config.sweep_init_scales)
    })?;
    let text = csv::sweep_csv(&rows);
    std::fs::write(&config.output_path, &text)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), config.output_path)?;
    Ok(0)
}

fn cmd_run(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let config = load_config(flags)?;
    let rows = sweep::run_single(&config)?;
    let text = csv::trajectory_csv(&rows);
    std::fs::write(&config.output_path, &text)?;
    writeln!(out, "wrote {} rows to {}", rows.len(), config.output_path)?;
    Ok(0)
}

fn cmd_constants(out: &mut dyn Write) -> Result<i32> {
    let (l_h, l_s) = theory::softplus_constants();
    writeln!(out, "softplus entropy smoothness constant: {l_h:.6}")?;
    writeln!(out, "softplus energy smoothness factor:    {l_s:.6}")?;
    writeln!(out, "exp entropy smoothness constant:      {:.6}", theory::exp_entropy_smoothness())?;
    Ok(0)
}

/// Runs the CLI against explicit streams and returns the process exit code.
/// `args` excludes the program name.
pub fn cli(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(command) = args.first() else {
        let _ = err.write_all(USAGE.as_bytes());
        return 2;
    };
    let flags = match parse_flags(&args[1..]) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            let _ = err.write_all(USAGE.as_bytes());
            return 2;
        }
    };
    let result = match command.as_str() {
        "verify" => cmd_verify(&flags, out, err),
        "sweep" => cmd_sweep(&flags, out),
        "run" => cmd_run(&flags, out),
        "constants" => cmd_constants(out),
        other => {
            let _ = writeln!(err, "error: unknown command '{other}'");
            let _ = err.write_all(USAGE.as_bytes());
            return 2;
        }
    };
    match result {
        Ok(code) => code,
        Err(e @ (Error::Config(_) | Error::Io(_))) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
