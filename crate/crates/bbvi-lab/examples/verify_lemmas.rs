//! Runs the whole numerical verification suite: Jacobian identities,
//! moment identities, smoothness constants, the convexity counter-example,
//! gradient-variance and expected-smoothness bounds, and the
//! strongly-convex convergence rate.
//!
//! ```text
//! cargo run --release --example verify_lemmas [seed]
//! ```

use std::time::Instant;

use bbvi_lab::theory;

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    println!("running the verification suite with seed {seed}\n");
    let started = Instant::now();
    let reports = theory::run_all(seed).expect("suite construction cannot fail");
    let elapsed = started.elapsed();

    let width = reports.iter().map(|r| r.check_name.len()).max().unwrap_or(8);
    println!(
        "{:<width$}  {:<6}  {:>13}  {:>13}",
        "check", "status", "statistic", "tolerance"
    );
    let mut failures = 0;
    for r in &reports {
        println!(
            "{:<width$}  {:<6}  {:>13.6e}  {:>13.6e}",
            r.check_name,
            r.status.name(),
            r.statistic,
            r.tolerance
        );
        if !r.passed() {
            failures += 1;
            println!("    -> {}", r.detail);
        }
    }
    println!("\n{} checks, {failures} failed, {elapsed:?}", reports.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
