//! A reduced stepsize-versus-iterations sweep comparing proximal SGD
//! against vanilla SGD with linear and softplus scale parameterizations,
//! under three initial scales. Writes `sweep.csv` and prints the
//! best-over-grid iteration counts per curve.
//!
//! The full-size benchmark (d = 10, 13 stepsizes, 10 replications) is the
//! CLI default: `bbvi-lab sweep --threads 8 --out sweep.csv`.
//!
//! ```text
//! cargo run --release --example stepsize_sweep
//! ```

use bbvi_lab::harness::{self, sweep_csv, ExperimentConfig, TargetSpec};

fn main() {
    let config = ExperimentConfig {
        target: TargetSpec::Generated {
            dim: 6,
            kappa: 10.0,
            smoothness: 100.0,
        },
        replications: 5,
        max_iters: 20_000,
        sweep_stepsizes: (0..7).map(|k| 10f64.powf(-5.0 + 0.75 * k as f64)).collect(),
        ..ExperimentConfig::default()
    };
    let rows = harness::run_sweep(&config, &config.sweep_stepsizes, &config.sweep_init_scales)
        .expect("valid sweep configuration");
    std::fs::write("sweep.csv", sweep_csv(&rows)).expect("writable working directory");
    println!("wrote sweep.csv ({} rows)\n", rows.len());

    println!(
        "{:<22}  {:>10}  {:>16}",
        "curve", "init", "best mean iters"
    );
    for variant in &config.sweep_variants {
        for &init in &config.sweep_init_scales {
            let mut best = f64::INFINITY;
            for &step in &config.sweep_stepsizes {
                let cell: Vec<_> = rows
                    .iter()
                    .filter(|r| {
                        r.optimizer == variant.optimizer.name()
                            && r.conditioner == variant.conditioner.name()
                            && r.stepsize == step
                            && r.init_scale == init
                    })
                    .collect();
                if cell.iter().all(|r| r.iters_to_eps.is_some()) && !cell.is_empty() {
                    let mean = cell
                        .iter()
                        .map(|r| r.iters_to_eps.unwrap() as f64)
                        .sum::<f64>()
                        / cell.len() as f64;
                    best = best.min(mean);
                }
            }
            let shown = if best.is_finite() {
                format!("{best:.1}")
            } else {
                "never reached".to_string()
            };
            println!("{:<22}  {:>10.0e}  {:>16}", variant.encode(), init, shown);
        }
    }
    println!("\nthreshold: KL <= {} against the exact posterior", config.eps_kl);
}
