//! Traces the objective along one scale coordinate for the linear and
//! softplus parameterizations of the same two-dimensional target, the
//! construction on which the convexity-transfer assumption fails. Writes
//! `landscape.csv` with columns `s1,objective_identity,objective_softplus`.
//!
//! The linear curve sits above a quadratic everywhere (strong convexity is
//! preserved); the softplus curve flattens to a line as s1 decreases, so
//! gradient steps crawl once the scale initialization is small.
//!
//! ```text
//! cargo run --release --example convexity_landscape
//! ```

use std::fmt::Write as _;

use bbvi_lab::family::{self, Conditioner, FamilyConfig, VariationalParams};
use bbvi_lab::linalg::Matrix;
use bbvi_lab::targets::QuadraticTarget;

fn main() {
    let a = Matrix::from_rows(&[&[1.0, -2.0], &[-2.0, 5.0]]).unwrap();
    let target = QuadraticTarget::new(a, vec![0.0; 2], 0.0).unwrap();
    // the optimal scale is [[2.23607, 0], [0.894427, 0.447214]]; pin the
    // second row and move the first diagonal coordinate
    let c21 = 0.8944271909999159;
    let c22 = 0.4472135954999579;

    let objective = |cond: Conditioner, s1: f64| -> f64 {
        let config = FamilyConfig::cholesky(2, cond);
        let p = VariationalParams::new(
            &config,
            vec![0.0; 2],
            vec![s1, cond.inverse(c22).unwrap()],
            vec![c21],
        )
        .unwrap();
        family::elbo_closed_form(&p, &config, &target).unwrap()
    };

    let mut csv = String::from("s1,objective_identity,objective_softplus\n");
    let mut printed = 0;
    for k in 0..=600 {
        let s1 = -30.0 + 37.0 * k as f64 / 600.0;
        let softplus_val = objective(Conditioner::Softplus, s1);
        if s1 > 0.0 {
            let _ = writeln!(csv, "{s1},{},{}", objective(Conditioner::Identity, s1), softplus_val);
        } else {
            let _ = writeln!(csv, "{s1},,{softplus_val}");
        }
        if k % 100 == 0 {
            println!(
                "s1 = {s1:>6.1}   softplus objective = {softplus_val:>9.4}{}",
                if s1 > 0.0 {
                    format!("   identity objective = {:.4}", objective(Conditioner::Identity, s1))
                } else {
                    String::new()
                }
            );
            printed += 1;
        }
    }
    std::fs::write("landscape.csv", csv).expect("writable working directory");
    println!("\nprinted {printed} sample points, wrote landscape.csv (601 rows)");
}
