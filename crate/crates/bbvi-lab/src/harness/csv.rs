//! CSV emission. Numeric fields carry 17 significant digits so outputs are
//! byte-stable and parse back to the exact double.

use crate::harness::sweep::{SweepRow, TrajectoryRow};

pub const TRAJECTORY_HEADER: &str =
    "trial,optimizer,conditioner,estimator,stepsize,init_scale,iteration,kl,param_dist_sq,elbo,clamps";

pub const SWEEP_HEADER: &str =
    "trial,optimizer,conditioner,stepsize,init_scale,iters_to_eps,censored,final_kl";

/// 17 significant digits, scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => fmt_float(x),
        _ => String::new(),
    }
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.optimizer,
            r.conditioner,
            r.estimator,
            fmt_float(r.stepsize),
            fmt_float(r.init_scale),
            r.iteration,
            fmt_opt(r.kl),
            fmt_opt(r.param_dist_sq),
            fmt_float(r.elbo),
            r.clamps,
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.optimizer,
            r.conditioner,
            fmt_float(r.stepsize),
            fmt_float(r.init_scale),
            r.iters_to_eps.map(|v| v.to_string()).unwrap_or_default(),
            r.censored,
            fmt_opt(r.final_kl),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_roundtrips() {
        for &v in &[0.5, 1.0 / 3.0, 1e-300, -2.2250738585072014e-308, 12345.6789] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v, back, "{s}");
        }
    }

    #[test]
    fn missing_fields_serialize_empty() {
        let rows = vec![TrajectoryRow {
            trial: 0,
            optimizer: "sgd",
            conditioner: "softplus",
            estimator: "cfe",
            stepsize: 0.1,
            init_scale: 1.0,
            iteration: 3,
            kl: None,
            param_dist_sq: None,
            elbo: 1.25,
            clamps: 0,
        }];
        let text = trajectory_csv(&rows);
        let line = text.lines().nth(1).unwrap();
        assert!(line.contains(",,,"), "{line}");
    }
}
