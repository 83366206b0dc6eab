//! Cross-validation summary as CSV and as a plain-text table.

use std::io::Write;

use psnl_core::CvSummary;

pub const CSV_HEADER: &str = "rotation,rmse,n_pairs,train_seconds,tune_seconds";

/// Writes the per-rotation CSV. With `timing = false` both time columns are
/// written as `0` so the file depends only on seed and configuration.
pub fn write_csv<W: Write>(mut out: W, summary: &CvSummary, timing: bool) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &summary.rotations {
        let e = &r.eval;
        if timing {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                r.rotation, e.rmse, e.n_pairs, e.wall_time_train, e.wall_time_tune
            )?;
        } else {
            writeln!(out, "{},{},{},0,0", r.rotation, e.rmse, e.n_pairs)?;
        }
    }
    Ok(())
}

pub fn write_table<W: Write>(mut out: W, summary: &CvSummary) -> std::io::Result<()> {
    writeln!(
        out,
        "{:>8}  {:>10}  {:>8}  {:>10}  {:>10}  {:>9}  {:>9}  {:>9}  {:>9}",
        "rotation", "rmse", "pairs", "train s", "tune s", "lambda", "gamma", "mu", "eta"
    )?;
    for r in &summary.rotations {
        let (e, p) = (&r.eval, &r.params);
        writeln!(
            out,
            "{:>8}  {:>10.6}  {:>8}  {:>10.3}  {:>10.3}  {:>9.3e}  {:>9.3e}  {:>9.3e}  {:>9.3e}",
            r.rotation,
            e.rmse,
            e.n_pairs,
            e.wall_time_train,
            e.wall_time_tune,
            p.lambda,
            p.gamma,
            p.mu,
            p.eta
        )?;
    }
    writeln!(
        out,
        "rmse {:.6} ± {:.2e} over {} rotations",
        summary.mean_rmse,
        summary.std_rmse,
        summary.rotations.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use psnl_core::{EvalResult, HyperParams, RotationResult};

    fn summary() -> CvSummary {
        let rot = |r: usize, rmse: f64| RotationResult {
            rotation: r,
            seed: 7,
            params: HyperParams::default(),
            iterations: 10,
            eval: EvalResult {
                rmse,
                n_pairs: 20,
                wall_time_train: 1.25,
                wall_time_tune: 0.5,
            },
        };
        CvSummary {
            rotations: vec![rot(0, 0.25), rot(1, 0.5)],
            mean_rmse: 0.375,
            std_rmse: 0.1767766952966369,
            seeds: vec![7, 7],
            shared_tune_time: 0.5,
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &summary(), true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rotation,rmse,n_pairs,train_seconds,tune_seconds\n\
             0,0.25,20,1.250000,0.500000\n\
             1,0.5,20,1.250000,0.500000\n"
        );
        let mut buf = Vec::new();
        write_csv(&mut buf, &summary(), false).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("1,0.5,20,0,0\n"));
    }

    #[test]
    fn table_has_mean_line() {
        let mut buf = Vec::new();
        write_table(&mut buf, &summary()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("rmse 0.375000 ± 1.77e-1 over 2 rotations"));
    }
}
