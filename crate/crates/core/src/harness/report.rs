use std::io::Write;

use super::convergence::ConvergenceRow;
use super::HarnessError;

pub const CSV_HEADER: [&str; 10] = [
    "case",
    "n",
    "M",
    "replications",
    "rmse_value",
    "rmse_grad_max",
    "combined_error",
    "error_bound",
    "draws",
    "wall_seconds",
];

/// Writes the fixed-schema table. Missing timings are written as `NA`.
pub fn write_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.replications.to_string(),
            r.rmse_value.to_string(),
            r.rmse_grad_max.to_string(),
            r.combined_error.to_string(),
            r.error_bound.to_string(),
            r.draws.to_string(),
            r.wall_seconds.map_or_else(|| "NA".to_string(), |s| format!("{s:.6}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_na_timing() {
        let row = ConvergenceRow {
            case: "c".into(),
            n: 2,
            m: 3,
            replications: 10,
            rmse_value: 0.5,
            rmse_grad_max: 0.25,
            combined_error: 0.125,
            combined_upper_95: 1.0,
            error_bound: f64::INFINITY,
            draws: 42,
            wall_seconds: None,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "case,n,M,replications,rmse_value,rmse_grad_max,combined_error,error_bound,draws,wall_seconds\n\
             c,2,3,10,0.5,0.25,0.125,inf,42,NA\n"
        );
    }
}
