use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentKind, MethodRun, Provenance};
use crate::error::{Error, Result};
use crate::optim::{Method, TraceRecord};

pub const TRACE_CSV_HEADER: [&str; 6] = [
    "iteration",
    "objective",
    "gradient_norm",
    "step_norm",
    "damping",
    "elapsed_seconds",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub model: String,
    pub seed: u64,
    pub provenance: Provenance,
    pub n_train: usize,
    pub n_test: usize,
    pub a0: Vec<f64>,
    pub runs: Vec<MethodRun>,
}

impl ExperimentReport {
    pub fn run(&self, method: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }
}

/// Train and test errors with one column per method, in table order.
pub fn format_mse_table(report: &ExperimentReport) -> String {
    let mut runs: Vec<&MethodRun> = report.runs.iter().collect();
    runs.sort_by_key(|r| r.method);
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "");
    for r in &runs {
        let _ = write!(out, "{:>10}", r.method.label());
    }
    out.push('\n');
    let _ = write!(out, "{:<12}", "Train MSE");
    for r in &runs {
        let _ = write!(out, "{:>10.4}", r.train_mse);
    }
    out.push('\n');
    let _ = write!(out, "{:<12}", "Test MSE");
    for r in &runs {
        match r.test_mse {
            Some(v) => {
                let _ = write!(out, "{v:>10.4}");
            }
            None => {
                let _ = write!(out, "{:>10}", "-");
            }
        }
    }
    out.push('\n');
    out
}

/// Writes a trace as CSV with the fixed column order of `TRACE_CSV_HEADER`.
pub fn write_trace_csv<W: Write>(writer: W, trace: &[TraceRecord]) -> Result<()> {
    let to_err = |e: csv::Error| Error::InvalidInput(format!("writing trace: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_CSV_HEADER).map_err(to_err)?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.objective),
            format!("{:e}", r.gradient_norm),
            format!("{:e}", r.step_norm),
            format!("{:e}", r.damping),
            format!("{:e}", r.elapsed),
        ])
        .map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_has_fixed_header_and_round_trips() {
        let trace = vec![
            TraceRecord {
                iteration: 0,
                objective: 1.5,
                gradient_norm: 2.0,
                step_norm: 0.0,
                damping: 1e-3,
                elapsed: 0.0,
            },
            TraceRecord {
                iteration: 1,
                objective: 0.1 + 0.2,
                gradient_norm: 1e-9,
                step_norm: 0.25,
                damping: 5e-4,
                elapsed: 0.01,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,objective,gradient_norm,step_norm,damping,elapsed_seconds"
        );
        let second: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        // Shortest round-trip formatting keeps every bit.
        assert_eq!(second[1].parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}
