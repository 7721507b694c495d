//! Tabular output of a simulation run.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::experiment::SimRow;

pub const CSV_HEADER: [&str; 12] = [
    "design",
    "n",
    "N",
    "rho_or_accuracy",
    "delta",
    "lambda_mode",
    "analytic_power",
    "empirical_power",
    "type1",
    "lambda_rmse",
    "mc_stderr",
    "n_dropped",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn optional(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_default()
}

impl SimResult {
    pub fn max_discrepancy(&self) -> f64 {
        self.rows.iter().map(SimRow::discrepancy).fold(0.0, f64::max)
    }

    /// Tidy CSV, one line per cell. Probabilities carry six decimals and
    /// absent values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Config(format!("writing csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.cell.design.name().to_string(),
                r.cell.n.to_string(),
                r.cell.big_n.to_string(),
                r.cell.quality.to_string(),
                r.cell.delta.to_string(),
                r.lambda_mode.name().to_string(),
                fixed(r.analytic_power),
                fixed(r.empirical_power),
                optional(r.type1),
                optional(r.lambda_rmse),
                fixed(r.mc_stderr),
                r.n_dropped.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("writing csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}
