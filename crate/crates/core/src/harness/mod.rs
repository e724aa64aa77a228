//! Experiment harness: configuration, Monte Carlo drivers and CSV output.

pub mod config;
pub mod experiments;

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use config::{ExperimentConfig, ExperimentKind, Method};
pub use experiments::{
    run_coverage_experiment, run_experiment, run_ks_experiment, run_power_experiment,
    run_probe_experiment, simulate_replicates, truth_distributions, Design, Replicate,
};

/// A CSV table with a fixed header; rows are preformatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: String,
    pub rows: Vec<String>,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self {
            header: header.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: String) {
        self.rows.push(row);
    }

    /// UTF-8 text with LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.header.len() + 32 * self.rows.len());
        s.push_str(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Reads a numeric CSV matrix (rows are observations). Blank lines are
/// ignored; `skip_header` drops the first line.
pub fn read_matrix_csv<R: BufRead>(r: R, skip_header: bool) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if (skip_header && i == 0) || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: format!("`{}`: {e}", c.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("csv matrix"));
    }
    let (n, d) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// Reads a vector stored as a single CSV row or a single column.
pub fn read_vector_csv<R: BufRead>(r: R, skip_header: bool) -> Result<Vec<f64>> {
    let m = read_matrix_csv(r, skip_header)?;
    if m.nrows() == 1 || m.ncols() == 1 {
        Ok(m.iter().copied().collect())
    } else {
        Err(Error::Parse {
            line: 1,
            reason: format!("expected a vector, found a {}x{} matrix", m.nrows(), m.ncols()),
        })
    }
}
