//! Per-column summaries of a run over unflagged replications.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::experiment::{RowStatus, RunRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub column: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation, `n - 1` denominator.
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub used: usize,
    pub flagged: usize,
    pub failed: usize,
    pub columns: Vec<ColumnSummary>,
}

/// Mean and sd of every column over `ok` rows without flags.
pub fn summarize(run: &RunRecord) -> Result<Summary> {
    let clean: Vec<_> = run
        .rows
        .iter()
        .filter(|r| r.status == RowStatus::Ok && r.flags.is_empty())
        .collect();
    if clean.len() < 2 {
        return Err(Error::TooFewRows(clean.len()));
    }
    let failed = run.rows.iter().filter(|r| r.status == RowStatus::Failed).count();
    let columns = run
        .columns
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let v: Vec<f64> = clean.iter().filter_map(|r| r.values[i]).collect();
            let n = v.len();
            // moments about the first value
            let shift = v.first().copied().unwrap_or(f64::NAN);
            let d_mean = v.iter().map(|x| x - shift).sum::<f64>() / n as f64;
            let mean = shift + d_mean;
            let sd = if n < 2 {
                f64::NAN
            } else {
                (v.iter().map(|x| (x - shift - d_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            ColumnSummary {
                column: name.clone(),
                n,
                mean,
                sd,
            }
        })
        .collect();
    Ok(Summary {
        used: clean.len(),
        flagged: run.rows.len() - clean.len() - failed,
        failed,
        columns,
    })
}

impl Summary {
    pub fn to_table(&self) -> String {
        let w = self.columns.iter().map(|c| c.column.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{:<w$}  {:>4}  {:>14}  {:>14}", "column", "n", "mean", "sd");
        for c in &self.columns {
            let _ = writeln!(s, "{:<w$}  {:>4}  {:>14.6e}  {:>14.6e}", c.column, c.n, c.mean, c.sd);
        }
        let _ = writeln!(s, "rows used: {}, flagged: {}, failed: {}", self.used, self.flagged, self.failed);
        s
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for c in &self.columns {
            out.serialize(c).map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn get(&self, column: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.column == column)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::RepRow;

    fn row(rep: usize, v: f64, flags: &[&str], status: RowStatus) -> RepRow {
        RepRow {
            rep,
            seed: rep as u64,
            status,
            values: vec![Some(v), None],
            flags: flags.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn excludes_flagged_and_failed_rows() {
        let run = RunRecord {
            columns: vec!["a".into(), "b".into()],
            rows: vec![
                row(0, 1.0, &[], RowStatus::Ok),
                row(1, 3.0, &[], RowStatus::Ok),
                row(2, 100.0, &["alpha_clamped"], RowStatus::Ok),
                row(3, 100.0, &["failed:io"], RowStatus::Failed),
            ],
        };
        let s = summarize(&run).unwrap();
        assert_eq!((s.used, s.flagged, s.failed), (2, 1, 1));
        let a = s.get("a").unwrap();
        assert_eq!(a.mean, 2.0);
        assert!((a.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.get("b").unwrap().n, 0);
        assert!(s.to_table().contains("rows used: 2"));
    }

    #[test]
    fn too_few_rows() {
        let run = RunRecord {
            columns: vec!["a".into(), "b".into()],
            rows: vec![row(0, 1.0, &[], RowStatus::Ok), row(1, 1.0, &["x"], RowStatus::Ok)],
        };
        assert!(matches!(summarize(&run), Err(Error::TooFewRows(1))));
    }
}
