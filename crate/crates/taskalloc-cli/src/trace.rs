//! Streaming trace.csv writer and reader.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use taskalloc::TraceRow;

use crate::fmt::f17;

pub const TRACE_HEADER: [&str; 7] =
    ["iter", "mse", "objective", "power_residual", "coupling_residual", "active_users", "theta"];

/// Rows between forced flushes, so a killed run still leaves a usable trace.
pub const FLUSH_EVERY: usize = 100;

pub struct TraceWriter {
    out: csv::Writer<BufWriter<File>>,
    rows: usize,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<TraceWriter> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = csv::Writer::from_writer(BufWriter::new(file));
        out.write_record(TRACE_HEADER)?;
        out.flush()?;
        Ok(TraceWriter { out, rows: 0 })
    }

    pub fn push(&mut self, r: &TraceRow) -> Result<()> {
        let theta = r.theta.map(f17).unwrap_or_default();
        self.out.write_record([
            r.iter.to_string(),
            f17(r.mse),
            f17(r.objective),
            f17(r.power_residual),
            f17(r.coupling_residual),
            r.active_users.to_string(),
            theta,
        ])?;
        self.rows += 1;
        if self.rows.is_multiple_of(FLUSH_EVERY) {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub mse: f64,
    pub objective: f64,
    pub power_residual: f64,
    pub coupling_residual: f64,
    pub active_users: usize,
    pub theta: Option<f64>,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.headers().with_context(|| format!("{}: malformed trace", path.display()))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        bail!("{}: malformed trace, unexpected header {:?}", path.display(), header.iter().collect::<Vec<_>>());
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: malformed trace", path.display()))?;
        let field = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .with_context(|| format!("{}: malformed trace at row {}, column {}", path.display(), line + 1, TRACE_HEADER[j]))
        };
        let int = |j: usize| -> Result<usize> {
            rec[j]
                .parse::<usize>()
                .with_context(|| format!("{}: malformed trace at row {}, column {}", path.display(), line + 1, TRACE_HEADER[j]))
        };
        rows.push(TraceRecord {
            iter: int(0)?,
            mse: field(1)?,
            objective: field(2)?,
            power_residual: field(3)?,
            coupling_residual: field(4)?,
            active_users: int(5)?,
            theta: if rec[6].is_empty() { None } else { Some(field(6)?) },
        });
    }
    if rows.is_empty() {
        bail!("{}: no rows", path.display());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: usize, mse: f64, theta: Option<f64>) -> TraceRow {
        TraceRow {
            iter,
            mse,
            objective: 0.1 / iter as f64,
            power_residual: 1e-9,
            coupling_residual: 2e-9,
            active_users: 3,
            wall_time_ns: 12345,
            theta,
        }
    }

    #[test]
    fn flushes_every_hundred_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let mut w = TraceWriter::create(&path).unwrap();
        for i in 1..=FLUSH_EVERY {
            w.push(&row(i, 1.0 / i as f64, None)).unwrap();
        }
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, FLUSH_EVERY + 1);
        w.push(&row(FLUSH_EVERY + 1, 0.5, None)).unwrap();
        assert_eq!(w.finish().unwrap(), FLUSH_EVERY + 1);
        assert_eq!(read_trace(&path).unwrap().len(), FLUSH_EVERY + 1);
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let mut w = TraceWriter::create(&path).unwrap();
        let rows = [row(1, 0.1 + 0.2, Some(1.0 / 3.0)), row(2, 1e-300, Some(2.0f64.sqrt()))];
        for r in &rows {
            w.push(r).unwrap();
        }
        w.finish().unwrap();
        let back = read_trace(&path).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.mse.to_bits(), b.mse.to_bits());
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
            assert_eq!(a.theta.map(f64::to_bits), b.theta.map(f64::to_bits));
        }
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("iter,mse,objective,power_residual,coupling_residual,active_users,theta\n"));
    }

    #[test]
    fn empty_and_malformed_traces() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        TraceWriter::create(&empty).unwrap().finish().unwrap();
        assert!(read_trace(&empty).unwrap_err().to_string().contains("no rows"));
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "iter,loss\n1,2\n").unwrap();
        assert!(read_trace(&bad).unwrap_err().to_string().contains("malformed trace"));
        let bad_num = dir.path().join("bad_num.csv");
        std::fs::write(&bad_num, format!("{}\n1,x,1,1,1,1,\n", TRACE_HEADER.join(","))).unwrap();
        assert!(format!("{:#}", read_trace(&bad_num).unwrap_err()).contains("column mse"));
    }
}
