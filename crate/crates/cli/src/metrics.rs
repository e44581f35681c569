//! The metrics table: an append-only CSV with one header row, written
//! through a single serialized writer so concurrent experiment cells can
//! never interleave bytes.
//!
//! The `step` column is the x-axis of whichever curve the row belongs to:
//! cumulative seen training channels for estimation metrics, the ascent
//! iteration index for sum-rate traces.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use hybeam_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub snr_db: f64,
    pub t: usize,
    pub l: usize,
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(
        method: impl Into<String>,
        snr_db: f64,
        t: usize,
        l: usize,
        step: usize,
        metric: impl Into<String>,
        value: f64,
    ) -> Self {
        MetricRow { method: method.into(), snr_db, t, l, step, metric: metric.into(), value }
    }
}

/// Serialized appender over one CSV file; the header is written exactly
/// once, at creation.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    /// Create (truncate) the file and write the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path)?;
        let inner = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
        Ok(MetricsWriter { inner })
    }

    pub fn append(&mut self, rows: &[MetricRow]) -> Result<()> {
        for row in rows {
            self.inner
                .serialize(row)
                .map_err(|e| Error::Format(format!("metric row encoding failed: {e}")))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        let mut buf = self
            .inner
            .into_inner()
            .map_err(|e| Error::Format(format!("metrics writer teardown failed: {e}")))?;
        buf.flush()?;
        Ok(())
    }
}

/// Read a whole metrics table back.
pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("bad metric row: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<MetricRow> {
        vec![
            MetricRow::new("mp_nominal", 15.0, 2, 16, 0, "nmse_db", -8.25),
            MetricRow::new("mpnet", 15.0, 2, 16, 3000, "nmse_db", -13.5),
            MetricRow::new("upga_true", 15.0, 2, 16, 10, "sumrate_bits", 21.75),
        ]
    }

    #[test]
    fn rows_round_trip_and_keep_exactly_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        let rows = sample_rows();
        w.append(&rows[..2]).unwrap();
        w.append(&rows[2..]).unwrap();
        w.finish().unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("method,snr_db,t,l,step,metric,value").count(), 1);
        assert_eq!(read_rows(&path).unwrap(), rows);
    }

    #[test]
    fn identical_rows_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        for path in [&a, &b] {
            let mut w = MetricsWriter::create(path).unwrap();
            w.append(&sample_rows()).unwrap();
            w.finish().unwrap();
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
