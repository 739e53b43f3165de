//! Benchmark rows shared by `baseline` and `error-table`.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// One configuration of a benchmark sweep. Field order is the CSV column
/// order and is part of the output contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub distribution: String,
    pub n: u64,
    pub d: u32,
    pub m: u64,
    pub engine: String,
    pub trials: u64,
    pub mean_error: f64,
    /// Empty when `trials < 2`.
    pub stddev_error: Option<f64>,
    pub predicted_error: f64,
    pub sample_estimate: f64,
    pub mean_pages_read: f64,
    pub mean_wall_nanos: f64,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "dataset",
    "distribution",
    "n",
    "d",
    "m",
    "engine",
    "trials",
    "mean_error",
    "stddev_error",
    "predicted_error",
    "sample_estimate",
    "mean_pages_read",
    "mean_wall_nanos",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if self.rows.is_empty() {
            out.write_record(CSV_COLUMNS)?;
        }
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    #[cfg(test)]
    pub fn read_csv<R: std::io::Read>(r: R) -> csv::Result<Self> {
        let rows = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<csv::Result<Vec<BenchRow>>>()?;
        Ok(Self { rows })
    }
}

/// Mean and, for two or more values, the sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() >= 2)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: u64, trials: u64) -> BenchRow {
        BenchRow {
            dataset: "a.skyr".into(),
            distribution: "independent".into(),
            n: 1000,
            d: 2,
            m,
            engine: "sfs".into(),
            trials,
            mean_error: 0.01,
            stddev_error: (trials > 1).then_some(0.002),
            predicted_error: 0.011,
            sample_estimate: 0.0105,
            mean_pages_read: 12.5,
            mean_wall_nanos: 1e5,
        }
    }

    #[test]
    fn csv_header_order_is_fixed() {
        let report = BenchReport { rows: vec![row(10, 3)] };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn csv_round_trips_through_json() {
        let report = BenchReport { rows: vec![row(10, 3), row(100, 1)] };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let back = BenchReport::read_csv(&buf[..]).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.rows[1].stddev_error, None);
        let json = serde_json::to_string(&back).unwrap();
        assert_eq!(serde_json::from_str::<BenchReport>(&json).unwrap(), report);
    }

    #[test]
    fn stddev_needs_two_trials() {
        assert_eq!(mean_std(&[0.5]), (0.5, None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
