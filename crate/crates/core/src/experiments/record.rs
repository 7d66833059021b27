use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Metric name of the row emitted when a run diverges; its value is the step.
pub const DIVERGED: &str = "diverged";

pub const RECORD_HEADER: [&str; 5] = ["run", "seed", "step", "metric", "value"];

/// One `(run, step, metric)` observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    pub seed: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

/// Writes `run,seed,step,metric,value` rows; the header is written even for
/// an empty slice.
pub fn write_records<W: Write>(sink: W, records: &[RunRecord]) -> Result<()> {
    write_rows(sink, &RECORD_HEADER, records)
}

pub fn read_records<R: Read>(source: R) -> Result<Vec<RunRecord>> {
    read_rows(source)
}

pub(crate) fn write_rows<W: Write, T: Serialize>(
    sink: W,
    header: &[&str],
    rows: &[T],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(source: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(source);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// The standard error is `NaN` for fewer than two values.
pub fn mean_stderr(values: &[f64]) -> MeanStderr {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        f64::NAN
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    MeanStderr { mean, stderr, n }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_output_has_a_header() {
        let mut out = Vec::new();
        write_records(&mut out, &[]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "run,seed,step,metric,value\n"
        );
    }

    #[test]
    fn records_round_trip() {
        let rows = vec![
            RunRecord {
                run: 0,
                seed: 7,
                step: 10,
                metric: "rms".into(),
                value: 0.1 + 0.2,
            },
            RunRecord {
                run: 1,
                seed: 8,
                step: 3,
                metric: DIVERGED.into(),
                value: 3.0,
            },
        ];
        let mut out = Vec::new();
        write_records(&mut out, &rows).unwrap();
        assert_eq!(read_records(out.as_slice()).unwrap(), rows);
    }

    #[test]
    fn mean_and_stderr() {
        let s = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[1.0]).stderr.is_nan());
    }
}
