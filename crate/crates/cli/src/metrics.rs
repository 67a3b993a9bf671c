//! Metric CSV emission and parsing.
//!
//! Floating-point values are serialized with 17 significant digits so a
//! round trip through the text form is exact for 64-bit floats, and a rerun
//! with identical config and seed produces a byte-identical file.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::Path;
use ttq_core::learn::EpochRow;

/// 17-significant-digit scientific form; round-trip exact for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const METRICS_HEADER: &str = "epoch,split,ce,accuracy";

pub fn metrics_csv(rows: &[EpochRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.epoch,
            r.split.as_str(),
            fmt_f64(r.ce),
            fmt_f64(r.accuracy)
        );
    }
    out
}

/// One parsed metrics row, values kept verbatim for bit-exact re-emission.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: u64,
    pub split: String,
    pub ce: String,
    pub accuracy: String,
}

pub fn parse_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading metrics from {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => bail!(
            "{}: expected header '{METRICS_HEADER}', found {:?}",
            path.display(),
            other
        ),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            bail!("{}:{}: expected 4 fields, got {}", path.display(), n + 2, parts.len());
        }
        rows.push(MetricsRow {
            epoch: parts[0]
                .parse()
                .with_context(|| format!("{}:{}: bad epoch", path.display(), n + 2))?,
            split: parts[1].to_string(),
            ce: parts[2].to_string(),
            accuracy: parts[3].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ttq_core::learn::SplitKind;

    #[test]
    fn f64_formatting_round_trips() {
        for v in [
            0.1,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -4.9e-324,
            0.0,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn csv_emits_and_parses() {
        let rows = vec![
            EpochRow {
                epoch: 0,
                split: SplitKind::Train,
                ce: 0.69314718,
                accuracy: 0.5,
            },
            EpochRow {
                epoch: 0,
                split: SplitKind::Test,
                ce: 0.7,
                accuracy: 0.25,
            },
        ];
        let text = metrics_csv(&rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        std::fs::write(&path, &text).unwrap();
        let parsed = parse_metrics(&path).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].split, "train");
        assert_eq!(parsed[1].ce, fmt_f64(0.7));
    }
}
