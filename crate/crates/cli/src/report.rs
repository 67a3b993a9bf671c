//! Cross-run comparison tables and plot-data export.

use crate::metrics::parse_metrics;
use crate::runner::SUMMARY_HEADER;
use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
struct ReportRow {
    run: String,
    fields: Vec<String>,
}

const REPORT_COLUMNS: [&str; 7] = [
    "run",
    "model",
    "trainable_params",
    "total_params",
    "eval_split",
    "ce",
    "accuracy",
];

/// Build the comparison table over run directories: CSV plus an aligned
/// text rendering. Empty input yields header-only outputs.
pub fn report(run_dirs: &[PathBuf]) -> Result<(String, String)> {
    let mut rows = Vec::new();
    for dir in run_dirs {
        let path = dir.join("summary.csv");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("missing run artifact {}", path.display()))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == SUMMARY_HEADER => {}
            other => bail!("{}: unexpected header {other:?}", path.display()),
        }
        let Some(data) = lines.next() else {
            bail!("{}: no data row", path.display());
        };
        let fields: Vec<String> = data.split(',').map(str::to_string).collect();
        if fields.len() != 6 {
            bail!("{}: expected 6 fields, got {}", path.display(), fields.len());
        }
        rows.push(ReportRow {
            run: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string()),
            fields,
        });
    }

    let mut csv = REPORT_COLUMNS.join(",");
    csv.push('\n');
    for r in &rows {
        let _ = writeln!(csv, "{},{}", r.run, r.fields.join(","));
    }

    // Aligned text table.
    let mut table: Vec<Vec<String>> = vec![REPORT_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for r in &rows {
        let mut line = vec![r.run.clone()];
        line.extend(r.fields.iter().cloned());
        table.push(line);
    }
    let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(text, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(text, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    Ok((csv, text))
}

/// Export a run's metrics as long-format plot rows
/// `(epoch, split, metric, value)`, copying value strings verbatim so the
/// export matches `metrics.csv` bit-exactly.
pub fn export_curves(run_dir: &Path) -> Result<PathBuf> {
    let rows = parse_metrics(&run_dir.join("metrics.csv"))?;
    let mut text = String::from("epoch,split,metric,value\n");
    for r in &rows {
        let _ = writeln!(text, "{},{},ce,{}", r.epoch, r.split, r.ce);
        let _ = writeln!(text, "{},{},accuracy,{}", r.epoch, r.split, r.accuracy);
    }
    let out = run_dir.join("curves.csv");
    std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(out)
}
