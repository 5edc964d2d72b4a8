//! Report files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};

use super::experiment::ErrorReport;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes `errors.csv`, `summary.csv`, `rates.json`, `plot.dat` and
/// `manifest.json` (plus `differences.csv` when recorded) into `out_dir`.
/// Returns the paths written.
pub fn emit_report(report: &ErrorReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("errors.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["scheme", "n", "gamma", "sample", "error"]).map_err(csv_err)?;
    for c in &report.cells {
        for (s, e) in c.samples.iter().enumerate() {
            w.write_record([c.scheme.clone(), c.n.to_string(), c.gamma.to_string(), s.to_string(), e.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["scheme", "gamma", "n", "lp_error", "max_error"]).map_err(csv_err)?;
    for c in &report.cells {
        w.write_record([
            c.scheme.clone(),
            c.gamma.to_string(),
            c.n.to_string(),
            c.lp_error.to_string(),
            c.max_error.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("rates.json");
    let rates = serde_json::to_string_pretty(&report.rates).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, rates + "\n")?;
    written.push(path);

    let path = dir.join("plot.dat");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    let mut first = true;
    for scheme in &report.config.experiment.schemes {
        let name = scheme.to_string();
        for &gamma in &report.config.experiment.gammas {
            if !first {
                writeln!(w, "\n")?;
            }
            first = false;
            writeln!(w, "# scheme={name} gamma={gamma}")?;
            writeln!(w, "# log_n log_lp_error log_max_error")?;
            let mut rows: Vec<_> = report
                .cells
                .iter()
                .filter(|c| c.scheme == name && c.gamma == gamma)
                .collect();
            rows.sort_by_key(|c| c.n);
            for c in rows {
                writeln!(w, "{} {} {}", (c.n as f64).ln(), c.lp_error.ln(), c.max_error.ln())?;
            }
        }
    }
    w.flush()?;
    written.push(path);

    if !report.differences.is_empty() {
        let path = dir.join("differences.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["scheme", "n", "sample", "j", "i", "difference"]).map_err(csv_err)?;
        for d in &report.differences {
            for (j, v) in d.values.iter().enumerate() {
                for (i, x) in v.iter().enumerate() {
                    w.write_record([
                        d.scheme.clone(),
                        d.n.to_string(),
                        d.sample.to_string(),
                        j.to_string(),
                        i.to_string(),
                        x.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }

    let path = dir.join("manifest.json");
    let manifest = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": report.config.experiment.seed,
        "config": report.config,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    written.push(path);

    Ok(written)
}
