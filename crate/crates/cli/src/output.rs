//! Artifact writing: every run emits a JSON document embedding the full
//! resolved configuration and RNG metadata, plus a flat CSV of the report
//! rows, and optionally plot-ready two-column CSVs per statistic. Timing
//! goes to stderr only, so data artifacts are byte-identical across runs
//! with the same configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use grabforest::stats::ExperimentReport;
use serde::Serialize;

use crate::RunConfig;

#[derive(Serialize)]
struct Envelope<'a> {
    config: &'a RunConfig,
    report: &'a ExperimentReport,
}

/// Write `<out>.json` and `<out>.csv` (plus `<out>.<statistic>.csv` when
/// `plot` is set), or print the JSON document to stdout when no output
/// path was configured.
pub fn emit_report(config: &RunConfig, report: &ExperimentReport, plot: bool) -> Result<()> {
    let doc =
        serde_json::to_string_pretty(&Envelope { config, report }).expect("reports serialize");
    match &config.out {
        None => println!("{doc}"),
        Some(stem) => {
            write_file(&with_ext(stem, "json"), &doc)?;
            write_file(&with_ext(stem, "csv"), &report.to_csv())?;
            if plot {
                for (statistic, points) in report.plot_curves() {
                    let mut csv = String::from("n,value\n");
                    for (n, v) in points {
                        csv.push_str(&format!("{n},{v}\n"));
                    }
                    write_file(&with_ext(stem, &format!("{statistic}.csv")), &csv)?;
                }
            }
        }
    }
    for check in &report.checks {
        eprintln!(
            "check {}: {} ({})",
            check.name,
            if check.passed { "PASS" } else { "FAIL" },
            check.detail
        );
    }
    Ok(())
}

pub fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}
