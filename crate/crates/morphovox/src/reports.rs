//! Result files: per-generation CSV logs, the grid summary CSV, the
//! statistics report CSV, and the body-size comparison report.
//!
//! Column orders are part of the interface and never change silently.
//! Floating-point values are written in shortest round-trip form, so
//! re-parsing a file reproduces the in-memory records exactly — a results
//! directory plus its manifest is enough to re-run the statistics without
//! the original process.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afpo::GenerationStats;
use crate::experiments::{RecoveryRecord, ScenarioStats, SizeControlReport};
use crate::morphology::DamageScenario;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv at {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("json at {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    ensure_parent(path)?;
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        writer.serialize(row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ReportError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(csv_err(path))?);
    }
    Ok(rows)
}

/// Columns: generation, best_fitness_cm, mean_fitness_cm, best_id.
pub fn write_generation_log(
    path: &Path,
    history: &[GenerationStats],
) -> Result<(), ReportError> {
    write_csv(path, history)
}

pub fn read_generation_log(path: &Path) -> Result<Vec<GenerationStats>, ReportError> {
    read_csv(path)
}

/// One grid cell as it appears in the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummaryRow {
    pub scenario: DamageScenario,
    pub option: crate::experiments::RecoveryOption,
    pub lineage: u32,
    pub predamage_cm: f64,
    pub best_postdamage_cm: f64,
    pub relative_performance: f64,
}

impl From<&RecoveryRecord> for GridSummaryRow {
    fn from(r: &RecoveryRecord) -> Self {
        GridSummaryRow {
            scenario: r.scenario,
            option: r.option,
            lineage: r.lineage,
            predamage_cm: r.predamage_cm,
            best_postdamage_cm: r.best_postdamage_cm,
            relative_performance: r.relative_performance,
        }
    }
}

/// Columns: scenario, option, lineage, predamage_cm, best_postdamage_cm,
/// relative_performance.
pub fn write_grid_summary(
    path: &Path,
    records: &[RecoveryRecord],
) -> Result<(), ReportError> {
    let rows: Vec<GridSummaryRow> = records.iter().map(GridSummaryRow::from).collect();
    write_csv(path, &rows)
}

pub fn write_grid_summary_rows(
    path: &Path,
    rows: &[GridSummaryRow],
) -> Result<(), ReportError> {
    write_csv(path, rows)
}

pub fn read_grid_summary(path: &Path) -> Result<Vec<GridSummaryRow>, ReportError> {
    read_csv(path)
}

/// Columns: scenario, u_statistic, p_raw, p_bonferroni,
/// readaptation_ci_low, readaptation_ci_high, shapeshifting_ci_low,
/// shapeshifting_ci_high.
pub fn write_stats_report(
    path: &Path,
    stats: &[ScenarioStats],
) -> Result<(), ReportError> {
    write_csv(path, stats)
}

pub fn read_stats_report(path: &Path) -> Result<Vec<ScenarioStats>, ReportError> {
    read_csv(path)
}

/// The three-distribution body-size comparison, as JSON.
pub fn write_size_control_report(
    path: &Path,
    report: &SizeControlReport,
) -> Result<(), ReportError> {
    ensure_parent(path)?;
    let body = serde_json::to_string_pretty(report).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, body).map_err(io_err(path))
}

pub fn read_size_control_report(path: &Path) -> Result<SizeControlReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}
