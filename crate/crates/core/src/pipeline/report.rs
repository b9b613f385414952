use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::experiment::LeaveOneOutReport;
use super::metrics::{ConfusionMatrix, OperatingPoint};
use crate::classifier::GridSearchResult;
use crate::error::{Error, Result};
use crate::imaging::io::write_json;

/// Run metadata kept apart from the results so reports can be compared
/// byte for byte after dropping it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
}

impl ReportHeader {
    pub fn now() -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub header: ReportHeader,
    pub report: T,
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_json(
        path,
        &ReportFile {
            header: ReportHeader::now(),
            report,
        },
    )
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// `metric, tau, median, q1, q3, iqr, images, pooled, confident_fraction, acc_tag, abstained`.
pub fn write_sweep_csv(path: &Path, rows: &[OperatingPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let rec = |w: &mut csv::Writer<_>, r: &[String]| w.write_record(r).map_err(|e| Error::format(path, e));
    rec(
        &mut w,
        &["metric", "tau", "median_acc_spx", "q1", "q3", "iqr", "images", "pooled_acc_spx", "confident_fraction", "acc_tag", "abstained"]
            .map(String::from),
    )?;
    for r in rows {
        let s = r.acc_spx;
        rec(
            &mut w,
            &[
                r.metric.map_or("base".to_string(), |m| m.to_string()),
                opt(r.tau),
                opt(s.map(|s| s.median)),
                opt(s.map(|s| s.q1)),
                opt(s.map(|s| s.q3)),
                opt(s.map(|s| s.iqr)),
                s.map_or(0, |s| s.n).to_string(),
                opt(r.pooled_acc_spx),
                r.confident_fraction.to_string(),
                opt(r.acc_tag.mean),
                r.acc_tag.abstained.to_string(),
            ],
        )?;
    }
    finish(path, w)
}

/// Row-normalised percentages with class names on both axes.
pub fn write_confusion_csv(path: &Path, classes: &[String], cm: &ConfusionMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["truth".to_string()];
    header.extend(classes.iter().cloned());
    w.write_record(&header).map_err(|e| Error::format(path, e))?;
    for (name, row) in classes.iter().zip(&cm.percent) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| format!("{v:.4}")));
        w.write_record(&rec).map_err(|e| Error::format(path, e))?;
    }
    finish(path, w)
}

/// One row per grid cell: `c, gamma, mean_accuracy, fold_0..`; accuracy
/// fields are empty for cells skipped after solver non-convergence.
pub fn write_cv_csv(path: &Path, grid: &GridSearchResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    let folds = grid.table.iter().map(|c| c.fold_accuracy.len()).max().unwrap_or(0);
    let mut header = vec!["c".to_string(), "gamma".to_string(), "mean_accuracy".to_string()];
    header.extend((0..folds).map(|f| format!("fold_{f}")));
    w.write_record(&header).map_err(|e| Error::format(path, e))?;
    for cell in &grid.table {
        let mut rec = vec![cell.c.to_string(), cell.gamma.to_string(), opt(cell.mean_accuracy)];
        rec.extend((0..folds).map(|f| opt(cell.fold_accuracy.get(f).copied())));
        w.write_record(&rec).map_err(|e| Error::format(path, e))?;
    }
    finish(path, w)
}

pub fn write_loo_csv(path: &Path, report: &LeaveOneOutReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["organ", "lc_ex", "lc_in", "n_ex", "n_in"]).map_err(|e| Error::format(path, e))?;
    for r in &report.rows {
        w.write_record([r.organ.clone(), opt(r.lc_ex), opt(r.lc_in), r.n_ex.to_string(), r.n_in.to_string()])
            .map_err(|e| Error::format(path, e))?;
    }
    finish(path, w)
}
