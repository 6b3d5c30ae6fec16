//! Aggregate reports rebuilt from per-section metrics.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use signenc::metrics::{aggregate, normalize_rows, RunReport, SectionResult};
use signenc::{Error, Result};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Completed sections under `run_dir`, in section order.
pub fn completed_sections(run_dir: &Path) -> Result<Vec<SectionResult>> {
    let dir = run_dir.join("sections");
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let metrics = e.map_err(|e| Error::io(&dir, e))?.path().join("metrics.json");
        if metrics.is_file() {
            out.push(read_json::<SectionResult>(&metrics)?);
        }
    }
    out.sort_by_key(|s| s.section_id);
    Ok(out)
}

/// `report.csv`: one row per section, then mean and std rows.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from("section_id,test,val,accuracy,macro_precision,macro_recall,macro_f1\n");
    for s in &report.sections {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.section_id, s.test_signer, s.val_signer, s.accuracy, s.macro_precision, s.macro_recall, s.macro_f1
        ));
    }
    let a = &report.aggregate;
    out.push_str(&format!(
        "mean,,,{},{},{},{}\n",
        a.accuracy.mean, a.precision.mean, a.recall.mean, a.f1.mean
    ));
    out.push_str(&format!("std,,,{},{},{},{}\n", a.accuracy.std, a.precision.std, a.recall.std, a.f1.std));
    out
}

/// Aggregates `sections` and writes `report.json`, `report.csv`,
/// `confusion.csv`, `confusion_normalized.csv` and `confusion.png`.
pub fn write_report(run_dir: &Path, sections: &[SectionResult], config: Value) -> Result<RunReport> {
    let mut report = aggregate(sections)?;
    report.config = config;
    write_json(&run_dir.join("report.json"), &report)?;
    let write = |name: &str, text: String| {
        let p = run_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.csv", report_csv(&report))?;
    write("confusion.csv", report.confusion.to_csv())?;
    let norm = normalize_rows(&report.confusion);
    write("confusion_normalized.csv", norm.to_csv())?;
    norm.save_heatmap(&run_dir.join("confusion.png"), 24)?;
    Ok(report)
}

/// Re-aggregates the completed sections of `run_dir` from disk.
pub fn rebuild_report(run_dir: &Path) -> Result<RunReport> {
    let cfg = run_dir.join("config.json");
    if !cfg.is_file() {
        return Err(Error::NotFound(cfg));
    }
    let stored: Value = read_json(&cfg)?;
    let config = stored.get("config").cloned().unwrap_or(Value::Null);
    let sections = completed_sections(run_dir)?;
    if sections.is_empty() {
        return Err(Error::Consistency(format!("{} has no completed sections", run_dir.display())));
    }
    write_report(run_dir, &sections, config)
}
