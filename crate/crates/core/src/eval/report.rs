//! Comparison tables over one or more suite results.

use std::fmt::Write as _;
use std::path::Path;

use super::{EvalError, FailureCategory, SuiteResult, RESULTS_FILE};
use crate::trace::Subset;

pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

pub const HEADERS: [&str; 9] = [
    "Configuration",
    "AITW General",
    "AITW WebShopping",
    "Overall",
    "Reflection %",
    "Locator %",
    "Decision %",
    "Budget-only",
    "Mean task s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

impl Report {
    /// Writes `report.txt` and `report.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| super::io_err(dir, e))?;
        for (name, body) in [(REPORT_TXT, &self.text), (REPORT_CSV, &self.csv)] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| super::io_err(&p, e))?;
        }
        Ok(())
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.1}")).unwrap_or_else(|| "n/a".into())
}

/// Shares of reflection, locator and decision among attributed failures of
/// those three kinds. `None` when there are none.
pub fn breakdown(result: &SuiteResult) -> Option<[f64; 3]> {
    let count = |c| result.failure_counts.get(&c).copied().unwrap_or(0);
    let parts = [count(FailureCategory::Reflection), count(FailureCategory::Locator), count(FailureCategory::Decision)];
    let total: usize = parts.iter().sum();
    (total > 0).then(|| parts.map(|n| 100.0 * n as f64 / total as f64))
}

fn row(label: &str, r: &SuiteResult) -> Vec<String> {
    let b = breakdown(r);
    vec![
        label.to_string(),
        pct(r.subset_rate(&Subset::General)),
        pct(r.subset_rate(&Subset::WebShopping)),
        pct(Some(r.overall)),
        pct(b.map(|b| b[0])),
        pct(b.map(|b| b[1])),
        pct(b.map(|b| b[2])),
        r.failure_counts.get(&FailureCategory::BudgetOnly).copied().unwrap_or(0).to_string(),
        format!("{:.1}", r.mean_task_seconds),
    ]
}

/// One row per labelled result, in the given order. Rates have one decimal.
pub fn generate_report(results: &[(String, SuiteResult)]) -> Result<Report, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let rows: Vec<Vec<String>> = results.iter().map(|(l, r)| row(l, r)).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADERS).expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");

    let widths: Vec<usize> = (0..HEADERS.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([HEADERS[i].len()]).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(text, "{}", line(HEADERS.to_vec())).unwrap();
    writeln!(text, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")).unwrap();
    for r in &rows {
        writeln!(text, "{}", line(r.iter().map(String::as_str).collect())).unwrap();
    }
    Ok(Report { text, csv })
}

/// Loads `results.json` from each directory, labelled by its suite label.
pub fn load_results(dirs: &[&Path]) -> Result<Vec<(String, SuiteResult)>, EvalError> {
    dirs.iter()
        .map(|d| {
            let r = SuiteResult::read_json(d)?;
            Ok((r.label.clone(), r))
        })
        .collect()
}

/// Writes the report and a merged `results.json` for the given results.
pub fn write_report(dir: &Path, results: &[(String, SuiteResult)]) -> Result<Report, EvalError> {
    let report = generate_report(results)?;
    report.write_to(dir)?;
    let merged: Vec<&SuiteResult> = results.iter().map(|(_, r)| r).collect();
    let p = dir.join(RESULTS_FILE);
    let mut bytes = serde_json::to_vec_pretty(&merged).expect("results serialize");
    bytes.push(b'\n');
    std::fs::write(&p, bytes).map_err(|e| super::io_err(&p, e))?;
    Ok(report)
}
