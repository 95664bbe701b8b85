//! Task files and human label files.
//!
//! Task file: UTF-8, one task per line, tab-separated
//! `id<TAB>subset<TAB>instruction[<TAB>sim_goal]`. Blank lines and lines
//! starting with `#` are ignored. `sim_goal` is `world:goal` or a goal id
//! unique across the loaded worlds.
//!
//! Label file: CSV `task_id,run,verdict,category` with an optional header
//! row; `run` is the 0-based run index, `verdict` is `success` or `failure`,
//! `category` is empty or one of `reflection`, `locator`, `decision`,
//! `budget_only`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::FailureCategory;
use crate::trace::{Subset, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskFileError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate task id '{id}'")]
    DuplicateTaskId { line: usize, id: String },
}

pub fn parse_tasks(source: &str) -> Result<Vec<TaskSpec>, TaskFileError> {
    let mut tasks = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim_end_matches('\r');
        if text.trim().is_empty() || text.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        let err = |message: String| TaskFileError::Parse { line, message };
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(err("empty task id".into()));
        }
        let subset = fields[1].trim();
        if subset.is_empty() {
            return Err(err("empty subset".into()));
        }
        let instruction = fields[2].trim();
        if instruction.is_empty() {
            return Err(err("empty instruction".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(TaskFileError::DuplicateTaskId { line, id: id.to_string() });
        }
        let mut task = TaskSpec::new(id, Subset::parse(subset), instruction);
        if let Some(goal) = fields.get(3).map(|g| g.trim()).filter(|g| !g.is_empty()) {
            task = task.with_goal(goal);
        }
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn ingest_tasks(path: &Path) -> Result<Vec<TaskSpec>, TaskFileError> {
    let source = std::fs::read_to_string(path).map_err(|e| TaskFileError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_tasks(&source)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HumanLabel {
    pub task_id: String,
    pub run: usize,
    pub success: bool,
    pub category: Option<FailureCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label for unknown episode {task_id} run {run}")]
    UnknownTaskId { task_id: String, run: usize },
    #[error("conflicting labels for {task_id} run {run}")]
    ConflictingLabel { task_id: String, run: usize },
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    task_id: String,
    run: String,
    verdict: String,
    #[serde(default)]
    category: Option<String>,
}

/// Parses a label file; repeated identical rows are merged, differing ones rejected.
pub fn parse_labels(source: &str) -> Result<Vec<HumanLabel>, LabelError> {
    let has_header = source.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| l.trim_start().starts_with("task_id"));
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(source.as_bytes());
    let mut out: BTreeMap<(String, usize), HumanLabel> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LabelError::Parse { line: i + 1, message: e.to_string() })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if (i == 0 && has_header) || rec.iter().all(str::is_empty) {
            continue;
        }
        let err = |message: String| LabelError::Parse { line, message };
        let row: LabelRow = rec
            .deserialize(Some(&csv::StringRecord::from(vec!["task_id", "run", "verdict", "category"])))
            .map_err(|e| err(e.to_string()))?;
        let run: usize = row.run.parse().map_err(|_| err(format!("run must be a non-negative integer, got {:?}", row.run)))?;
        let success = match row.verdict.to_ascii_lowercase().as_str() {
            "success" => true,
            "failure" => false,
            other => return Err(err(format!("verdict must be success or failure, got {other:?}"))),
        };
        let category = match row.category.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
            None => None,
            Some(c) => Some(c.parse::<FailureCategory>().map_err(err)?),
        };
        if success && category.is_some() {
            return Err(err("a success label cannot carry a failure category".into()));
        }
        let label = HumanLabel { task_id: row.task_id.clone(), run, success, category };
        match out.get(&(row.task_id.clone(), run)) {
            Some(prev) if *prev != label => return Err(LabelError::ConflictingLabel { task_id: row.task_id, run }),
            _ => {
                out.insert((row.task_id, run), label);
            }
        }
    }
    Ok(out.into_values().collect())
}

pub fn read_labels(path: &Path) -> Result<Vec<HumanLabel>, LabelError> {
    let source = std::fs::read_to_string(path).map_err(|e| LabelError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_labels(&source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_valid_lines() {
        let src = "# id\tsubset\tinstruction\n1\tGeneral\tOpen settings\topen_settings\n2\tWebShopping\tFind headphones\n\n3\tcalendar\tAdd event\n";
        let t = parse_tasks(src).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].sim_goal.as_deref(), Some("open_settings"));
        assert_eq!(t[1].subset, Subset::WebShopping);
        assert_eq!(t[2].subset, Subset::Custom("calendar".into()));
    }

    #[test]
    fn duplicate_and_blank() {
        assert_eq!(
            parse_tasks("a\tGeneral\tx\na\tGeneral\ty\n"),
            Err(TaskFileError::DuplicateTaskId { line: 2, id: "a".into() })
        );
        assert!(matches!(parse_tasks("a\tGeneral\tx\nb\tGeneral\t  \n"), Err(TaskFileError::Parse { line: 2, .. })));
        assert!(matches!(parse_tasks("only one field\n"), Err(TaskFileError::Parse { line: 1, .. })));
    }

    #[test]
    fn labels_parse_and_conflict() {
        let l = parse_labels("task_id,run,verdict,category\nt1,0,failure,reflection\nt1,1,success,\nt1,0,failure,reflection\n").unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].category, Some(FailureCategory::Reflection));
        assert!(matches!(parse_labels("t1,0,failure,\nt1,0,success,\n"), Err(LabelError::ConflictingLabel { .. })));
        assert!(parse_labels("").unwrap().is_empty());
        assert!(matches!(parse_labels("t1,0,maybe,\n"), Err(LabelError::Parse { line: 1, .. })));
        assert!(matches!(parse_labels("t1,x,success,\n"), Err(LabelError::Parse { .. })));
    }
}
