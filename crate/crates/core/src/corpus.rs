//! Scenario directories: discovery and batch schema/quality validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::par::Execution;
use crate::scenario::{audit, AuditReport, Scenario};

/// `*.json` files directly inside `dir`, sorted by path.
pub fn scenario_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// `path` itself when it is a file, otherwise the scenario files in it.
pub fn resolve(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if path.is_dir() {
        scenario_files(path)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} does not exist", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileAudit {
    pub path: String,
    pub ok: bool,
    pub error: Option<String>,
    pub audit: Option<AuditReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub files: Vec<FileAudit>,
    pub schema_failures: usize,
    pub totals: AuditReport,
    pub infeasible_rate: f64,
    pub initial_collision_rate: f64,
    pub invalid_at_start_rate: f64,
}

pub fn validate_file(path: &Path) -> FileAudit {
    let name = path.display().to_string();
    match Scenario::load(path) {
        Ok(s) => FileAudit { path: name, ok: true, error: None, audit: Some(audit(&s)) },
        Err(e) => FileAudit { path: name, ok: false, error: Some(e.to_string()), audit: None },
    }
}

/// Loads and audits every file; each file is handled by one worker and the
/// report lists files in input order.
pub fn validate_files(paths: &[PathBuf], execution: Execution) -> ValidationReport {
    let files = execution.map(paths, |p| validate_file(p));
    let mut totals = AuditReport { name: "total".into(), ..Default::default() };
    for a in files.iter().filter_map(|f| f.audit.as_ref()) {
        totals.merge(a);
    }
    ValidationReport {
        schema_failures: files.iter().filter(|f| !f.ok).count(),
        infeasible_rate: totals.infeasible_rate(),
        initial_collision_rate: totals.initial_collision_rate(),
        invalid_at_start_rate: totals.invalid_at_start_rate(),
        totals,
        files,
    }
}
