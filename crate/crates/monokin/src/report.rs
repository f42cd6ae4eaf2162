//! Merges the diagnostics of completed runs into `summary.csv`.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use monokin_core::Quantity;
use walkdir::WalkDir;

use crate::io::{read_csv_table, write_atomic};
use crate::run::{RunManifest, DIAGNOSTICS, MANIFEST};
use crate::{Error, Result};

pub const SUMMARY: &str = "summary.csv";

struct Row {
    scenario: String,
    eps: Option<f64>,
    sigma: Option<f64>,
    delta: Option<f64>,
    t: f64,
    run: String,
    cells: Vec<Option<f64>>,
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Builds `summary.csv` in `dir` and returns its path and the number of
/// distinct `(scenario, eps, sigma, delta)` groups.
pub fn build_report(dir: &Path) -> Result<(PathBuf, usize)> {
    if !dir.is_dir() {
        return Err(Error::MissingFiles(vec![dir.display().to_string()]));
    }
    let mut manifests: Vec<PathBuf> = WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == MANIFEST)
        .map(|e| e.into_path())
        .collect();
    manifests.sort();
    if manifests.is_empty() {
        return Err(Error::EmptyReport(dir.to_path_buf()));
    }

    let columns: Vec<&str> = Quantity::CSV_COLUMNS.iter().map(|q| q.csv_name()).collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for path in &manifests {
        let run_dir = path.parent().unwrap_or(dir);
        let rel = run_dir.strip_prefix(dir).unwrap_or(run_dir).display().to_string();
        let manifest: RunManifest = match std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
        {
            Some(m) => m,
            None => {
                missing.push(format!("{} (unreadable)", path.display()));
                continue;
            }
        };
        for f in manifest.files.iter().filter(|f| f.as_str() != DIAGNOSTICS) {
            if !run_dir.join(f).is_file() {
                missing.push(run_dir.join(f).display().to_string());
            }
        }
        let diag_path = run_dir.join(DIAGNOSTICS);
        let Some((header, table)) = std::fs::read_to_string(&diag_path)
            .ok()
            .and_then(|t| read_csv_table(&t))
        else {
            missing.push(diag_path.display().to_string());
            continue;
        };
        let index: Vec<Option<usize>> = columns.iter().map(|c| header.iter().position(|h| h == c)).collect();
        for r in table {
            let Some(t) = r.first().copied().flatten() else {
                continue;
            };
            rows.push(Row {
                scenario: manifest.scenario.clone(),
                eps: manifest.epsilon,
                sigma: manifest.sigma,
                delta: manifest.delta,
                t,
                run: rel.clone(),
                cells: index.iter().map(|k| k.and_then(|k| r[k])).collect(),
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }

    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(cmp_opt(a.eps, b.eps))
            .then(cmp_opt(a.sigma, b.sigma))
            .then(cmp_opt(a.delta, b.delta))
            .then(a.t.total_cmp(&b.t))
            .then(a.run.cmp(&b.run))
    });
    let mut groups = 0;
    let mut out = format!("scenario,eps,sigma,delta,t,run,{}\n", columns.join(","));
    for (k, r) in rows.iter().enumerate() {
        let new_group = k == 0 || {
            let p = &rows[k - 1];
            p.scenario != r.scenario
                || cmp_opt(p.eps, r.eps).is_ne()
                || cmp_opt(p.sigma, r.sigma).is_ne()
                || cmp_opt(p.delta, r.delta).is_ne()
        };
        groups += usize::from(new_group);
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.scenario,
            cell(r.eps),
            cell(r.sigma),
            cell(r.delta),
            r.t,
            r.run
        ));
        for c in &r.cells {
            out.push(',');
            out.push_str(&cell(*c));
        }
        out.push('\n');
    }
    let path = dir.join(SUMMARY);
    write_atomic(&path, out.as_bytes())?;
    Ok((path, groups))
}
