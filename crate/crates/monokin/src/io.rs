//! CSV and JSON writers. Every file is written to a temporary sibling and
//! renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use monokin_core::characteristics::CharTrajectory;
use monokin_core::eas::EasState;
use monokin_core::particles::Swarm;
use monokin_core::{DiagnosticsRecord, Profile, Quantity};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct WriteError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), WriteError> {
    let wrap = |source| WriteError {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(contents).map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), WriteError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| WriteError {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `{prefix}t{t:.4}.{ext}`.
pub fn snapshot_name(prefix: &str, t: f64, ext: &str) -> String {
    format!("{prefix}t{t:.4}.{ext}")
}

pub fn eas_csv(s: &EasState) -> String {
    let grid = s.grid();
    let e = s.e();
    let mut out = String::from("x,rho,u,e\n");
    for (i, e) in e.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{e}", grid.center(i), s.state.rho[i], s.state.u[i]);
    }
    out
}

/// One row per x-cell, one column per xi-cell.
pub fn profile_csv(g: &Profile) -> String {
    let mut out = String::new();
    for i in 0..g.grid.x.len() {
        let row: Vec<String> = g.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub t: f64,
    pub nx: usize,
    pub nxi: usize,
    pub length: f64,
    pub xi_max: f64,
    pub dx: f64,
    pub dxi: f64,
    pub layout: String,
}

impl ProfileMeta {
    pub fn of(g: &Profile) -> Self {
        Self {
            t: g.t,
            nx: g.grid.x.len(),
            nxi: g.grid.xi.len(),
            length: g.grid.x.length(),
            xi_max: g.grid.xi.xi_max(),
            dx: g.grid.x.dx(),
            dxi: g.grid.xi.dxi(),
            layout: "rows are x cells, columns are xi cells, cell-centred".into(),
        }
    }
}

/// Writes `{prefix}t{t}.csv` and its `.json` sidecar; returns the CSV name.
pub fn write_profile(dir: &Path, prefix: &str, g: &Profile) -> Result<String, WriteError> {
    let name = snapshot_name(prefix, g.t, "csv");
    write_atomic(&dir.join(&name), profile_csv(g).as_bytes())?;
    write_json(&dir.join(snapshot_name(prefix, g.t, "json")), &ProfileMeta::of(g))?;
    Ok(name)
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from("t");
    for q in Quantity::CSV_COLUMNS {
        out.push(',');
        out.push_str(q.csv_name());
    }
    out.push('\n');
    for r in records {
        out.push_str(&r.t.to_string());
        for q in Quantity::CSV_COLUMNS {
            out.push(',');
            if let Some(v) = r.get(q) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(traj: &CharTrajectory) -> String {
    let n = traj.sigma.first().map_or(0, Vec::len);
    let mut out = String::from("t,X");
    for k in 1..=n {
        let _ = write!(out, ",Sigma_{k}");
    }
    out.push_str(",det_J\n");
    for k in 0..traj.times.len() {
        let _ = write!(out, "{},{}", traj.times[k], traj.x[k]);
        for s in &traj.sigma[k] {
            let _ = write!(out, ",{s}");
        }
        let _ = writeln!(out, ",{}", traj.jacobian_det[k]);
    }
    out
}

pub fn swarm_csv(s: &Swarm, seed: u64) -> String {
    let mut out = format!("# seed = {seed}\n# n = {}\n# t = {}\ni,m,x,v\n", s.len(), s.t);
    for i in 0..s.len() {
        let _ = writeln!(out, "{i},{},{},{}", s.mass[i], s.x[i], s.v[i]);
    }
    out
}

/// Header and rows of a numeric CSV; blank cells are `None`.
pub type CsvTable = (Vec<String>, Vec<Vec<Option<f64>>>);

/// Parses a diagnostics CSV back into `(header, rows)`.
pub fn read_csv_table(text: &str) -> Option<CsvTable> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines.next()?.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for l in lines {
        let row: Vec<Option<f64>> = l.split(',').map(|c| c.trim().parse::<f64>().ok()).collect();
        if row.len() != header.len() {
            return None;
        }
        rows.push(row);
    }
    Some((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn names_and_tables() {
        assert_eq!(snapshot_name("eas_", 0.5, "csv"), "eas_t0.5000.csv");
        let mut r = DiagnosticsRecord::new(0.25);
        r.set(Quantity::Mass, 1.0).unwrap();
        let text = diagnostics_csv(&[r]);
        let (header, rows) = read_csv_table(&text).unwrap();
        assert_eq!(header[0], "t");
        assert_eq!(header.len(), 14);
        assert_eq!(rows[0][0], Some(0.25));
        assert_eq!(rows[0][1], Some(1.0));
        assert_eq!(rows[0][2], None);
    }
}
