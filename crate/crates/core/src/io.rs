//! CSV tables, file hashing and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Result, TcsError};

pub const MANIFEST_NAME: &str = "manifest.json";

fn csv_err(path: &Path, e: csv::Error) -> TcsError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TcsError::io(path, io),
        other => TcsError::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes a numeric table with a header row; returns the number of data rows.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<usize>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| TcsError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    let mut n = 0;
    for row in rows {
        if row.len() != header.len() {
            return Err(TcsError::Dimension {
                expected: header.len(),
                got: row.len(),
            });
        }
        w.serialize(row).map_err(|e| csv_err(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| TcsError::io(path, e))?;
    Ok(n)
}

/// Numeric table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TcsError::MissingKey(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = vec![];
    for rec in r.deserialize::<Vec<f64>>() {
        rows.push(rec.map_err(|e| csv_err(path, e))?);
    }
    Ok(Table { header, rows })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| TcsError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the canonical JSON form of a config.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}

/// One emitted file, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    /// Data rows for CSV files, top-level entries for JSON files.
    pub rows: usize,
    pub sha256: String,
}

impl FileEntry {
    pub fn new(dir: &Path, rel: &str, rows: usize) -> Result<Self> {
        Ok(FileEntry {
            path: rel.to_string(),
            rows,
            sha256: sha256_file(&dir.join(rel))?,
        })
    }
}

/// Outcome of one invariant evaluated on a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    /// Failing enforced checks turn the run into an invariant violation;
    /// the others are reported only.
    pub enforced: bool,
}

impl InvariantCheck {
    /// `value ≤ limit`, enforced.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        InvariantCheck {
            name: name.to_string(),
            value,
            limit,
            passed: value <= limit,
            enforced: true,
        }
    }

    /// `value ≥ limit`, enforced.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        InvariantCheck {
            passed: value >= limit,
            ..InvariantCheck::at_most(name, value, limit)
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        InvariantCheck {
            name: name.to_string(),
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
            passed: ok,
            enforced: true,
        }
    }

    pub fn advisory(mut self) -> Self {
        self.enforced = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Set while the run is in progress and left set if it fails.
    pub incomplete: bool,
    pub scenario: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub versions: BTreeMap<String, String>,
    pub started_unix: u64,
    pub wall_clock_s: f64,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
    pub invariants: Vec<InvariantCheck>,
    pub error: Option<String>,
}

/// Version of every model level; they ship together in this crate.
pub fn module_versions() -> BTreeMap<String, String> {
    let v = env!("CARGO_PKG_VERSION").to_string();
    [
        "geometry",
        "particle",
        "kinetic",
        "fluid",
        "macro_limit",
        "diagnostics",
        "run",
    ]
    .iter()
    .map(|m| (m.to_string(), v.clone()))
    .collect()
}

impl RunManifest {
    pub fn start(cfg: &ExperimentConfig, warnings: Vec<String>) -> Result<Self> {
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(RunManifest {
            incomplete: true,
            scenario: cfg.scenario.name().to_string(),
            config_hash: config_hash(cfg)?,
            config: cfg.clone(),
            versions: module_versions(),
            started_unix: started,
            wall_clock_s: 0.0,
            files: vec![],
            warnings,
            invariants: vec![],
            error: None,
        })
    }

    pub fn violations(&self) -> Vec<&InvariantCheck> {
        self.invariants.iter().filter(|c| c.enforced && !c.passed).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| TcsError::io(dir, e))?;
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(|e| TcsError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| TcsError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes pretty JSON and returns its number of top-level entries.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<usize> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| TcsError::io(dir, e))?;
    }
    let v = serde_json::to_value(value)?;
    let n = match &v {
        serde_json::Value::Object(m) => m.len(),
        serde_json::Value::Array(a) => a.len(),
        _ => 1,
    };
    fs::write(path, serde_json::to_string_pretty(&v)?).map_err(|e| TcsError::io(path, e))?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/t.csv");
        let rows = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, f64::MAX]];
        let n = write_csv(&p, &["a", "b"], rows.clone()).unwrap();
        assert_eq!(n, 2);
        let t = read_csv(&p).unwrap();
        assert_eq!(t.header, vec!["a", "b"]);
        assert_eq!(t.rows, rows);
        assert_eq!(t.column("b").unwrap()[0], 1.0 / 3.0);
        assert!(t.column("c").is_err());
        assert!(write_csv(&p, &["a"], vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn hash_matches_known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::with_scenario(Scenario::MacroStrong);
        let mut m = RunManifest::start(&cfg, vec!["w".into()]).unwrap();
        m.invariants.push(InvariantCheck::at_most("x", 2.0, 1.0).advisory());
        m.invariants.push(InvariantCheck::at_least("y", 2.0, 1.0));
        let p = m.write(dir.path()).unwrap();
        let back = RunManifest::read(&p).unwrap();
        assert_eq!(back, m);
        assert!(back.incomplete);
        assert!(back.violations().is_empty());
        assert_eq!(back.config_hash, config_hash(&cfg).unwrap());
    }
}
