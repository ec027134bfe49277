use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, ExperimentKind};
use super::runner::run;
use crate::error::{Error, Result};

/// A list of configs, read from `{"runs": [...]}` or a bare array.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub runs: Vec<ExperimentConfig>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let items = match v {
            Value::Array(items) => items,
            Value::Object(mut obj) => match obj.remove("runs") {
                Some(Value::Array(items)) => items,
                _ => return Err(Error::Config("manifest object needs a `runs` array".into())),
            },
            _ => return Err(Error::Config("manifest must be an array or an object with `runs`".into())),
        };
        let runs = items
            .into_iter()
            .enumerate()
            .map(|(i, item)| ExperimentConfig::from_value(item).map_err(|e| Error::Config(format!("run {i}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest { runs })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Keep only the runs of one kind.
    pub fn filtered(&self, kind: Option<ExperimentKind>) -> Manifest {
        Manifest {
            runs: self.runs.iter().filter(|c| kind.is_none_or(|k| c.kind == k)).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub index: usize,
    pub kind: ExperimentKind,
    pub preset: String,
    pub config_hash: Option<String>,
    pub status: RunStatus,
    /// Failed check names, or the error message.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub rows: Vec<SuiteRow>,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

impl SuiteSummary {
    pub fn ok(&self) -> bool {
        self.failed == 0 && self.errors == 0
    }

    /// Plain-text table, one run per line.
    pub fn table(&self) -> String {
        let mut out = format!("{:>4}  {:<18} {:<24} {:<16} {:<6} {}\n", "run", "kind", "preset", "hash", "status", "detail");
        for r in &self.rows {
            let status = match r.status {
                RunStatus::Pass => "pass",
                RunStatus::Fail => "FAIL",
                RunStatus::Error => "ERROR",
            };
            out.push_str(&format!(
                "{:>4}  {:<18} {:<24} {:<16} {:<6} {}\n",
                r.index,
                r.kind.name(),
                r.preset,
                r.config_hash.as_deref().unwrap_or("-"),
                status,
                r.detail
            ));
        }
        out.push_str(&format!("{} passed, {} failed, {} errors\n", self.passed, self.failed, self.errors));
        out
    }

    /// `suite_summary.json` and `suite_summary.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        fs::write(dir.join("suite_summary.json"), b)?;
        let mut w = csv::Writer::from_path(dir.join("suite_summary.csv"))?;
        w.write_record(["run", "kind", "preset", "config_hash", "status", "detail"])?;
        for r in &self.rows {
            let status = serde_json::to_value(r.status)?;
            w.write_record(&[
                r.index.to_string(),
                r.kind.name().to_string(),
                r.preset.clone(),
                r.config_hash.clone().unwrap_or_default(),
                status.as_str().unwrap_or_default().to_string(),
                r.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run every config of the manifest in parallel, writing each under `root`
/// unless it names its own output directory. Per-run errors are recorded in
/// the summary rather than returned.
pub fn suite(manifest: &Manifest, root: Option<&PathBuf>) -> Result<SuiteSummary> {
    if manifest.runs.is_empty() {
        return Err(Error::Config("empty manifest".into()));
    }
    let rows: Vec<SuiteRow> = manifest
        .runs
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let mut c = c.clone();
            if c.output_dir.is_none() {
                c.output_dir = root.cloned();
            }
            let (config_hash, status, detail) = match run(&c) {
                Ok(rec) => {
                    let failed: Vec<&str> = rec.checks.iter().filter(|k| !k.pass).map(|k| k.name.as_str()).collect();
                    let status = if rec.pass { RunStatus::Pass } else { RunStatus::Fail };
                    (Some(rec.config_hash), status, failed.join(";"))
                }
                Err(e) => (c.hash().ok(), RunStatus::Error, e.to_string()),
            };
            SuiteRow {
                index,
                kind: c.kind,
                preset: c.preset.clone(),
                config_hash,
                status,
                detail,
            }
        })
        .collect();
    let count = |s: RunStatus| rows.iter().filter(|r| r.status == s).count();
    Ok(SuiteSummary {
        passed: count(RunStatus::Pass),
        failed: count(RunStatus::Fail),
        errors: count(RunStatus::Error),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_shapes() {
        let a = Manifest::from_json(r#"[{"kind": "gauge"}]"#).unwrap();
        let b = Manifest::from_json(r#"{"runs": [{"kind": "gauge"}]}"#).unwrap();
        assert_eq!(a, b);
        assert!(Manifest::from_json(r#"{"jobs": []}"#).is_err());
        assert!(Manifest::from_json(r#"[{"kind": "gauge", "bogus": 1}]"#).is_err());
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        let m = Manifest::from_json(r#"[{"kind": "gauge"}]"#).unwrap();
        let e = suite(&m.filtered(Some(ExperimentKind::Polar)), None).unwrap_err();
        assert_eq!(e.to_string(), "config error: empty manifest");
    }

    #[test]
    fn one_failing_fixture_is_one_failure() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::from_json(
            r#"[
                {"kind": "talagrand", "dim": 2, "n": 256},
                {"kind": "talagrand", "preset": "scale:2", "dim": 1, "n": 2048, "fixture": "swap-sides"},
                {"kind": "submartingale", "dim": 2, "n": 256},
                {"kind": "jacobian", "preset": "nonsense", "dim": 1, "n": 16}
            ]"#,
        )
        .unwrap();
        let s = suite(&m, Some(&dir.path().to_path_buf())).unwrap();
        assert_eq!((s.passed, s.failed, s.errors), (2, 1, 1));
        assert_eq!(s.rows[1].status, RunStatus::Fail);
        assert_eq!(s.rows[3].status, RunStatus::Error);
        assert!(!s.ok());
        s.write(dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("suite_summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }
}
