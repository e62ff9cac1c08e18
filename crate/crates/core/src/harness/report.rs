//! Tabular study output and pass/fail verdicts.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::StudyKind;
use crate::error::{Error, Result};

/// One acceptance check of a study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Informational verdicts are reported but never fail a study.
    pub informational: bool,
}

impl Verdict {
    pub fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
            informational: false,
        }
    }

    pub fn info(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            informational: true,
            ..Self::check(name, passed, detail)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub study: StudyKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub verdicts: Vec<Verdict>,
    /// Study-specific structured results for the JSON summary.
    pub extras: serde_json::Value,
    /// Wall-clock duration of the study; kept out of the CSV.
    pub elapsed_s: f64,
}

impl StudyReport {
    pub fn new(study: StudyKind, columns: &[&str]) -> Self {
        Self {
            study,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            verdicts: Vec::new(),
            extras: serde_json::Value::Null,
            elapsed_s: 0.0,
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// True when every non-informational verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed || v.informational)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of column `name` in row order.
    pub fn column_values(&self, name: &str) -> Vec<&str> {
        match self.column(name) {
            Some(k) => self.rows.iter().map(|r| r[k].as_str()).collect(),
            None => Vec::new(),
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
        w.write_record(&self.columns).map_err(to_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&Summary {
            study: self.study,
            passed: self.passed(),
            rows: self.rows.len(),
            verdicts: &self.verdicts,
            extras: &self.extras,
            elapsed_s: self.elapsed_s,
        })
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes `<study>.csv` and `<study>_summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{}.csv", self.study));
        let json_path = dir.join(format!("{}_summary.json", self.study));
        std::fs::write(&csv_path, self.to_csv_string()?).map_err(|e| Error::io(&csv_path, e))?;
        std::fs::write(&json_path, self.summary_json()?).map_err(|e| Error::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    study: StudyKind,
    passed: bool,
    rows: usize,
    verdicts: &'a [Verdict],
    extras: &'a serde_json::Value,
    elapsed_s: f64,
}

/// Fixed-precision scientific notation used in every CSV cell.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else {
        format!("{x}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_verdicts() {
        let mut r = StudyReport::new(StudyKind::Convergence, &["family", "value"]);
        r.push_row(vec!["a,b".into(), num(0.5)]);
        assert_eq!(r.to_csv_string().unwrap(), "family,value\n\"a,b\",5.000000000e-1\n");
        r.verdicts.push(Verdict::info("timing", false, ""));
        assert!(r.passed());
        r.verdicts.push(Verdict::check("order", false, ""));
        assert!(!r.passed());
        assert_eq!(r.column_values("value"), vec!["5.000000000e-1"]);
    }

    #[test]
    fn number_format() {
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(-1234.5), "-1.234500000e3");
        assert_eq!(opt_num(None), "");
    }
}
