//! Experiment reports and their CSV / JSON serialization.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::Format;
use crate::error::Result;

/// A numeric table written as one CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Series {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// 17 significant digits, so values round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub scenario: String,
    pub version: String,
    pub config: Value,
    /// Seconds since the Unix epoch; excluded from reproducibility checks.
    pub timestamp: f64,
    /// Excluded from reproducibility checks.
    pub wall_clock_seconds: f64,
    pub results: Value,
    pub series: Vec<Series>,
    pub invariants: Vec<InvariantCheck>,
    /// Observations that are reported but do not fail the run.
    pub findings: Vec<String>,
    pub pass: bool,
}

/// Keys left out when comparing two reports for reproducibility.
pub const VOLATILE_KEYS: [&str; 2] = ["timestamp", "wall_clock_seconds"];

impl ExperimentReport {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The JSON summary without the volatile keys.
    pub fn comparable(&self) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(m) = &mut v {
            for k in VOLATILE_KEYS {
                m.remove(k);
            }
        }
        Ok(v)
    }

    pub fn failed_invariants(&self) -> Vec<&InvariantCheck> {
        self.invariants.iter().filter(|c| !c.pass).collect()
    }

    /// Writes `<series>.csv` files and `summary.json` into `dir`.
    pub fn emit(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if formats.contains(&Format::Csv) {
            for s in &self.series {
                let p = dir.join(format!("{}.csv", sanitize(&s.name)));
                fs::write(&p, s.to_csv())?;
                written.push(p);
            }
        }
        if formats.contains(&Format::Json) {
            let p = dir.join("summary.json");
            fs::write(&p, self.summary_json()?)?;
            written.push(p);
        }
        Ok(written)
    }

    /// One line per invariant plus the verdict.
    pub fn text_summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}", self.scenario);
        for c in &self.invariants {
            let _ = writeln!(s, "  [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        for f in &self.findings {
            let _ = writeln!(s, "  finding: {f}");
        }
        let _ = writeln!(s, "{}", if self.pass { "all invariants hold" } else { "invariant failure" });
        s
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut s = Series::new("t", &["a", "b"]);
        assert_eq!(s.to_csv(), "a,b\n");
        s.push(vec![0.1, -2.0]);
        let text = s.to_csv();
        let line = text.lines().nth(1).unwrap();
        let back: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(back, vec![0.1, -2.0]);
        assert_eq!(format_float(f64::INFINITY), "inf");
    }
}
