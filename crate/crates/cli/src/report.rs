//! Machine-readable run reports and their comparison.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Subcommand};
use crate::error::{ToolError, ToolResult};

/// How a number was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Quadrature,
    Spectral,
    LinearProgram,
    ExactArithmetic,
    Voxel,
    MonteCarlo,
}

/// Pass condition of a check with tolerance `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ tol`.
    AtMost,
    /// `value ≥ tol`.
    AtLeast,
    /// `value > tol`.
    Above,
    /// `|value − target| ≤ tol`.
    Near { target: f64 },
}

impl Relation {
    fn holds(self, value: f64, tol: f64) -> bool {
        match self {
            Relation::AtMost => value <= tol,
            Relation::AtLeast => value >= tol,
            Relation::Above => value > tol,
            Relation::Near { target } => (value - target).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// `None` when the measured value is not finite.
    pub value: Option<f64>,
    pub tolerance: f64,
    pub relation: Relation,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub name: String,
    pub value: Option<f64>,
    /// Accuracy of `value` as computed.
    pub tolerance: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub witness: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub subcommand: Subcommand,
    pub config: RunConfig,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_sha256: Option<String>,
    pub checks: Vec<Check>,
    pub measured: Vec<Measured>,
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
    /// Excluded from the canonical bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            subcommand: config.subcommand,
            config: config.clone(),
            config_sha256: config.sha256(),
            constants_sha256: None,
            checks: Vec::new(),
            measured: Vec::new(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
            timing: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn measured(&self, name: &str) -> Option<&Measured> {
        self.measured.iter().find(|m| m.name == name)
    }

    /// Records a check; a tolerance override in the config replaces `tol`.
    pub fn record(&mut self, name: &str, value: f64, tol: f64, relation: Relation, provenance: Provenance) -> bool {
        let tolerance = self.config.tolerances.get(name).copied().unwrap_or(tol);
        let passed = value.is_finite() && relation.holds(value, tolerance);
        self.checks.push(Check { name: name.into(), passed, value: finite(value), tolerance, relation, provenance, detail: None });
        passed
    }

    /// Like [`Report::record`] with an explanation attached.
    pub fn record_with(&mut self, name: &str, value: f64, tol: f64, relation: Relation, provenance: Provenance, detail: String) -> bool {
        let ok = self.record(name, value, tol, relation, provenance);
        self.checks.last_mut().expect("just pushed").detail = Some(detail);
        ok
    }

    pub fn measure(&mut self, name: &str, value: f64, tolerance: f64, provenance: Provenance, witness: serde_json::Value) {
        self.measured.push(Measured { name: name.into(), value: finite(value), tolerance, provenance, witness });
    }

    /// Tolerance keys in the config that no check used.
    pub fn unused_tolerances(&self) -> Vec<String> {
        self.config.tolerances.keys().filter(|k| self.check(k).is_none()).cloned().collect()
    }

    /// Pretty JSON without timing; identical inputs give identical bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut r = self.clone();
        r.timing = None;
        let mut b = serde_json::to_vec_pretty(&r).expect("report serializes");
        b.push(b'\n');
        b
    }

    /// Writes `report.json` (canonical) and `timing.json` into `dir`.
    pub fn write(&self, dir: &Path) -> ToolResult<()> {
        let io = |e: std::io::Error| ToolError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.json"), self.canonical_bytes()).map_err(io)?;
        if let Some(t) = &self.timing {
            std::fs::write(dir.join("timing.json"), serde_json::to_vec_pretty(t).expect("timing serializes")).map_err(io)?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> ToolResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ToolError::Schema(format!("{}: {e}", path.display())))
    }
}

/// One differing field of two reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub name: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `|a − b| / max(|a|, |b|)`; infinite if only one side is present or finite.
    pub relative: f64,
}

impl Delta {
    fn of(name: String, a: Option<f64>, b: Option<f64>) -> Option<Self> {
        let relative = match (a, b) {
            (Some(x), Some(y)) if x == y => return None,
            (Some(x), Some(y)) => (x - y).abs() / x.abs().max(y.abs()),
            (None, None) => return None,
            _ => f64::INFINITY,
        };
        Some(Self { name, a, b, relative })
    }
}

/// Field-wise diff of checks (value and pass flag) and measured constants.
pub fn compare_reports(a: &Report, b: &Report) -> ToolResult<Vec<Delta>> {
    if a.subcommand != b.subcommand {
        return Err(ToolError::Mismatch(format!("{} vs {}", a.subcommand, b.subcommand)));
    }
    let flag = |p: bool| Some(if p { 1.0 } else { 0.0 });
    let fields = |r: &Report| {
        let mut m: BTreeMap<String, Option<f64>> = BTreeMap::new();
        for c in &r.checks {
            m.insert(format!("check.{}", c.name), c.value);
            m.insert(format!("check.{}.passed", c.name), flag(c.passed));
        }
        for x in &r.measured {
            m.insert(format!("measured.{}", x.name), x.value);
        }
        m
    };
    let (fa, fb) = (fields(a), fields(b));
    let mut names: Vec<&String> = fa.keys().chain(fb.keys()).collect();
    names.sort();
    names.dedup();
    Ok(names
        .into_iter()
        .filter_map(|n| Delta::of(n.clone(), fa.get(n).copied().flatten(), fb.get(n).copied().flatten()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: f64) -> Report {
        let mut r = Report::new(&RunConfig::new(Subcommand::CoverDemo, 1));
        r.record("ratio", v, 0.5, Relation::AtLeast, Provenance::Voxel);
        r.measure("delta_grid", 0.1, 0.0, Provenance::Voxel, serde_json::Value::Null);
        r
    }

    #[test]
    fn identical_reports_have_empty_diff() {
        assert!(compare_reports(&sample(0.7), &sample(0.7)).unwrap().is_empty());
    }

    #[test]
    fn diff_reports_relative_deltas_and_flags() {
        let d = compare_reports(&sample(0.8), &sample(0.4)).unwrap();
        let v = d.iter().find(|x| x.name == "check.ratio").unwrap();
        assert!((v.relative - 0.5).abs() < 1e-15);
        assert!(d.iter().any(|x| x.name == "check.ratio.passed"));
    }

    #[test]
    fn mismatched_subcommands_are_rejected() {
        let other = Report::new(&RunConfig::new(Subcommand::CheckKernel, 1));
        assert!(matches!(compare_reports(&sample(1.0), &other), Err(ToolError::Mismatch(_))));
    }

    #[test]
    fn overrides_and_non_finite_values() {
        let mut c = RunConfig::new(Subcommand::CoverDemo, 1);
        c.tolerances.insert("gap".into(), 0.2);
        let mut r = Report::new(&c);
        assert!(r.record("gap", 0.15, 0.1, Relation::AtMost, Provenance::Quadrature));
        assert!(!r.record("nan", f64::NAN, 1.0, Relation::AtMost, Provenance::Quadrature));
        assert_eq!(r.check("nan").unwrap().value, None);
        assert!(!r.passed());
        assert!(r.unused_tolerances().is_empty());
    }

    #[test]
    fn canonical_bytes_ignore_timing_and_round_trip() {
        let mut a = sample(0.7);
        let b = a.clone();
        a.timing = Some(Timing { seconds: 3.0, workers: 2 });
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let back = Report::read(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, b);
        assert!(dir.path().join("timing.json").exists());
    }
}
