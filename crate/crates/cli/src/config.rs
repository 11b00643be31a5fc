//! Run configuration: one JSON document per run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ToolError, ToolResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    CheckKernel,
    BoltzmannReport,
    CdvAudit,
    KolmogorovSolve,
    ScalingAudit,
    HarnackExperiment,
    BarrierVerify,
    CoverDemo,
    InkspotsAudit,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::CheckKernel,
        Subcommand::BoltzmannReport,
        Subcommand::CdvAudit,
        Subcommand::KolmogorovSolve,
        Subcommand::ScalingAudit,
        Subcommand::HarnackExperiment,
        Subcommand::BarrierVerify,
        Subcommand::CoverDemo,
        Subcommand::InkspotsAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::CheckKernel => "check-kernel",
            Subcommand::BoltzmannReport => "boltzmann-report",
            Subcommand::CdvAudit => "cdv-audit",
            Subcommand::KolmogorovSolve => "kolmogorov-solve",
            Subcommand::ScalingAudit => "scaling-audit",
            Subcommand::HarnackExperiment => "harnack-experiment",
            Subcommand::BarrierVerify => "barrier-verify",
            Subcommand::CoverDemo => "cover-demo",
            Subcommand::InkspotsAudit => "inkspots-audit",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Keys accepted in `parameters`.
    pub fn parameter_keys(self) -> &'static [&'static str] {
        match self {
            Subcommand::CheckKernel => &["coercivity_panels", "l2_shift"],
            Subcommand::BoltzmannReport => &["pv_rtol", "symmetry_triples", "maxwellian_nodes"],
            Subcommand::CdvAudit => &["carleman_panels", "members"],
            Subcommand::KolmogorovSolve => &["box", "duhamel_time"],
            Subcommand::ScalingAudit => &["box"],
            Subcommand::HarnackExperiment => &["box", "epsilon", "r0", "refinements"],
            Subcommand::BarrierVerify => &["lambda", "big_lambda", "p_max", "time_nodes", "axiom_pairs", "b1_points"],
            Subcommand::CoverDemo => &["interval_families", "cylinder_families", "vitali_samples"],
            Subcommand::InkspotsAudit => &["instances", "seeds_per_instance", "j_max"],
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Built-in or tabulated kernels for `check-kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    FractionalLaplacian {
        #[serde(default = "one")]
        scale: f64,
        /// Reference radius; absent means the whole space.
        #[serde(default)]
        radius: Option<f64>,
    },
    Truncated {
        #[serde(default = "one")]
        scale: f64,
        cutoff: f64,
    },
    Cone {
        /// Half-angle in radians.
        aperture: f64,
        axis: Vec<f64>,
    },
    /// Non-symmetric `|w|^{−d−2s}(1 + a·exp(−|v|²/2))`.
    Modulated { amplitude: f64 },
    /// A grid-function file sampled on `(v, w)`.
    Tabulated { path: PathBuf, sha256: String },
}

fn one() -> f64 {
    1.0
}

/// A frozen-constants file pinned by content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    /// Fully determines every randomized probe set.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Grid resolutions; the meaning of each entry is per subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    /// Overrides keyed by check name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsRef>,
    /// Runtime only: never echoed into reports, results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(subcommand: Subcommand, seed: u64) -> Self {
        Self {
            subcommand,
            seed,
            d: None,
            s: None,
            gamma: None,
            grid: None,
            probes: None,
            tolerances: BTreeMap::new(),
            parameters: BTreeMap::new(),
            kernel: None,
            constants: None,
            workers: None,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> ToolResult<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| ToolError::Schema(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> ToolResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> ToolResult<()> {
        let allowed = self.subcommand.parameter_keys();
        if let Some(k) = self.parameters.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(ToolError::Schema(format!("unknown parameter `{k}` for {} (allowed: {})", self.subcommand, allowed.join(", "))));
        }
        if let Some((k, v)) = self.parameters.iter().chain(&self.tolerances).find(|(_, v)| !v.is_finite()) {
            return Err(ToolError::Schema(format!("`{k}` must be finite, got {v}")));
        }
        if let Some((k, _)) = self.tolerances.iter().find(|(_, v)| **v < 0.0) {
            return Err(ToolError::Schema(format!("tolerance `{k}` must be nonnegative")));
        }
        if matches!(self.d, Some(0)) {
            return Err(ToolError::Schema("`d` must be positive".into()));
        }
        if let Some(s) = self.s {
            if !(s > 0.0 && s < 1.0) {
                return Err(ToolError::Schema(format!("`s` must lie in (0, 1), got {s}")));
            }
        }
        if self.grid.as_ref().is_some_and(|g| g.is_empty() || g.contains(&0)) {
            return Err(ToolError::Schema("`grid` entries must be positive".into()));
        }
        if matches!(self.probes, Some(0)) || matches!(self.workers, Some(0)) {
            return Err(ToolError::Schema("`probes` and `workers` must be positive".into()));
        }
        if self.kernel.is_some() && self.subcommand != Subcommand::CheckKernel {
            return Err(ToolError::Schema(format!("`kernel` is only accepted by check-kernel, not {}", self.subcommand)));
        }
        Ok(())
    }

    /// Canonical JSON of the fields that determine the results.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        debug_assert!(self.subcommand.parameter_keys().contains(&key), "{key}");
        self.parameters.get(key).copied().unwrap_or(default)
    }

    /// Integer parameter; fractional or negative values are schema errors.
    pub fn count(&self, key: &str, default: usize) -> ToolResult<usize> {
        let v = self.param(key, default as f64);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(ToolError::Schema(format!("`{key}` must be a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn grid_or(&self, default: &[usize]) -> Vec<usize> {
        self.grid.clone().unwrap_or_else(|| default.to_vec())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Reads a file after checking its content hash.
pub fn read_pinned(path: &Path, sha256: &str) -> ToolResult<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| ToolError::Io(format!("{}: {e}", path.display())))?;
    let got = sha256_hex(&bytes);
    if !got.eq_ignore_ascii_case(sha256) {
        return Err(ToolError::Schema(format!("{} has sha256 {got}, config pins {sha256}", path.display())));
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_names_missing_field() {
        let e = RunConfig::from_json("{}").unwrap_err().to_string();
        assert!(e.contains("subcommand"), "{e}");
        let e = RunConfig::from_json(r#"{"subcommand": "cover-demo"}"#).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
    }

    #[test]
    fn unknown_fields_and_parameters_are_rejected() {
        assert!(RunConfig::from_json(r#"{"subcommand": "cover-demo", "seed": 1, "colour": 2}"#).is_err());
        let e = RunConfig::from_json(r#"{"subcommand": "cover-demo", "seed": 1, "parameters": {"p_max": 3}}"#).unwrap_err().to_string();
        assert!(e.contains("p_max"), "{e}");
        assert!(RunConfig::from_json(r#"{"subcommand": "nope", "seed": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"subcommand": "cover-demo", "seed": 1, "kernel": {"kind": "modulated", "amplitude": 0.1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"subcommand": "check-kernel", "seed": 1, "s": 1.5}"#).is_err());
    }

    #[test]
    fn runtime_fields_do_not_change_the_hash() {
        let mut a = RunConfig::new(Subcommand::CheckKernel, 7);
        let h = a.sha256();
        a.workers = Some(4);
        a.out = Some("x".into());
        assert_eq!(a.sha256(), h);
        a.seed = 8;
        assert_ne!(a.sha256(), h);
    }

    #[test]
    fn names_round_trip() {
        for c in Subcommand::ALL {
            assert_eq!(Subcommand::parse(c.name()), Some(c));
            let j = serde_json::to_string(&c).unwrap();
            assert_eq!(j, format!("\"{}\"", c.name()));
        }
    }

    #[test]
    fn pinned_files_check_their_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, b"{}").unwrap();
        let h = sha256_hex(b"{}");
        assert!(read_pinned(&p, &h).is_ok());
        assert!(read_pinned(&p, &"0".repeat(64)).is_err());
    }
}
