use std::path::Path;

use serde::{Deserialize, Serialize};

use fpme_core::solver::{DtPolicy, LinearStepping};
use fpme_core::verify::CHECK_NAMES;
use fpme_core::{Datum, DomainSpec, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub dimension: usize,
    pub side_lengths: Vec<f64>,
    pub grid_points_per_side: usize,
}

impl DomainBlock {
    pub fn build(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.dimension, &self.side_lengths, self.grid_points_per_side)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsBlock {
    pub m: f64,
    pub s: f64,
    pub modes: usize,
}

fn default_dt_initial() -> f64 {
    DtPolicy::default().initial
}
fn default_dt_safety() -> f64 {
    DtPolicy::default().safety
}
fn default_dt_growth() -> f64 {
    DtPolicy::default().growth
}
fn default_dt_max() -> f64 {
    DtPolicy::default().max
}
fn default_dt_min() -> f64 {
    DtPolicy::default().min
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtBlock {
    #[serde(default = "default_dt_initial")]
    pub initial: f64,
    #[serde(default = "default_dt_safety")]
    pub safety: f64,
    #[serde(default = "default_dt_growth")]
    pub growth: f64,
    #[serde(default = "default_dt_max")]
    pub max: f64,
    #[serde(default = "default_dt_min")]
    pub min: f64,
}

impl Default for DtBlock {
    fn default() -> Self {
        let p = DtPolicy::default();
        Self { initial: p.initial, safety: p.safety, growth: p.growth, max: p.max, min: p.min }
    }
}

impl DtBlock {
    pub fn policy(&self) -> DtPolicy {
        DtPolicy {
            initial: self.initial,
            safety: self.safety,
            growth: self.growth,
            max: self.max,
            min: self.min,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub output_times: Vec<f64>,
    #[serde(default)]
    pub dt: DtBlock,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LinearSteppingBlock {
    Exponential,
    BackwardEuler,
}

impl LinearSteppingBlock {
    pub fn to_core(self) -> LinearStepping {
        match self {
            LinearSteppingBlock::Exponential => LinearStepping::Exponential,
            LinearSteppingBlock::BackwardEuler => LinearStepping::BackwardEuler,
        }
    }
}

/// Which integration route a linear (m = 1) run takes: adaptive stepping or
/// the direct propagator evaluated at the output times.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearPath {
    #[default]
    Stepping,
    Exact,
}

fn default_inner_tolerance() -> f64 {
    1e-11
}
fn default_inner_iterations() -> usize {
    200
}
fn default_clip_tolerance() -> f64 {
    1e-9
}
fn default_lipschitz_margin() -> f64 {
    0.4
}
fn default_max_clipped_fraction() -> f64 {
    1e-4
}
fn default_linear_stepping() -> LinearSteppingBlock {
    LinearSteppingBlock::Exponential
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_inner_tolerance")]
    pub inner_tolerance: f64,
    #[serde(default = "default_inner_iterations")]
    pub max_inner_iterations: usize,
    #[serde(default = "default_clip_tolerance")]
    pub clip_tolerance: f64,
    #[serde(default = "default_lipschitz_margin")]
    pub lipschitz_margin: f64,
    #[serde(default = "default_max_clipped_fraction")]
    pub max_clipped_fraction: f64,
    #[serde(default = "default_linear_stepping")]
    pub linear_stepping: LinearSteppingBlock,
    #[serde(default)]
    pub linear_path: LinearPath,
}

impl Default for SolverBlock {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn default_pair_samples() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenBlock {
    /// Spectral mollification weight; zero keeps the raw truncated sum.
    #[serde(default)]
    pub epsilon: f64,
    /// Kernel truncation override; defaults to the physics mode count.
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default = "default_pair_samples")]
    pub pair_samples: usize,
}

impl Default for GreenBlock {
    fn default() -> Self {
        Self { epsilon: 0.0, modes: None, pair_samples: default_pair_samples() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Harnack: admissible global sup/inf ratio.
    #[serde(default)]
    pub max_ratio: Option<f64>,
    /// Harnack: ball radii to test.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    /// Ordered contraction: the lower datum is the run datum scaled by this.
    #[serde(default)]
    pub pair_scale: Option<f64>,
    /// Sandwich: number of sampled (t0, t1, t, x0) tuples.
    #[serde(default)]
    pub tuples: Option<usize>,
}

impl CheckSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            tolerance: None,
            max_ratio: None,
            radii: None,
            pair_scale: None,
            tuples: None,
        }
    }
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { formats: default_formats() }
    }
}

fn default_elliptic_tolerance() -> f64 {
    1e-12
}
fn default_elliptic_iterations() -> usize {
    400
}
fn default_relaxation() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticBlock {
    /// Defaults to the separated-profile coefficient 1/(m-1).
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_elliptic_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_elliptic_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
}

impl Default for EllipticBlock {
    fn default() -> Self {
        Self {
            lambda: None,
            tolerance: default_elliptic_tolerance(),
            max_iterations: default_elliptic_iterations(),
            relaxation: default_relaxation(),
        }
    }
}

/// One run: domain, physics, datum, time grid, checks and output selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub domain: DomainBlock,
    pub physics: PhysicsBlock,
    pub datum: Datum,
    pub time: TimeBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub green: GreenBlock,
    #[serde(default)]
    pub elliptic: EllipticBlock,
    /// Checks to run; empty means every check applicable to this `m`.
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    /// Check names whose failure is expected and does not fail the run.
    #[serde(default)]
    pub expected_fail: Vec<String>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.build()?;
        if !(self.physics.s > 0.0 && self.physics.s <= 1.0) {
            return Err(Error::InvalidConfig(format!("physics.s = {} outside (0, 1]", self.physics.s)));
        }
        if !(self.physics.m >= 1.0) {
            return Err(Error::InvalidConfig(format!("physics.m = {} below 1", self.physics.m)));
        }
        if self.physics.modes == 0 {
            return Err(Error::InvalidConfig("physics.modes must be positive".into()));
        }
        if self.time.output_times.is_empty() {
            return Err(Error::InvalidConfig("time.output_times is empty".into()));
        }
        for spec in &self.checks {
            if !CHECK_NAMES.contains(&spec.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "unknown check '{}' (known: {})",
                    spec.name,
                    CHECK_NAMES.join(", ")
                )));
            }
        }
        for name in &self.expected_fail {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown expected_fail check '{name}'")));
            }
        }
        for f in &self.output.formats {
            if f != "json" && f != "csv" {
                return Err(Error::InvalidConfig(format!("unknown output format '{f}'")));
            }
        }
        Ok(())
    }

    /// Checks to run: the explicit list, or everything applicable to `m`.
    pub fn effective_checks(&self) -> Vec<CheckSpec> {
        if !self.checks.is_empty() {
            return self.checks.clone();
        }
        let names: &[&str] = if self.physics.m > 1.0 {
            &[
                "absolute_bound",
                "backward_smoothing",
                "benilan_crandall",
                "boundary_upper",
                "green_pairing_sandwich",
                "harnack",
                "lower_bound",
                "smoothing",
                "weighted_l1",
            ]
        } else {
            &["linear_limit", "weighted_l1"]
        };
        names.iter().map(|n| CheckSpec::named(n)).collect()
    }
}

/// Parameter sweep: a base run crossed with lists of m, s and data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub base: RunConfig,
    pub grid: SweepGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    #[serde(default)]
    pub datum: Vec<Datum>,
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let cfg: SweepConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.grid.m.is_empty() || self.grid.s.is_empty() {
            return Err(Error::InvalidConfig("sweep grid must list at least one m and one s".into()));
        }
        Ok(())
    }

    /// The cross product of the grid, one run config per cell.
    pub fn cells(&self) -> Vec<RunConfig> {
        let data: Vec<Datum> =
            if self.grid.datum.is_empty() { vec![self.base.datum.clone()] } else { self.grid.datum.clone() };
        let mut out = Vec::new();
        for &m in &self.grid.m {
            for &s in &self.grid.s {
                for datum in &data {
                    let mut cell = self.base.clone();
                    cell.physics.m = m;
                    cell.physics.s = s;
                    cell.datum = datum.clone();
                    cell.name = format!("{}-m{m}-s{s}-{}", self.name, datum.label());
                    out.push(cell);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "name": "t",
            "domain": {"dimension": 1, "side_lengths": [1.0], "grid_points_per_side": 64},
            "physics": {"m": 2.0, "s": 0.5, "modes": 16},
            "datum": {"name": "phi1", "amplitude": 1.0},
            "time": {"output_times": [0.1, 0.2]}
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = RunConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(cfg.solver.max_inner_iterations, 200);
        assert_eq!(cfg.output.formats, vec!["json", "csv"]);
        assert!(cfg.effective_checks().iter().any(|c| c.name == "harnack"));
    }

    #[test]
    fn rejects_unknown_keys_and_checks() {
        let bad = minimal_json().replace("\"name\": \"t\",", "\"name\": \"t\", \"bogus\": 1,");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad2 = minimal_json().replace(
            "\"time\":",
            "\"checks\": [{\"name\": \"no_such_check\"}], \"time\":",
        );
        assert!(RunConfig::from_json(&bad2).is_err());
    }

    #[test]
    fn linear_defaults_to_linear_checks() {
        let cfg = RunConfig::from_json(&minimal_json().replace("\"m\": 2.0", "\"m\": 1.0")).unwrap();
        let names: Vec<String> = cfg.effective_checks().into_iter().map(|c| c.name).collect();
        assert_eq!(names, vec!["linear_limit", "weighted_l1"]);
    }

    #[test]
    fn sweep_cells_cross_product() {
        let sweep = SweepConfig {
            name: "sw".into(),
            base: RunConfig::from_json(&minimal_json()).unwrap(),
            grid: SweepGrid { m: vec![1.5, 2.0], s: vec![0.5, 1.0], datum: vec![] },
        };
        assert_eq!(sweep.cells().len(), 4);
        let empty = SweepConfig {
            name: "sw".into(),
            base: RunConfig::from_json(&minimal_json()).unwrap(),
            grid: SweepGrid { m: vec![], s: vec![0.5], datum: vec![] },
        };
        assert!(empty.validate().is_err());
    }
}
