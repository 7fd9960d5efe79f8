//! Experiment configuration.
//!
//! Resolution order, later wins: built-in defaults, the TOML file, `--set`
//! overrides, then `CDBOUND_WORKERS` for the pool size. Unknown keys are
//! rejected at every level.

use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const WORKERS_ENV: &str = "CDBOUND_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected section.key=value")]
    Override(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoundSweep,
    DynamicsSweep,
    Optimize,
    StaVerify,
    BathFunctionals,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::BoundSweep => "bound-sweep",
            Self::DynamicsSweep => "dynamics-sweep",
            Self::Optimize => "optimize",
            Self::StaVerify => "sta-verify",
            Self::BathFunctionals => "bath-functionals",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Linear,
    Sinh,
    QuasiStep,
    ControlPoints,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub family: FamilyKind,
    pub tau: f64,
    pub q_initial: f64,
    pub q_final: f64,
    /// Gap for single-point experiments.
    pub delta: f64,
    /// Steepness for single-point experiments.
    pub steepness: f64,
    /// Sinh join value or quasi-step plateau. Absent means the midpoint for
    /// sinh and `Δ cot 2φ` for the quasi-step.
    pub plateau: Option<f64>,
    pub control_times: Vec<f64>,
    pub control_values: Vec<f64>,
    /// CSV of `t,q` samples for the tabulated family.
    pub table: Option<PathBuf>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Sinh,
            tau: 2.0,
            q_initial: -1.0,
            q_final: 1.0,
            delta: 1.0,
            steepness: 3.0,
            plateau: None,
            control_times: Vec::new(),
            control_values: Vec::new(),
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub delta_start: f64,
    pub delta_stop: f64,
    pub delta_points: usize,
    /// Explicit gap values; replace the range when non-empty.
    pub deltas: Vec<f64>,
    pub steepness: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            delta_start: 0.1,
            delta_stop: 2.0,
            delta_points: 20,
            deltas: Vec::new(),
            steepness: vec![1.0, 3.0, 10.0],
        }
    }
}

impl SweepConfig {
    pub fn delta_values(&self) -> Vec<f64> {
        if !self.deltas.is_empty() {
            return self.deltas.clone();
        }
        let n = self.delta_points;
        if n == 1 {
            return vec![self.delta_start];
        }
        (0..n)
            .map(|i| {
                self.delta_start + (self.delta_stop - self.delta_start) * i as f64 / (n - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    Static,
    Sta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    pub phi: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            mode: CouplingMode::Static,
            phi: FRAC_PI_4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BathKind {
    Underdamped,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathConfig {
    pub kind: BathKind,
    pub omega0: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Inverse temperature; `inf` is zero temperature.
    pub beta: f64,
    /// CSV of `omega,J` samples for the tabulated density.
    pub table: Option<PathBuf>,
    pub tail_exponent: f64,
    /// Uniform intervals on which `X_t` is tabulated over `[0, τ]`.
    pub intervals: usize,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            kind: BathKind::Underdamped,
            omega0: 1.0,
            gamma: 0.1,
            lambda: 0.1,
            beta: 1.0,
            table: None,
            tail_exponent: 3.0,
            intervals: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Heom,
    Pseudomode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub depth: usize,
    pub matsubara: usize,
    pub max_depth: usize,
    pub max_matsubara: usize,
    pub matsubara_terminator: bool,
    pub depth_closure: bool,
    pub fock: usize,
    pub max_fock: usize,
    pub dt: f64,
    pub check_convergence: bool,
    pub output_points: usize,
    /// Simpson grid size `M` for the bound.
    pub grid: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Heom,
            depth: 6,
            matsubara: 3,
            max_depth: 12,
            max_matsubara: 8,
            matsubara_terminator: false,
            depth_closure: false,
            fock: 10,
            max_fock: 40,
            dt: 0.01,
            check_convergence: true,
            output_points: 100,
            grid: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizeFamily {
    Sinh,
    ShiftedSinh,
    ControlPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizeMethod {
    /// Golden section for one parameter, simplex otherwise.
    Auto,
    Scalar,
    Simplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub family: OptimizeFamily,
    pub method: OptimizeMethod,
    pub bounds: Vec<[f64; 2]>,
    pub initial: Vec<f64>,
    pub control_times: Vec<f64>,
    pub seed: u64,
    pub theta_dot_ceiling: f64,
    pub max_evaluations: usize,
    pub parameter_rel_tol: f64,
    /// Re-run the optimized drive through the dynamics solver.
    pub verify: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            family: OptimizeFamily::Sinh,
            method: OptimizeMethod::Auto,
            bounds: vec![[0.5, 50.0]],
            initial: Vec::new(),
            control_times: Vec::new(),
            seed: 0,
            theta_dot_ceiling: 50.0,
            max_evaluations: 2000,
            parameter_rel_tol: 1e-4,
            verify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaVerifyConfig {
    pub beta: f64,
    /// Accept `beta` below 10, where the pseudomode picture is rougher.
    pub allow_low_beta: bool,
    pub threshold: f64,
    /// Also run at the static angle and require it to score lower.
    pub compare_static: bool,
}

impl Default for StaVerifyConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            allow_low_beta: false,
            threshold: 0.999,
            compare_static: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File stem; the experiment name when absent.
    pub name: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub sta_verify: StaVerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    #[cfg(test)]
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            experiment: kind,
            workers: 0,
            protocol: ProtocolConfig::default(),
            sweep: SweepConfig::default(),
            coupling: CouplingConfig::default(),
            bath: BathConfig::default(),
            solver: SolverConfig::default(),
            optimize: OptimizeConfig::default(),
            sta_verify: StaVerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Builds the config from an optional file, an optional experiment kind
    /// and `key=value` overrides.
    pub fn resolve(
        file: Option<&Path>,
        kind: Option<ExperimentKind>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        if let Some(k) = kind {
            table.insert("experiment".into(), toml::Value::String(k.name().into()));
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if !table.contains_key("experiment") {
            return Err(ConfigError::Invalid(
                "no experiment given: set `experiment` in the config or pass --experiment".into(),
            ));
        }
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            cfg.workers = v.trim().parse().map_err(|_| {
                ConfigError::Invalid(format!(
                    "{WORKERS_ENV} must be a non-negative integer, got `{v}`"
                ))
            })?;
        }
        if let Some(dir) = file.and_then(Path::parent) {
            cfg.anchor_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative table paths are taken from the config file's directory.
    fn anchor_paths(&mut self, dir: &Path) {
        for p in [&mut self.protocol.table, &mut self.bath.table]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let p = &self.protocol;
        if !(p.tau > 0.0) {
            return bad(format!("protocol.tau must be positive, got {}", p.tau));
        }
        if p.family == FamilyKind::ControlPoints && p.control_times.len() != p.control_values.len()
        {
            return bad(
                "protocol.control_times and protocol.control_values differ in length".into(),
            );
        }
        if p.family == FamilyKind::Tabulated && p.table.is_none() {
            return bad("the tabulated family needs protocol.table".into());
        }
        if self.bath.kind == BathKind::Tabulated && self.bath.table.is_none() {
            return bad("the tabulated bath needs bath.table".into());
        }
        if !(self.bath.beta > 0.0) {
            return bad(format!(
                "bath.beta must be positive, got {}",
                self.bath.beta
            ));
        }
        if self.bath.intervals < 2 {
            return bad("bath.intervals must be at least 2".into());
        }
        let sweeping = matches!(
            self.experiment,
            ExperimentKind::BoundSweep | ExperimentKind::DynamicsSweep
        );
        if sweeping {
            if self.sweep.deltas.is_empty() && self.sweep.delta_points == 0 {
                return bad("sweep.delta_points must be positive".into());
            }
            if self.sweep.steepness.is_empty() && p.family == FamilyKind::Sinh {
                return bad("sweep.steepness must list at least one value".into());
            }
        }
        if self.experiment == ExperimentKind::StaVerify
            && self.sta_verify.beta < 10.0
            && !self.sta_verify.allow_low_beta
        {
            return bad(format!(
                "sta_verify.beta = {} is below 10; set sta_verify.allow_low_beta = true to run anyway",
                self.sta_verify.beta
            ));
        }
        if self.experiment == ExperimentKind::Optimize {
            let o = &self.optimize;
            if o.bounds.iter().any(|b| !(b[0] <= b[1])) {
                return bad("optimize.bounds entries must be ordered [lower, upper]".into());
            }
            if o.family == OptimizeFamily::ControlPoints && o.control_times.len() != o.bounds.len()
            {
                return bad("optimize.control_times needs one entry per bound".into());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config as TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn stem(&self) -> String {
        self.output
            .name
            .clone()
            .unwrap_or_else(|| self.experiment.name().to_string())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.into()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    // Parse as a TOML value; anything that is not one is taken as a string.
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for seg in parents {
        node = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(spec.into()))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_setup() {
        let c = ExperimentConfig::defaults(ExperimentKind::DynamicsSweep);
        assert_eq!(c.coupling.phi, FRAC_PI_4);
        assert_eq!(
            (c.bath.beta, c.bath.gamma, c.bath.omega0, c.bath.lambda),
            (1.0, 0.1, 1.0, 0.1)
        );
        assert_eq!(c.protocol.tau, 2.0);
        assert_eq!(c.sweep.steepness, vec![1.0, 3.0, 10.0]);
        let d = c.sweep.delta_values();
        assert_eq!(d.len(), 20);
        assert!((d[0] - 0.1).abs() < 1e-15 && (d[19] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn overrides_parse_typed_values() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "bath.lambda=0.05").unwrap();
        apply_override(&mut t, "sweep.steepness=[2, 4]").unwrap();
        apply_override(&mut t, "output.dir=results").unwrap();
        assert_eq!(t["bath"]["lambda"].as_float(), Some(0.05));
        assert_eq!(t["sweep"]["steepness"].as_array().unwrap().len(), 2);
        assert_eq!(t["output"]["dir"].as_str(), Some("results"));
        assert!(apply_override(&mut t, "novalue").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::defaults(ExperimentKind::Optimize);
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }
}
