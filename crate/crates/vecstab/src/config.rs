//! Run configuration: one JSON file, command-line flags on top, and
//! `VECSTAB_*` environment overrides for tolerances only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use vecstab_core::certify::CertifyOptions;
use vecstab_core::lyap::LyapOptions;
use vecstab_core::model::{default_topology, Topology};
use vecstab_core::rng::Stream;
use vecstab_core::sdp::SolverOptions;

use crate::formats::read_json;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    SingleTraditional,
    SingleDirect,
    MultipleSequential,
    MultipleParallel,
}

impl RunMode {
    pub const ALL: [RunMode; 4] =
        [RunMode::SingleTraditional, RunMode::SingleDirect, RunMode::MultipleSequential, RunMode::MultipleParallel];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::SingleTraditional => "single-traditional",
            RunMode::SingleDirect => "single-direct",
            RunMode::MultipleSequential => "multiple-sequential",
            RunMode::MultipleParallel => "multiple-parallel",
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `quad` (synthesized from the linearization) or `file:PATH` (an LF file).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LfSource {
    Quadratic,
    File(PathBuf),
}

impl FromStr for LfSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quad" => Ok(LfSource::Quadratic),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(LfSource::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!("LF source `{s}` is neither `quad` nor `file:PATH`"))),
            },
        }
    }
}

impl fmt::Display for LfSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LfSource::Quadratic => f.write_str("quad"),
            LfSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for LfSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LfSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `"default"` or an explicit map `id -> [id, neighbors...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Named(String),
    /// Keys are subsystem ids (JSON object keys are strings).
    Explicit(BTreeMap<String, Vec<usize>>),
}

impl TopologySpec {
    pub fn resolve(&self) -> Result<Topology> {
        match self {
            TopologySpec::Named(n) if n == "default" => Ok(default_topology()),
            TopologySpec::Named(n) => Err(Error::Config(format!("unknown topology `{n}`"))),
            TopologySpec::Explicit(t) => t
                .iter()
                .map(|(k, n)| {
                    let id = k.parse().map_err(|_| Error::Config(format!("topology key `{k}` is not a subsystem id")))?;
                    Ok((id, n.clone()))
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    /// Initial levels `v_i^0 = V_i(x_i(0))` in subsystem order.
    Explicit { v0: Vec<f64> },
    /// `v_i^0` uniform on `[0, max_level)`, one stream per subsystem.
    Sampled { seed: u64, max_level: f64 },
}

impl Disturbance {
    pub fn levels(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let v0 = match self {
            Disturbance::Explicit { v0 } => v0.clone(),
            Disturbance::Sampled { seed, max_level } => ids
                .iter()
                .map(|&i| Stream::new(*seed, (0xd15 << 32) | i as u64).uniform(0.0, *max_level))
                .collect(),
        };
        if v0.len() != ids.len() {
            return Err(Error::Config(format!("{} initial levels for {} subsystems", v0.len(), ids.len())));
        }
        if let Some((id, v)) = ids.iter().zip(&v0).find(|(_, v)| !(0.0..1.0).contains(*v)) {
            return Err(Error::Config(format!("initial level {v} of subsystem {id} outside [0, 1)")));
        }
        Ok(v0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdpTolerances {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub psd_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpTolerances {
    fn default() -> Self {
        let d = SolverOptions::default();
        SdpTolerances { gap_tol: d.gap_tol, feas_tol: d.feas_tol, psd_tol: d.psd_tol, max_iter: d.max_iter }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Phase-1 increment.
    pub delta: f64,
    /// Bisection tolerance of every level search.
    pub tol: f64,
    /// Margin on strict inequalities.
    pub margin: f64,
    pub max_rounds: usize,
    /// Samples per certificate in the audit (0 disables sampling).
    pub audit_samples: usize,
    pub sdp: SdpTolerances,
}

impl Default for Tolerances {
    fn default() -> Self {
        let c = CertifyOptions::default();
        Tolerances {
            delta: c.delta,
            tol: c.tol,
            margin: c.margin,
            max_rounds: c.max_rounds,
            audit_samples: 10_000,
            sdp: SdpTolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub trajectories: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Explicit initial states (full network state); overrides sampling.
    pub starts: Option<Vec<Vec<f64>>>,
    /// How many trajectories to write to `trajectories/`.
    pub write_trajectories: usize,
    /// Row thinning of the written trajectories.
    pub write_every: usize,
    pub invariance_tol: f64,
    pub bound_tol: f64,
    pub final_level: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            trajectories: 100,
            t_end: 50.0,
            dt: 1e-3,
            seed: 7,
            starts: None,
            write_trajectories: 4,
            write_every: 100,
            invariance_tol: 1e-6,
            bound_tol: 1e-4,
            final_level: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub topology: TopologySpec,
    pub lf: LfSource,
    pub mode: RunMode,
    pub disturbance: Disturbance,
    pub tolerances: Tolerances,
    pub out: PathBuf,
    /// Network file; `<out>/network.json` when absent.
    pub network: Option<PathBuf>,
    /// Concurrent solves per round.
    pub jobs: usize,
    pub gamma_grid: Vec<f64>,
    pub validation: ValidationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            topology: TopologySpec::Named("default".into()),
            lf: LfSource::Quadratic,
            mode: RunMode::MultipleSequential,
            disturbance: Disturbance::Sampled { seed: 1, max_level: 0.1 },
            tolerances: Tolerances::default(),
            out: PathBuf::from("out"),
            network: None,
            jobs: 1,
            gamma_grid: (1..=9).map(|k| k as f64 / 10.0).collect(),
            validation: ValidationConfig::default(),
        }
    }
}

/// Tolerance overrides read from the environment.
pub const ENV_OVERRIDES: [&str; 9] = [
    "VECSTAB_DELTA",
    "VECSTAB_TOL",
    "VECSTAB_MARGIN",
    "VECSTAB_MAX_ROUNDS",
    "VECSTAB_AUDIT_SAMPLES",
    "VECSTAB_SDP_GAP_TOL",
    "VECSTAB_SDP_FEAS_TOL",
    "VECSTAB_SDP_PSD_TOL",
    "VECSTAB_SDP_MAX_ITER",
];

fn parse_env<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key}={value} is not a valid value")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Applies `VECSTAB_*` tolerance overrides from `lookup` (normally
    /// `std::env::var`). Unknown `VECSTAB_*` names are ignored.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        let t = &mut self.tolerances;
        for key in ENV_OVERRIDES {
            let Some(v) = lookup(key) else { continue };
            match key {
                "VECSTAB_DELTA" => t.delta = parse_env(key, &v)?,
                "VECSTAB_TOL" => t.tol = parse_env(key, &v)?,
                "VECSTAB_MARGIN" => t.margin = parse_env(key, &v)?,
                "VECSTAB_MAX_ROUNDS" => t.max_rounds = parse_env(key, &v)?,
                "VECSTAB_AUDIT_SAMPLES" => t.audit_samples = parse_env(key, &v)?,
                "VECSTAB_SDP_GAP_TOL" => t.sdp.gap_tol = parse_env(key, &v)?,
                "VECSTAB_SDP_FEAS_TOL" => t.sdp.feas_tol = parse_env(key, &v)?,
                "VECSTAB_SDP_PSD_TOL" => t.sdp.psd_tol = parse_env(key, &v)?,
                "VECSTAB_SDP_MAX_ITER" => t.sdp.max_iter = parse_env(key, &v)?,
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        let positive = [
            ("delta", t.delta),
            ("tol", t.tol),
            ("margin", t.margin),
            ("sdp.gap_tol", t.sdp.gap_tol),
            ("sdp.feas_tol", t.sdp.feas_tol),
            ("sdp.psd_tol", t.sdp.psd_tol),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("tolerance {name} = {v} must be positive")));
        }
        if t.max_rounds == 0 || t.sdp.max_iter == 0 {
            return Err(Error::Config("max_rounds and sdp.max_iter must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be positive".into()));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::Config(format!("grid level {g} outside (0, 1)")));
        }
        if let Disturbance::Sampled { max_level, .. } = self.disturbance {
            if !(max_level > 0.0 && max_level <= 1.0) {
                return Err(Error::Config(format!("sampled max_level {max_level} outside (0, 1]")));
            }
        }
        if let Disturbance::Explicit { v0 } = &self.disturbance {
            if let Some(v) = v0.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return Err(Error::Config(format!("initial level {v} outside [0, 1)")));
            }
        }
        let v = &self.validation;
        if !(v.dt > 0.0 && v.t_end >= v.dt) {
            return Err(Error::Config(format!("validation step {} / horizon {} invalid", v.dt, v.t_end)));
        }
        self.topology.resolve()?;
        Ok(())
    }

    pub fn network_path(&self) -> PathBuf {
        self.network.clone().unwrap_or_else(|| self.out.join("network.json"))
    }

    pub fn sdp_options(&self) -> SolverOptions {
        let s = &self.tolerances.sdp;
        SolverOptions { gap_tol: s.gap_tol, feas_tol: s.feas_tol, psd_tol: s.psd_tol, max_iter: s.max_iter }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let t = &self.tolerances;
        CertifyOptions {
            sdp: self.sdp_options(),
            margin: t.margin,
            delta: t.delta,
            tol: t.tol,
            max_rounds: t.max_rounds,
            audit_samples: t.audit_samples,
            audit_seed: self.seed,
            ..CertifyOptions::default()
        }
    }

    pub fn lyap_options(&self) -> LyapOptions {
        LyapOptions { sdp: self.sdp_options(), tol: self.tolerances.tol, margin: self.tolerances.margin, ..LyapOptions::default() }
    }
}
