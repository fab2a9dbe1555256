//! Experiment configuration, read from TOML.
//!
//! Every block is validated up front and errors name the offending field
//! (`mixture.means[2]`, `grid.count`, ...). After [`ExperimentConfig::resolve`]
//! all defaults are explicit, so serializing the config records exactly what
//! was run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speciation_core::mixture::{HierarchyLevel, DEFAULT_CLASS_CAP};
use speciation_core::{GuidanceConfig, MixtureSpec, NoiseSchedule, Partition, ScheduleKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule: ScheduleBlock,
    pub mixture: MixtureBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub estimator: EstimatorBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<GuidanceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub validate: ValidateBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Vp,
    Edm,
}

impl From<Kind> for ScheduleKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Vp => ScheduleKind::Vp,
            Kind::Edm => ScheduleKind::Edm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    pub kind: Kind,
    /// Horizon; `max(10, 3 t_s)` (VP) or `max(80, 3 t_s)` (EDM) when absent.
    #[serde(default)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MixtureBlock {
    /// Two classes at `±sqrt(q d) e_1`.
    Symmetric {
        d: usize,
        #[serde(default = "one")]
        q: f64,
        #[serde(default = "one")]
        sigma0: f64,
    },
    Explicit {
        means: Vec<Vec<f64>>,
        #[serde(default = "one")]
        sigma0: f64,
        #[serde(default)]
        log_priors: Option<Vec<f64>>,
    },
    Hierarchical {
        d: usize,
        levels: Vec<LevelBlock>,
        #[serde(default = "one")]
        sigma0: f64,
        #[serde(default = "default_cap")]
        cap: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBlock {
    pub offset: f64,
    pub branching: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    T,
    /// Rescaled time `u = t / t_s`.
    U,
}

/// Either explicit `points` or `count` points evenly spaced on
/// `[start, stop]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorBlock {
    pub n_samples: usize,
    pub seed: u64,
    pub steps: usize,
    pub n_trajectories: usize,
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            seed: 0,
            steps: 256,
            n_trajectories: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionBlock {
    pub set_a: Vec<usize>,
    pub set_b: Vec<usize>,
    #[serde(default = "half")]
    pub prior_a: f64,
    #[serde(default)]
    pub complement_proxy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceBlock {
    pub omega: f64,
    #[serde(default)]
    pub sigma_low: f64,
    /// Unbounded when absent.
    #[serde(default)]
    pub sigma_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub d_list: Vec<usize>,
    #[serde(default = "window_lo")]
    pub lo: f64,
    #[serde(default = "window_hi")]
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateBlock {
    /// Multiplies every tolerance of the validation suite.
    pub tolerance_scale: f64,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        Self {
            tolerance_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_cap() -> usize {
    DEFAULT_CLASS_CAP
}

fn window_lo() -> f64 {
    speciation_core::entropy::WINDOW_LO
}

fn window_hi() -> f64 {
    speciation_core::entropy::WINDOW_HI
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(
            path,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(
            path,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let path = match e.span() {
                Some(span) => field_at(text, span.start),
                None => "config".into(),
            };
            ConfigError::new(path, msg)
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Dimension of the configured mixture.
    pub fn dim(&self) -> usize {
        match &self.mixture {
            MixtureBlock::Symmetric { d, .. } | MixtureBlock::Hierarchical { d, .. } => *d,
            MixtureBlock::Explicit { means, .. } => means.first().map_or(0, Vec::len),
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.schedule.kind.into()
    }

    /// Internal consistency of every block.
    pub fn check(&self) -> Result<()> {
        if let Some(t) = self.schedule.t_max {
            positive("schedule.t_max", t)?;
        }
        let spec = self.mixture_spec(None)?;
        if let Some(g) = &self.grid {
            g.check(self.kind(), spec.dim())?;
        }
        let e = &self.estimator;
        if e.n_samples < 2 {
            return Err(ConfigError::new(
                "estimator.n_samples",
                "must be at least 2",
            ));
        }
        if e.steps < 2 {
            return Err(ConfigError::new("estimator.steps", "must be at least 2"));
        }
        if e.n_trajectories < 2 {
            return Err(ConfigError::new(
                "estimator.n_trajectories",
                "must be at least 2",
            ));
        }
        if self.partition.is_some() {
            self.partition_for(&spec)?;
        }
        if self.guidance.is_some() {
            self.guidance_config()?;
        }
        if let Some(s) = &self.sweep {
            if s.d_list.is_empty() {
                return Err(ConfigError::new("sweep.d_list", "must not be empty"));
            }
            if let Some(i) = s.d_list.iter().position(|&d| d < 2) {
                return Err(ConfigError::new(
                    format!("sweep.d_list[{i}]"),
                    "dimension must be at least 2",
                ));
            }
            if matches!(self.mixture, MixtureBlock::Explicit { .. }) {
                return Err(ConfigError::new(
                    "mixture.kind",
                    "a dimension sweep needs a symmetric or hierarchical mixture",
                ));
            }
            if !(s.lo < s.hi) || !(s.lo > 0.0) {
                return Err(ConfigError::new("sweep.lo", "window needs 0 < lo < hi"));
            }
            for &d in &s.d_list {
                self.mixture_spec(Some(d))?;
            }
        }
        non_negative("validate.tolerance_scale", self.validate.tolerance_scale)?;
        Ok(())
    }

    /// The mixture, with `d` replaced by `d_override` for sweeps.
    pub fn mixture_spec(&self, d_override: Option<usize>) -> Result<MixtureSpec> {
        let err = |e: speciation_core::Error| ConfigError::new("mixture", e.to_string());
        match &self.mixture {
            MixtureBlock::Symmetric { d, q, sigma0 } => {
                let d = d_override.unwrap_or(*d);
                if d == 0 {
                    return Err(ConfigError::new("mixture.d", "must be at least 1"));
                }
                non_negative("mixture.q", *q)?;
                non_negative("mixture.sigma0", *sigma0)?;
                MixtureSpec::symmetric_two_class(d, *q, *sigma0).map_err(err)
            }
            MixtureBlock::Explicit {
                means,
                sigma0,
                log_priors,
            } => {
                if means.is_empty() {
                    return Err(ConfigError::new(
                        "mixture.means",
                        "needs at least one class",
                    ));
                }
                let d = means[0].len();
                if d == 0 {
                    return Err(ConfigError::new(
                        "mixture.means[0]",
                        "mean vectors must not be empty",
                    ));
                }
                for (i, m) in means.iter().enumerate() {
                    if m.len() != d {
                        return Err(ConfigError::new(
                            format!("mixture.means[{i}]"),
                            format!("expected {d} coordinates, got {}", m.len()),
                        ));
                    }
                    if let Some(j) = m.iter().position(|v| !v.is_finite()) {
                        return Err(ConfigError::new(
                            format!("mixture.means[{i}][{j}]"),
                            "must be finite",
                        ));
                    }
                }
                non_negative("mixture.sigma0", *sigma0)?;
                if let Some(lp) = log_priors {
                    if lp.len() != means.len() {
                        return Err(ConfigError::new(
                            "mixture.log_priors",
                            format!("expected {} entries, got {}", means.len(), lp.len()),
                        ));
                    }
                }
                MixtureSpec::new(means.clone(), *sigma0, log_priors.clone()).map_err(err)
            }
            MixtureBlock::Hierarchical {
                d,
                levels,
                sigma0,
                cap,
            } => {
                let d = d_override.unwrap_or(*d);
                if levels.is_empty() {
                    return Err(ConfigError::new(
                        "mixture.levels",
                        "needs at least one level",
                    ));
                }
                for (i, l) in levels.iter().enumerate() {
                    non_negative(&format!("mixture.levels[{i}].offset"), l.offset)?;
                    if l.branching < 2 {
                        return Err(ConfigError::new(
                            format!("mixture.levels[{i}].branching"),
                            "must be at least 2",
                        ));
                    }
                }
                non_negative("mixture.sigma0", *sigma0)?;
                let lv: Vec<HierarchyLevel> = levels
                    .iter()
                    .map(|l| HierarchyLevel {
                        offset: l.offset,
                        branching: l.branching,
                    })
                    .collect();
                MixtureSpec::hierarchical(&lv, d, *sigma0, *cap).map_err(err)
            }
        }
    }

    /// Schedule for dimension `d`, using the default horizon when `t_max`
    /// is unset.
    pub fn schedule_for(&self, d: usize) -> Result<NoiseSchedule> {
        let r = match self.schedule.t_max {
            Some(t) => NoiseSchedule::new(self.kind(), t),
            None => NoiseSchedule::with_default_horizon(self.kind(), d),
        };
        r.map_err(|e| ConfigError::new("schedule", e.to_string()))
    }

    /// Configured partition, or `{0}` vs `{1}` for two classes and `{0}`
    /// vs the rest otherwise.
    pub fn partition_for(&self, spec: &MixtureSpec) -> Result<Partition> {
        let p = match &self.partition {
            Some(p) => Partition::new(
                p.set_a.clone(),
                p.set_b.clone(),
                p.prior_a,
                p.complement_proxy,
            )
            .map_err(|e| ConfigError::new("partition", e.to_string()))?,
            None if spec.n_classes() == 2 => Partition::pair(0, 1).expect("valid pair"),
            None if spec.n_classes() > 2 => {
                Partition::one_vs_rest(0, spec.n_classes()).expect("valid split")
            }
            None => {
                return Err(ConfigError::new(
                    "partition",
                    "a single-class mixture cannot be partitioned",
                ))
            }
        };
        for (name, set) in [("set_a", p.set_a()), ("set_b", p.set_b())] {
            if let Some(i) = set.iter().position(|&k| k >= spec.n_classes()) {
                return Err(ConfigError::new(
                    format!("partition.{name}[{i}]"),
                    format!(
                        "class {} out of range for {} classes",
                        set[i],
                        spec.n_classes()
                    ),
                ));
            }
        }
        Ok(p)
    }

    pub fn guidance_config(&self) -> Result<Option<GuidanceConfig>> {
        let Some(g) = &self.guidance else {
            return Ok(None);
        };
        if !g.omega.is_finite() {
            return Err(ConfigError::new("guidance.omega", "must be finite"));
        }
        non_negative("guidance.sigma_low", g.sigma_low)?;
        let high = g.sigma_high.unwrap_or(f64::INFINITY);
        if high.is_nan() || high < g.sigma_low {
            return Err(ConfigError::new(
                "guidance.sigma_high",
                "must be at least sigma_low",
            ));
        }
        GuidanceConfig::new(g.omega, g.sigma_low, high)
            .map(Some)
            .map_err(|e| ConfigError::new("guidance", e.to_string()))
    }

    pub fn require_grid(&self) -> Result<&GridBlock> {
        self.grid
            .as_ref()
            .ok_or_else(|| ConfigError::new("grid", "this command needs a [grid] block"))
    }

    /// Time points of the grid for dimension `d`.
    pub fn times_for(&self, d: usize) -> Result<Vec<f64>> {
        self.require_grid()?.times(self.kind(), d)
    }

    /// Fills in defaults that depend on other blocks, so the serialized
    /// config is complete. Sweeps keep `t_max` unset because the horizon
    /// then depends on `d`.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Result<Self> {
        if let Some(seed) = seed_override {
            self.estimator.seed = seed;
        }
        if self.schedule.t_max.is_none() && self.sweep.is_none() {
            self.schedule.t_max = Some(self.schedule_for(self.dim())?.t_max());
        }
        self.check()?;
        Ok(self)
    }
}

impl GridBlock {
    fn check(&self, kind: ScheduleKind, d: usize) -> Result<()> {
        self.times(kind, d).map(|_| ())
    }

    /// Raw points on the configured axis.
    pub fn points(&self) -> Result<Vec<f64>> {
        if let Some(p) = &self.points {
            if self.start.is_some() || self.stop.is_some() || self.count.is_some() {
                return Err(ConfigError::new(
                    "grid.points",
                    "give either points or start/stop/count, not both",
                ));
            }
            if p.is_empty() {
                return Err(ConfigError::new("grid.points", "must not be empty"));
            }
            if let Some(i) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(ConfigError::new(
                    format!("grid.points[{i}]"),
                    "must be finite and non-negative",
                ));
            }
            if let Some(i) = p.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(ConfigError::new(
                    format!("grid.points[{}]", i + 1),
                    "points must be strictly increasing",
                ));
            }
            return Ok(p.clone());
        }
        let (Some(start), Some(stop), Some(count)) = (self.start, self.stop, self.count) else {
            return Err(ConfigError::new(
                "grid",
                "needs points, or start, stop and count",
            ));
        };
        non_negative("grid.start", start)?;
        if count == 0 {
            return Err(ConfigError::new("grid.count", "must be at least 1"));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        if !(stop.is_finite() && stop > start) {
            return Err(ConfigError::new("grid.stop", "must exceed grid.start"));
        }
        let step = (stop - start) / (count - 1) as f64;
        Ok((0..count)
            .map(|i| {
                if i == count - 1 {
                    stop
                } else {
                    start + step * i as f64
                }
            })
            .collect())
    }

    pub fn times(&self, kind: ScheduleKind, d: usize) -> Result<Vec<f64>> {
        let points = self.points()?;
        match self.axis {
            Axis::T => Ok(points),
            Axis::U => {
                let scale = speciation_core::schedule::speciation_time(kind, d)
                    .map_err(|e| ConfigError::new("grid.axis", e.to_string()))?;
                if scale.degenerate {
                    return Err(ConfigError::new(
                        "grid.axis",
                        format!("u-axis needs a speciation scale, which is zero at d = {d}"),
                    ));
                }
                Ok(points.iter().map(|u| u * scale.t_s).collect())
            }
        }
    }
}

/// Dotted path of the TOML key whose value starts near byte `offset`.
fn field_at(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with('[') && !trimmed.starts_with("[[") {
            table = trimmed
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            if !trimmed.starts_with('#') {
                key = k.trim().to_string();
            }
        }
        pos += line.len();
        if pos > offset {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "config".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}
