//! Versioned TOML scenario configuration.
//!
//! Loading goes text → `toml::Table` → `--set` overrides → typed [`Config`],
//! so every error carries the dotted path of the offending key.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_core::ConstMetric;

pub const CONFIG_VERSION: u32 = 1;

/// Wrinkle families need this many grid intervals per period in `x₀`.
pub const MIN_INTERVALS_PER_PERIOD: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    pub domain: DomainConfig,
    #[serde(default)]
    pub target: TargetConfig,
    pub family: FamilyConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigidity: Option<RigidityConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_p() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMetric {
    Flat,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    #[serde(default = "one")]
    pub side: f64,
    pub nodes: usize,
    /// Lower corner; zeros when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
    #[serde(default = "flat_source")]
    pub metric: SourceMetric,
    /// Rows of `g` for `metric = "constant"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

fn flat_source() -> SourceMetric {
    SourceMetric::Flat
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    #[default]
    Flat,
    Constant,
    /// Round sphere in stereographic coordinates.
    Sphere,
    /// Round 2-sphere in polar coordinates; needs `domain.dim = 1`.
    SpherePolar,
    Warped,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub metric: TargetMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `u(x) = (x, 0)`.
    Flat,
    /// `u(x) = (x, A Π sin(π f ξᵢ))` with `ξ = (x − origin)/side`.
    Graph,
    /// Circle of radius ρ in the `(y₀, y₁)` plane times the remaining axes.
    Cylinder,
    /// Stereographic parametrization of a sphere cap of radius ρ about the
    /// domain center.
    SphereCap,
    /// `u_k(x) = (x, (A/k²) sin(2π f k s))`, `s = x₀ − origin₀`; bending stays
    /// bounded.
    Wrinkle,
    /// `u_k(x) = (x, 0) + (A/k) w(x)` for a fixed smooth `w`.
    Perturbation,
    /// Isometric wrinkle: a unit-speed profile with tangent angle
    /// `A sin(2π f k s)`; height `O(1/k)`, bending growing like `k^p`.
    AntiWrinkle,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Flat => "flat",
            FamilyKind::Graph => "graph",
            FamilyKind::Cylinder => "cylinder",
            FamilyKind::SphereCap => "sphere_cap",
            FamilyKind::Wrinkle => "wrinkle",
            FamilyKind::Perturbation => "perturbation",
            FamilyKind::AntiWrinkle => "anti_wrinkle",
        }
    }

    /// Families whose members depend on `k`.
    pub fn is_sequence(self) -> bool {
        matches!(
            self,
            FamilyKind::Wrinkle | FamilyKind::Perturbation | FamilyKind::AntiWrinkle
        )
    }

    fn is_wrinkle(self) -> bool {
        matches!(self, FamilyKind::Wrinkle | FamilyKind::AntiWrinkle)
    }

    pub fn default_amplitude(self) -> Option<f64> {
        match self {
            FamilyKind::Graph => Some(0.1),
            FamilyKind::Wrinkle => Some(0.05),
            FamilyKind::Perturbation => Some(0.1),
            FamilyKind::AntiWrinkle => Some(0.6),
            _ => None,
        }
    }

    pub fn default_frequency(self) -> Option<f64> {
        match self {
            FamilyKind::Graph | FamilyKind::Wrinkle | FamilyKind::AntiWrinkle => Some(1.0),
            _ => None,
        }
    }

    pub fn default_radius(self) -> Option<f64> {
        match self {
            FamilyKind::Cylinder | FamilyKind::SphereCap => Some(1.0),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    /// Sequence index used by `run` and `check`.
    #[serde(default = "one_u32")]
    pub k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Rigid motion `y ↦ Ry + t` applied after the family map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid: Option<RigidConfig>,
}

fn one_u32() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidConfig {
    /// Coordinate plane `(i, j)` of the rotation.
    #[serde(default = "first_plane")]
    pub plane: [usize; 2],
    #[serde(default)]
    pub angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<Vec<f64>>,
}

fn first_plane() -> [usize; 2] {
    [0, 1]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Shape operator of the family's limit surface (the member itself for
    /// families that do not depend on `k`).
    #[default]
    Family,
    Zero,
    /// `b = c·g`, so `S = c·I`.
    Scalar,
    /// `b = diag(values)`, so `S = g⁻¹ diag(values)`.
    Diag,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default)]
    pub kind: ReferenceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k_min: u32,
    pub k_max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    /// Subdivisions per side; must divide `domain.nodes − 1`.
    pub m: usize,
    /// Ball radius; three times the image radius about `q0` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Ball center; the image of the central node when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityConfig {
    /// Cutoff radius `r` of the extended normal-coordinate chart centered at
    /// the image of the central node.
    pub chart_radius: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn default_dir() -> String {
    "out".into()
}

/// A `key=value` override; the value is read as a TOML literal and falls
/// back to a bare string.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
}

impl Override {
    pub fn new(key: impl Into<String>, value: toml::Value) -> Self {
        Self {
            key: key.into(),
            value,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (key, raw) = text
            .split_once('=')
            .ok_or_else(|| Error::config(text, "expected key=value"))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(Error::config(key, "malformed key"));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(Self::new(key, value))
    }

    fn apply(&self, table: &mut toml::Table) -> Result<()> {
        let mut parts: Vec<&str> = self.key.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut node = table;
        for (depth, part) in parts.iter().enumerate() {
            let entry = node
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry.as_table_mut().ok_or_else(|| {
                Error::config(parts[..=depth].join("."), "is not a table")
            })?;
        }
        node.insert(leaf.to_string(), self.value.clone());
        Ok(())
    }
}

impl Config {
    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text, overrides)
    }

    /// Parses, applies overrides in order, fills defaults and validates.
    pub fn parse(text: &str, overrides: &[Override]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
        for o in overrides {
            o.apply(&mut table)?;
        }
        let config: Config = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| {
                let key = e.path().to_string();
                // the TOML error repeats the key on its own line
                let message = e.inner().to_string();
                let message = message.lines().next().unwrap_or_default().to_string();
                Error::config(if key == "." { "<document>".into() } else { key }, message)
            })?;
        let config = config.resolved();
        config.validate()?;
        Ok(config)
    }

    /// Fills defaults that do not depend on the constructed objects.
    pub fn resolved(mut self) -> Self {
        if self.domain.origin.is_none() {
            self.domain.origin = Some(vec![0.0; self.domain.dim]);
        }
        let kind = self.family.kind;
        self.family.amplitude = self.family.amplitude.or(kind.default_amplitude());
        self.family.frequency = self.family.frequency.or(kind.default_frequency());
        self.family.radius = self.family.radius.or(kind.default_radius());
        if let Some(rigid) = &mut self.family.rigid {
            if rigid.translation.is_none() {
                rigid.translation = Some(vec![0.0; self.domain.dim + 1]);
            }
        }
        if matches!(self.target.metric, TargetMetric::Sphere | TargetMetric::SpherePolar) {
            self.target.radius = self.target.radius.or(Some(1.0));
        }
        if self.target.metric == TargetMetric::Warped {
            self.target.rate = self.target.rate.or(Some(1.0));
        }
        self
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file name"));
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(Error::config("p", format!("exponent must be >= 1, got {}", self.p)));
        }
        let d = self.domain.dim;
        self.validate_domain()?;
        self.validate_target()?;
        self.validate_family()?;

        let r = &self.reference;
        match r.kind {
            ReferenceKind::Scalar if r.value.is_none_or(|v| !v.is_finite()) => {
                return Err(Error::config("reference.value", "scalar reference needs a finite value"))
            }
            ReferenceKind::Diag => match &r.values {
                Some(v) if v.len() == d && v.iter().all(|x| x.is_finite()) => {}
                _ => {
                    return Err(Error::config(
                        "reference.values",
                        format!("diag reference needs {d} finite values"),
                    ))
                }
            },
            _ => {}
        }

        if let Some(s) = &self.sweep {
            if s.k_min == 0 || s.k_min > s.k_max {
                return Err(Error::config(
                    "sweep.k_min",
                    format!("need 1 <= k_min <= k_max, got {}..{}", s.k_min, s.k_max),
                ));
            }
            // the Cauchy increment of the last point uses k_max + 1
            self.check_resolution("sweep.k_max", s.k_max + 1)?;
        }
        if let Some(part) = &self.partition {
            let intervals = self.domain.nodes - 1;
            if part.m == 0 || !intervals.is_multiple_of(part.m) {
                return Err(Error::config(
                    "partition.m",
                    format!("{} does not divide the {intervals} grid intervals per side", part.m),
                ));
            }
            if !(part.epsilon > 0.0 && part.epsilon < 1.0) {
                return Err(Error::config("partition.epsilon", "must lie in (0, 1)"));
            }
            if part.tau.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
                return Err(Error::config("partition.tau", "must be positive"));
            }
            if part.q0.as_ref().is_some_and(|q| q.len() != d + 1) {
                return Err(Error::config("partition.q0", format!("needs {} coordinates", d + 1)));
            }
        }
        if let Some(rig) = &self.rigidity {
            if !(rig.chart_radius.is_finite() && rig.chart_radius > 0.0) {
                return Err(Error::config("rigidity.chart_radius", "must be positive"));
            }
            if !(0.0..1.0).contains(&rig.delta) {
                return Err(Error::config("rigidity.delta", "must lie in [0, 1)"));
            }
            if !(rig.epsilon.is_finite() && rig.epsilon >= 0.0) {
                return Err(Error::config("rigidity.epsilon", "must be non-negative"));
            }
        }
        if self.output.dir.is_empty() {
            return Err(Error::config("output.dir", "must not be empty"));
        }
        Ok(())
    }

    fn validate_domain(&self) -> Result<()> {
        let dom = &self.domain;
        if !(1..=3).contains(&dom.dim) {
            return Err(Error::config("domain.dim", "supported dimensions are 1, 2 and 3"));
        }
        if dom.nodes < 3 {
            return Err(Error::config("domain.nodes", "need at least 3 nodes per side"));
        }
        if !(dom.side.is_finite() && dom.side > 0.0) {
            return Err(Error::config("domain.side", "must be positive"));
        }
        if let Some(o) = &dom.origin {
            if o.len() != dom.dim || o.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("domain.origin", format!("needs {} finite coordinates", dom.dim)));
            }
        }
        match (dom.metric, &dom.entries) {
            (SourceMetric::Constant, None) => {
                Err(Error::config("domain.entries", "constant metric needs entries"))
            }
            (SourceMetric::Constant, Some(rows)) => {
                const_metric("domain.entries", rows, dom.dim).map(|_| ())
            }
            (SourceMetric::Flat, Some(_)) => {
                Err(Error::config("domain.entries", "only used with metric = \"constant\""))
            }
            (SourceMetric::Flat, None) => Ok(()),
        }
    }

    fn validate_target(&self) -> Result<()> {
        let t = &self.target;
        let n = self.domain.dim + 1;
        let positive = |key: &str, v: Option<f64>| match v {
            Some(v) if v.is_finite() && v > 0.0 => Ok(()),
            _ => Err(Error::config(key, "must be positive")),
        };
        match t.metric {
            TargetMetric::Flat => Ok(()),
            TargetMetric::Constant => match &t.entries {
                Some(rows) => const_metric("target.entries", rows, n).map(|_| ()),
                None => Err(Error::config("target.entries", "constant metric needs entries")),
            },
            TargetMetric::Sphere => positive("target.radius", t.radius),
            TargetMetric::SpherePolar => {
                if n != 2 {
                    return Err(Error::config("target.metric", "sphere_polar needs domain.dim = 1"));
                }
                positive("target.radius", t.radius)
            }
            TargetMetric::Warped => match t.rate {
                Some(r) if r.is_finite() => Ok(()),
                _ => Err(Error::config("target.rate", "must be finite")),
            },
        }
    }

    fn validate_family(&self) -> Result<()> {
        let f = &self.family;
        let d = self.domain.dim;
        if f.k == 0 {
            return Err(Error::config("family.k", "sequence index starts at 1"));
        }
        if f.amplitude.is_some_and(|a| !a.is_finite()) {
            return Err(Error::config("family.amplitude", "must be finite"));
        }
        if f.frequency.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::config("family.frequency", "must be positive"));
        }
        if f.radius.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::config("family.radius", "must be positive"));
        }
        if let Some(rigid) = &f.rigid {
            let [i, j] = rigid.plane;
            if i == j || i > d || j > d {
                return Err(Error::config(
                    "family.rigid.plane",
                    format!("needs two distinct axes below {}", d + 1),
                ));
            }
            if !rigid.angle.is_finite() {
                return Err(Error::config("family.rigid.angle", "must be finite"));
            }
            if rigid
                .translation
                .as_ref()
                .is_some_and(|t| t.len() != d + 1 || t.iter().any(|x| !x.is_finite()))
            {
                return Err(Error::config(
                    "family.rigid.translation",
                    format!("needs {} finite coordinates", d + 1),
                ));
            }
        }
        self.check_resolution("family.k", f.k)
    }

    /// Wrinkle periods must span enough grid intervals for the difference
    /// stencils to resolve them.
    fn check_resolution(&self, key: &str, k: u32) -> Result<()> {
        if !self.family.kind.is_wrinkle() {
            return Ok(());
        }
        let freq = self.family.frequency.unwrap_or(1.0);
        let intervals = (self.domain.nodes - 1) as f64 / (self.domain.side * freq * f64::from(k));
        if intervals < MIN_INTERVALS_PER_PERIOD {
            return Err(Error::config(
                key,
                format!(
                    "a wrinkle period at k = {k} spans {intervals:.1} grid intervals; \
                     at least {MIN_INTERVALS_PER_PERIOD} are needed"
                ),
            ));
        }
        Ok(())
    }

    /// `(k_min, k_max)` of the sweep section, or `(k, k)`.
    pub fn k_range(&self) -> (u32, u32) {
        self.sweep
            .as_ref()
            .map_or((self.family.k, self.family.k), |s| (s.k_min, s.k_max))
    }
}

/// Checks an `n × n` row table and returns it flattened row-major.
fn matrix_entries(key: &str, rows: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(key, format!("needs {n} rows of {n} entries")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(key, "entries must be finite"));
    }
    Ok(flat)
}

/// A symmetric positive definite metric from an `n × n` row table.
pub(crate) fn const_metric(key: &str, rows: &[Vec<f64>], n: usize) -> Result<ConstMetric> {
    let flat = matrix_entries(key, rows, n)?;
    ConstMetric::new(DMatrix::from_row_slice(n, n, &flat)).map_err(|e| Error::config(key, e.to_string()))
}

/// Parses `k=A..B` (inclusive) into sweep overrides.
pub fn parse_param(text: &str) -> Result<[Override; 2]> {
    let (name, range) = text
        .split_once('=')
        .ok_or_else(|| Error::config("--param", "expected k=A..B"))?;
    if name.trim() != "k" {
        return Err(Error::config(
            format!("--param {}", name.trim()),
            "only the sequence index k can be swept",
        ));
    }
    let (lo, hi) = range
        .split_once("..")
        .ok_or_else(|| Error::config("--param k", "expected a range A..B"))?;
    let parse = |s: &str| {
        s.trim()
            .trim_start_matches('=')
            .parse::<u32>()
            .map_err(|e| Error::config("--param k", format!("{s:?}: {e}")))
    };
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    Ok([
        Override::new("sweep.k_min", toml::Value::Integer(lo.into())),
        Override::new("sweep.k_max", toml::Value::Integer(hi.into())),
    ])
}
