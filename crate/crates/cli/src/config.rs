//! Experiment configuration.
//!
//! A config is one TOML file: a mandatory root `seed`, optional `out` and
//! `workers`, a `[defaults]` table of Monte-Carlo sizes and a list of
//! `[[checks]]` tables. Every table rejects unknown keys. Errors carry the
//! line of the offending entry.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use toml::{Spanned, Table, Value};
use wienerbv::capacity::{catalog_cloud, Condition9Verdict};
use wienerbv::geometry::parse_domain;
use wienerbv::mcverify::McOptions;

/// Check names with a one-line description, in listing order.
pub const CHECKS: &[(&str, &str)] = &[
    ("fp-normalization", "density mass plus atom at infinity of the drifted first-passage law"),
    ("boundary-bounds", "staying and band probabilities against their linear bounds; band slope in r"),
    ("calibrate-c1", "exit-time CDF envelope C1 over domains and start depths; feeds c1 = \"calibrated\""),
    ("gradient-mass", "m P[0 <= h <= 1/m, tube avoided]: bounded, no increasing trend"),
    ("psi", "two-excursion probability against r: log-log slope"),
    ("null-boundary", "P[0 <= h <= eps] against eps: linear decay to zero"),
    ("capacity", "Riesz capacity of a catalog set along a resolution schedule"),
    ("capacity-scaling", "Cap(cK) = c^beta Cap(K)"),
    ("capacity-condition", "capacity of the singular-set approximations along a shrinking schedule"),
    ("rou-ensemble", "reflected OU ensemble: quadratic variation, normality, lag-one, reflection locus, marginal"),
    ("rou-schemes", "projection and penalization schemes driven by the same noise"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

/// Monte-Carlo sizes; unset fields fall back to the suite defaults and then
/// to [`McOptions::default`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub level: Option<f64>,
    pub boundary_samples: Option<usize>,
}

impl Sizes {
    pub fn or(self, base: Sizes) -> Sizes {
        Sizes {
            n_paths: self.n_paths.or(base.n_paths),
            n_steps: self.n_steps.or(base.n_steps),
            level: self.level.or(base.level),
            boundary_samples: self.boundary_samples.or(base.boundary_samples),
        }
    }

    pub fn options(&self, seed: u64) -> McOptions {
        let d = McOptions::default();
        McOptions {
            n_paths: self.n_paths.unwrap_or(d.n_paths),
            n_steps: self.n_steps.unwrap_or(d.n_steps),
            level: self.level.unwrap_or(d.level),
            boundary_samples: self.boundary_samples.unwrap_or(d.boundary_samples),
            seed,
            exec: d.exec,
        }
    }
}

/// Where a check takes C1 from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum C1Source {
    Value(f64),
    /// The most recent `calibrate-c1` result of the same run.
    Calibrated,
}

impl<'de> Deserialize<'de> for C1Source {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(C1Source::Value(v)),
            Raw::Int(v) => Ok(C1Source::Value(v as f64)),
            Raw::Name(s) if s == "calibrated" => Ok(C1Source::Calibrated),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("c1 must be a number or \"calibrated\", got \"{s}\""))),
        }
    }
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpNormalization {
    pub drifts: Vec<f64>,
    pub barriers: Vec<f64>,
    #[serde(default = "FpNormalization::default_tol")]
    pub tol: f64,
}

impl FpNormalization {
    fn default_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryBounds {
    pub domain: String,
    /// Start depths q(x), on the ray from the origin along e_d.
    #[serde(default)]
    pub depths: Vec<f64>,
    /// Explicit start points, used in addition to `depths`.
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    /// Band radii as fractions of q(x).
    #[serde(default = "BoundaryBounds::default_fractions")]
    pub r_fractions: Vec<f64>,
    /// Common gamma for all bands; gamma = r when absent.
    pub gamma: Option<f64>,
    pub c1: C1Source,
}

impl BoundaryBounds {
    fn default_fractions() -> Vec<f64> {
        vec![0.0625, 0.125, 0.25]
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateC1 {
    pub domains: Vec<String>,
    #[serde(default = "CalibrateC1::default_r")]
    pub r: f64,
    pub depths: Vec<f64>,
    pub t_grid: Option<Vec<f64>>,
}

impl CalibrateC1 {
    fn default_r() -> f64 {
        0.05
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientMass {
    pub domain: String,
    #[serde(default = "one")]
    pub k: usize,
    pub m: Vec<usize>,
    #[serde(default = "unit")]
    pub horizon: f64,
    pub c1: C1Source,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Psi {
    pub domain: String,
    #[serde(default = "one")]
    pub l: usize,
    pub r: Vec<f64>,
    #[serde(default = "unit")]
    pub horizon: f64,
    /// Cut time; half the horizon when absent.
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullBoundary {
    pub domain: String,
    pub eps: Vec<f64>,
    #[serde(default = "unit")]
    pub horizon: f64,
    /// (r, boundary samples) pairs for the capacity condition.
    pub schedule: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacity {
    pub set: String,
    pub beta: f64,
    pub resolutions: Vec<usize>,
    pub expect: Option<f64>,
    /// Tolerance around `expect`, one per resolution or a single value.
    #[serde(default)]
    pub tol: Vec<f64>,
    /// Require capacities to decrease along the schedule.
    #[serde(default)]
    pub decreasing: bool,
    pub solver_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityScaling {
    pub set: String,
    pub beta: f64,
    pub resolution: usize,
    pub factors: Vec<f64>,
    #[serde(default = "CapacityScaling::default_gap_multiple")]
    pub gap_multiple: f64,
    pub solver_tol: Option<f64>,
}

impl CapacityScaling {
    fn default_gap_multiple() -> f64 {
        10.0
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityCondition {
    pub domain: String,
    pub schedule: Vec<(f64, usize)>,
    pub expect: Option<Condition9Verdict>,
    pub max_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    /// Grid index i in 1..=n_grid.
    pub index: usize,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouEnsemble {
    pub domain: String,
    pub n_grid: usize,
    #[serde(default = "unit")]
    pub horizon: f64,
    pub t_end: f64,
    pub dt_sim: f64,
    pub n_traj: usize,
    #[serde(default)]
    pub directions: Vec<Direction>,
    #[serde(default = "RouEnsemble::default_touch_tol")]
    pub touch_tol: f64,
    #[serde(default)]
    pub marginal: bool,
    /// Penalization strength; the projection scheme when absent.
    pub strength: Option<f64>,
}

impl RouEnsemble {
    fn default_touch_tol() -> f64 {
        wienerbv::reflect::TOUCH_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouSchemes {
    pub domain: String,
    pub n_grid: usize,
    #[serde(default = "unit")]
    pub horizon: f64,
    pub t_end: f64,
    pub dt_sim: f64,
    pub strengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    FpNormalization(FpNormalization),
    BoundaryBounds(BoundaryBounds),
    CalibrateC1(CalibrateC1),
    GradientMass(GradientMass),
    Psi(Psi),
    NullBoundary(NullBoundary),
    Capacity(Capacity),
    CapacityScaling(CapacityScaling),
    CapacityCondition(CapacityCondition),
    RouEnsemble(RouEnsemble),
    RouSchemes(RouSchemes),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub check: String,
    pub label: String,
    pub mandatory: bool,
    /// Record kinds reported but not counted towards the exit status.
    pub advisory: Vec<String>,
    pub sizes: Sizes,
    pub params: Params,
    /// The raw table, echoed into every record.
    pub table: Table,
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub defaults: Sizes,
    pub checks: Vec<CheckSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    out: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    defaults: Sizes,
    #[serde(default)]
    checks: Vec<Spanned<Table>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Common {
    check: String,
    label: Option<String>,
    #[serde(default = "yes")]
    mandatory: bool,
    #[serde(default)]
    advisory: Vec<String>,
    n_paths: Option<usize>,
    n_steps: Option<usize>,
    level: Option<f64>,
    boundary_samples: Option<usize>,
}

const COMMON_KEYS: &[&str] =
    &["check", "label", "mandatory", "advisory", "n_paths", "n_steps", "level", "boundary_samples"];

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key = ...` inside the byte range, if it can be found.
fn key_line(src: &str, span: &std::ops::Range<usize>, key: &str) -> Option<usize> {
    let start = span.start.min(src.len());
    let end = span.end.min(src.len());
    let mut offset = start;
    for line in src[start..end].split_inclusive('\n') {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(line_of(src, offset));
            }
        }
        offset += line.len();
    }
    None
}

/// Byte range of the table whose header starts at `start`: up to the next
/// header line.
fn region(src: &str, start: usize) -> std::ops::Range<usize> {
    let start = start.min(src.len());
    let body = src[start..].find('\n').map_or(src.len(), |i| start + i + 1);
    let mut offset = body;
    for line in src[body..].split_inclusive('\n') {
        if line.trim_start().starts_with('[') && !line.contains('=') {
            return start..offset;
        }
        offset += line.len();
    }
    start..src.len()
}

/// First backtick-quoted word of a serde message (the field it complains about).
fn quoted_field(msg: &str) -> Option<&str> {
    let a = msg.find('`')?;
    let b = msg[a + 1..].find('`')?;
    Some(&msg[a + 1..a + 1 + b])
}

fn typed<T: DeserializeOwned>(table: Table, src: &str, span: &std::ops::Range<usize>) -> Result<T, ConfigError> {
    Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().trim().to_string();
        let line = quoted_field(&msg).and_then(|k| key_line(src, span, k)).or(Some(line_of(src, span.start)));
        err(line, msg)
    })
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| err(None, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of(src, s.start));
            err(line, e.message().trim().to_string())
        })?;
        if raw.workers == Some(0) {
            return Err(err(key_line(src, &(0..src.len()), "workers"), "workers must be positive"));
        }
        let mut checks = Vec::with_capacity(raw.checks.len());
        let mut calibrated = false;
        for (i, spanned) in raw.checks.into_iter().enumerate() {
            let span = region(src, spanned.span().start);
            let line = Some(line_of(src, span.start));
            let mut rest = spanned.into_inner();
            let table = rest.clone();
            let mut common = Table::new();
            for k in COMMON_KEYS {
                if let Some(v) = rest.remove(*k) {
                    common.insert(k.to_string(), v);
                }
            }
            let c: Common = typed(common, src, &span)?;
            let at = |key: &str| key_line(src, &span, key).or(line);
            let params = match c.check.as_str() {
                "fp-normalization" => Params::FpNormalization(typed(rest, src, &span)?),
                "boundary-bounds" => Params::BoundaryBounds(typed(rest, src, &span)?),
                "calibrate-c1" => Params::CalibrateC1(typed(rest, src, &span)?),
                "gradient-mass" => Params::GradientMass(typed(rest, src, &span)?),
                "psi" => Params::Psi(typed(rest, src, &span)?),
                "null-boundary" => Params::NullBoundary(typed(rest, src, &span)?),
                "capacity" => Params::Capacity(typed(rest, src, &span)?),
                "capacity-scaling" => Params::CapacityScaling(typed(rest, src, &span)?),
                "capacity-condition" => Params::CapacityCondition(typed(rest, src, &span)?),
                "rou-ensemble" => Params::RouEnsemble(typed(rest, src, &span)?),
                "rou-schemes" => Params::RouSchemes(typed(rest, src, &span)?),
                other => {
                    let names: Vec<&str> = CHECKS.iter().map(|c| c.0).collect();
                    return Err(err(at("check"), format!("unknown check `{other}`; expected one of {}", names.join(", "))));
                }
            };
            validate(&params, calibrated).map_err(|(key, msg)| err(at(key), msg))?;
            calibrated |= matches!(params, Params::CalibrateC1(_));
            let sizes = Sizes { n_paths: c.n_paths, n_steps: c.n_steps, level: c.level, boundary_samples: c.boundary_samples };
            checks.push(CheckSpec {
                label: c.label.unwrap_or_else(|| format!("{}#{}", c.check, i + 1)),
                check: c.check,
                mandatory: c.mandatory,
                advisory: c.advisory,
                sizes,
                params,
                table,
                line,
            });
        }
        let mut labels: Vec<&str> = checks.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            let dup = checks.iter().rev().find(|c| c.label == w[0]).and_then(|c| c.line);
            return Err(err(dup, format!("duplicate label `{}`", w[0])));
        }
        Ok(Config { seed: raw.seed, out: raw.out, workers: raw.workers, defaults: raw.defaults, checks })
    }
}

type Invalid = (&'static str, String);

fn domain_ok(key: &'static str, id: &str) -> Result<(), Invalid> {
    parse_domain(id).map(|_| ()).map_err(|e| (key, format!("domain `{id}`: {e}")))
}

fn nonempty<T>(key: &'static str, v: &[T]) -> Result<(), Invalid> {
    if v.is_empty() {
        Err((key, format!("`{key}` must not be empty")))
    } else {
        Ok(())
    }
}

fn positive(key: &'static str, v: &[f64]) -> Result<(), Invalid> {
    match v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        Some(x) => Err((key, format!("`{key}` entries must be positive and finite, got {x}"))),
        None => Ok(()),
    }
}

fn c1_ok(c1: C1Source, calibrated: bool) -> Result<(), Invalid> {
    match c1 {
        C1Source::Calibrated if !calibrated => {
            Err(("c1", "c1 = \"calibrated\" needs an earlier calibrate-c1 check".to_string()))
        }
        C1Source::Value(v) if !(v >= 0.0 && v.is_finite()) => Err(("c1", format!("c1 must be nonnegative, got {v}"))),
        _ => Ok(()),
    }
}

fn validate(p: &Params, calibrated: bool) -> Result<(), Invalid> {
    match p {
        Params::FpNormalization(p) => {
            nonempty("drifts", &p.drifts)?;
            nonempty("barriers", &p.barriers)?;
            positive("barriers", &p.barriers)
        }
        Params::BoundaryBounds(p) => {
            domain_ok("domain", &p.domain)?;
            if p.depths.is_empty() && p.starts.is_empty() {
                return Err(("depths", "boundary-bounds needs `depths` or `starts`".into()));
            }
            positive("depths", &p.depths)?;
            nonempty("u", &p.u)?;
            positive("u", &p.u)?;
            positive("r_fractions", &p.r_fractions)?;
            if let Some(g) = p.gamma {
                positive("gamma", &[g])?;
            }
            c1_ok(p.c1, calibrated)
        }
        Params::CalibrateC1(p) => {
            nonempty("domains", &p.domains)?;
            p.domains.iter().try_for_each(|d| domain_ok("domains", d))?;
            nonempty("depths", &p.depths)?;
            positive("depths", &p.depths)?;
            positive("r", &[p.r])
        }
        Params::GradientMass(p) => {
            domain_ok("domain", &p.domain)?;
            nonempty("m", &p.m)?;
            c1_ok(p.c1, calibrated)
        }
        Params::Psi(p) => {
            domain_ok("domain", &p.domain)?;
            positive("r", &p.r)
        }
        Params::NullBoundary(p) => {
            domain_ok("domain", &p.domain)?;
            positive("eps", &p.eps)?;
            nonempty("schedule", &p.schedule)
        }
        Params::Capacity(p) => {
            nonempty("resolutions", &p.resolutions)?;
            let n = *p.resolutions.iter().min().expect("nonempty");
            catalog_cloud(&p.set, n).map_err(|e| ("set", format!("set `{}`: {e}", p.set)))?;
            if !(p.tol.len() <= 1 || p.tol.len() == p.resolutions.len()) {
                return Err(("tol", "`tol` needs one value or one per resolution".into()));
            }
            Ok(())
        }
        Params::CapacityScaling(p) => {
            catalog_cloud(&p.set, p.resolution).map_err(|e| ("set", format!("set `{}`: {e}", p.set)))?;
            nonempty("factors", &p.factors)?;
            positive("factors", &p.factors)
        }
        Params::CapacityCondition(p) => {
            domain_ok("domain", &p.domain)?;
            nonempty("schedule", &p.schedule)
        }
        Params::RouEnsemble(p) => domain_ok("domain", &p.domain),
        Params::RouSchemes(p) => {
            domain_ok("domain", &p.domain)?;
            nonempty("strengths", &p.strengths)
        }
    }
}
