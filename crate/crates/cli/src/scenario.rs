//! Scenario files.
//!
//! A scenario is a TOML document with one table per pipeline stage. Omitting
//! `[qdtp]` runs without the pacing forwarder; omitting `[aam]` runs
//! detection only. Times are written in milliseconds or seconds as noted in
//! the key name.
//!
//! ```toml
//! horizon_s = 80
//! seed = 1
//!
//! [benign]
//! arrivals = "periodic"   # or "poisson"; period_ms is then the mean gap
//! period_ms = 100
//! source_count = 10
//! jitter_ms = 0
//!
//! [[flood]]
//! start_s = 5
//! x_kind = "uniform"      # "constant" | "uniform" | "geometric"
//! x_mean = 10000          # x_lo / x_hi optionally override the uniform range
//! attack_fraction = 0.95
//! rate_pps = 5000
//!
//! [qdtp]
//! d_ms = 3
//!
//! [detector]
//! tpr = 0.9971
//! tnr = 0.9848
//! tau_ms = 3
//! window = 20
//!
//! [aam]
//! skip_m = "auto"         # or a fixed integer
//! flush_trailing = false
//!
//! [cost]
//! alpha = 1.0
//! beta = 0.05
//!
//! [sim]
//! service_jitter = 0.0    # fraction of tau, e.g. 0.15 for +/-15%
//! series = "events"       # "events" | "cadence" | "off"
//! sample_period_ms = 100
//! ```

use std::fs;
use std::path::Path;

use gateway_shield::detector::{DEFAULT_TNR, DEFAULT_TPR};
use gateway_shield::sim::{CostWeights, SeriesMode, SkipPolicy};
use gateway_shield::time::{Nanos, NANOS_PER_MILLI, NANOS_PER_SEC};
use gateway_shield::traffic::BenignArrivals;
use gateway_shield::{
    AamConfig, BenignSourceConfig, DetectorConfig, FloodConfig, QdtpConfig, Scenario, XDistribution,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub horizon_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub benign: Option<BenignSection>,
    #[serde(default, rename = "flood")]
    pub floods: Vec<FloodSection>,
    pub qdtp: Option<QdtpSection>,
    #[serde(default)]
    pub detector: DetectorSection,
    pub aam: Option<AamSection>,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    #[default]
    Periodic,
    Poisson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenignSection {
    #[serde(default)]
    pub arrivals: ArrivalKind,
    pub period_ms: f64,
    pub source_count: u32,
    #[serde(default)]
    pub jitter_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XKind {
    Constant,
    Uniform,
    Geometric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloodSection {
    pub start_s: f64,
    pub x_kind: XKind,
    pub x_mean: f64,
    pub x_lo: Option<u64>,
    pub x_hi: Option<u64>,
    #[serde(default = "one")]
    pub attack_fraction: f64,
    pub rate_pps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdtpSection {
    #[serde(default = "three")]
    pub d_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default = "default_tpr")]
    pub tpr: f64,
    #[serde(default = "default_tnr")]
    pub tnr: f64,
    #[serde(default = "three")]
    pub tau_ms: f64,
    #[serde(default = "twenty")]
    pub window: u32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            tpr: DEFAULT_TPR,
            tnr: DEFAULT_TNR,
            tau_ms: 3.0,
            window: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SkipSetting {
    Fixed(u64),
    Named(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AamSection {
    pub skip_m: SkipSetting,
    #[serde(default)]
    pub flush_trailing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    #[default]
    Events,
    Cadence,
    Off,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub service_jitter: f64,
    #[serde(default)]
    pub series: SeriesKind,
    #[serde(default = "hundred")]
    pub sample_period_ms: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            service_jitter: 0.0,
            series: SeriesKind::Events,
            sample_period_ms: 100.0,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn three() -> f64 {
    3.0
}
fn hundred() -> f64 {
    100.0
}
fn twenty() -> u32 {
    20
}
fn default_tpr() -> f64 {
    DEFAULT_TPR
}
fn default_tnr() -> f64 {
    DEFAULT_TNR
}

fn scaled(value: f64, unit: Nanos, key: &str) -> CliResult<Nanos> {
    if !value.is_finite() || value < 0.0 {
        return Err(CliError::Config(format!(
            "{key} must be a non-negative number, got {value}"
        )));
    }
    Ok((value * unit as f64).round() as Nanos)
}

fn ms(value: f64, key: &str) -> CliResult<Nanos> {
    scaled(value, NANOS_PER_MILLI, key)
}

fn seconds(value: f64, key: &str) -> CliResult<Nanos> {
    scaled(value, NANOS_PER_SEC, key)
}

impl FloodSection {
    fn distribution(&self, idx: usize) -> CliResult<XDistribution> {
        let bad = |msg: &str| CliError::Config(format!("flood {idx}: {msg}"));
        if !(self.x_mean.is_finite() && self.x_mean >= 1.0) {
            return Err(bad("x_mean must be >= 1"));
        }
        Ok(match self.x_kind {
            XKind::Constant => XDistribution::Constant(self.x_mean.round() as u64),
            XKind::Uniform => match (self.x_lo, self.x_hi) {
                (Some(lo), Some(hi)) => XDistribution::Uniform { lo, hi },
                (None, None) => XDistribution::uniform_around(self.x_mean.round() as u64),
                _ => return Err(bad("x_lo and x_hi must be given together")),
            },
            XKind::Geometric => XDistribution::Geometric { mean: self.x_mean },
        })
    }
}

impl ScenarioFile {
    pub fn parse(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        for raw in overrides {
            apply_override(&mut doc, raw)?;
        }
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e| CliError::Config(format!("scenario: {e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    pub fn to_scenario(&self) -> CliResult<Scenario> {
        let benign = match &self.benign {
            Some(b) => {
                let period = ms(b.period_ms, "benign.period_ms")?;
                Some(BenignSourceConfig {
                    arrivals: match b.arrivals {
                        ArrivalKind::Periodic => BenignArrivals::Periodic { period },
                        ArrivalKind::Poisson => BenignArrivals::Poisson {
                            mean_interarrival: period,
                        },
                    },
                    source_count: b.source_count,
                    jitter: ms(b.jitter_ms, "benign.jitter_ms")?,
                })
            }
            None => None,
        };
        let floods = self
            .floods
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(FloodConfig {
                    start_time: seconds(f.start_s, "flood.start_s")?,
                    x_distribution: f.distribution(i)?,
                    attack_fraction: f.attack_fraction,
                    attack_rate: f.rate_pps,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let d = &self.detector;
        let detector = DetectorConfig {
            tpr: d.tpr,
            tnr: d.tnr,
            tau_inspect: ms(d.tau_ms, "detector.tau_ms")?,
            window_w: d.window,
            seed: d.seed,
        };
        let (aam, skip_policy) = match &self.aam {
            None => (None, SkipPolicy::Fixed),
            Some(a) => {
                let (skip_m, policy) = match &a.skip_m {
                    SkipSetting::Fixed(m) => (*m, SkipPolicy::Fixed),
                    SkipSetting::Named(name) if name == "auto" => {
                        (1, SkipPolicy::OptimalPerEpisode)
                    }
                    SkipSetting::Named(other) => {
                        return Err(CliError::Config(format!(
                            "aam.skip_m must be an integer or \"auto\", got {other:?}"
                        )))
                    }
                };
                let cfg = AamConfig {
                    window_w: d.window,
                    skip_m,
                    flush_trailing: a.flush_trailing,
                };
                (Some(cfg), policy)
            }
        };
        let scenario = Scenario {
            benign,
            floods,
            qdtp: match &self.qdtp {
                Some(q) => Some(QdtpConfig::new(ms(q.d_ms, "qdtp.d_ms")?)),
                None => None,
            },
            detector,
            aam,
            skip_policy,
            cost: CostWeights {
                alpha: self.cost.alpha,
                beta: self.cost.beta,
            },
            service_jitter: self.sim.service_jitter,
            horizon: seconds(self.horizon_s, "horizon_s")?,
            seed: self.seed,
            series: match self.sim.series {
                SeriesKind::Events => SeriesMode::Events,
                SeriesKind::Cadence => SeriesMode::Cadence,
                SeriesKind::Off => SeriesMode::Off,
            },
            sample_period: ms(self.sim.sample_period_ms, "sim.sample_period_ms")?,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Applies `path=value` to the document. Path segments are table keys or,
/// for arrays such as `flood`, zero-based indices: `flood.1.rate_pps=8000`.
/// Missing tables are created, so `qdtp.d_ms=3` enables the forwarder.
pub fn apply_override(doc: &mut toml::Table, raw: &str) -> CliResult<()> {
    let bad = |msg: String| CliError::Config(format!("override {raw:?}: {msg}"));
    let (path, value) = raw
        .split_once('=')
        .ok_or_else(|| bad("expected key=value".into()))?;
    let value = parse_value(value.trim());
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(bad("empty key segment".into()));
    }
    let (last, parents) = segments.split_last().expect("split yields one segment");
    let mut table = doc;
    let mut iter = parents.iter().peekable();
    while let Some(seg) = iter.next() {
        let entry = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            toml::Value::Array(items) => {
                let idx_seg = iter
                    .next()
                    .ok_or_else(|| bad(format!("{seg} is a list; add an index")))?;
                let idx: usize = idx_seg
                    .parse()
                    .map_err(|_| bad(format!("{idx_seg} is not an index")))?;
                let len = items.len();
                match items.get_mut(idx) {
                    Some(toml::Value::Table(t)) => t,
                    _ => return Err(bad(format!("{seg} has {len} entries, no index {idx}"))),
                }
            }
            _ => return Err(bad(format!("{seg} is not a table"))),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
