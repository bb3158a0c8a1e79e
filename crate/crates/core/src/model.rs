//! Domain types shared by every stage of the pipeline.
//!
//! Signatures store aggregated absolute averages per day. Relative
//! performance between two days is computed on demand with
//! [`relative_change`]. All types validate on construction and are
//! immutable afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default provisioning horizon in days.
pub const DEFAULT_HORIZON: usize = 360;

/// Default trial window in days.
pub const DEFAULT_TRIAL_LEN: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QoSAttribute {
    pub id: String,
    pub unit: String,
}

impl QoSAttribute {
    pub fn new(id: impl Into<String>, unit: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::validation("QoS attribute id must be non-empty"));
        }
        Ok(Self {
            id,
            unit: unit.into(),
        })
    }
}

/// Daily timeline shared by every series of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    horizon: usize,
}

impl Timeline {
    pub const STEP: &'static str = "1 day";

    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::config(format!(
                "horizon must be >= 2, got {horizon}"
            )));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn check_day(&self, day: usize) -> Result<()> {
        if day >= self.horizon {
            return Err(Error::DayOutOfRange {
                day,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

impl Default for Timeline {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
        }
    }
}

/// Workload category keyed by the resource it stresses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum WorkloadCategory {
    Cpu,
    Memory,
    Io,
    Custom(String),
}

impl WorkloadCategory {
    pub fn standard() -> [WorkloadCategory; 3] {
        [Self::Cpu, Self::Memory, Self::Io]
    }

    /// Resource attribute whose demand decides membership.
    pub fn criteria_attribute(&self) -> &str {
        match self {
            Self::Cpu => "cpu",
            Self::Memory => "memory",
            Self::Io => "io",
            Self::Custom(name) => name,
        }
    }

    pub fn from_attribute(attr: &str) -> Self {
        attr.parse()
            .expect("category parsing is infallible for non-empty names")
    }
}

impl fmt::Display for WorkloadCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.criteria_attribute())
    }
}

impl FromStr for WorkloadCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cpu" => Self::Cpu,
            "memory" | "mem" => Self::Memory,
            "io" => Self::Io,
            "" => return Err(Error::validation("empty workload category")),
            other => Self::Custom(other.to_string()),
        })
    }
}

impl From<WorkloadCategory> for String {
    fn from(c: WorkloadCategory) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for WorkloadCategory {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A single problem found by [`validate_series`].
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesViolation {
    Length { actual: usize, expected: usize },
    NonFinite { index: usize },
    NonPositive { index: usize },
}

impl fmt::Display for SeriesViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Length { actual, expected } => write!(f, "length {actual} ≠ {expected}"),
            Self::NonFinite { index } => write!(f, "non-finite at index {index}"),
            Self::NonPositive { index } => write!(f, "non-positive at index {index}"),
        }
    }
}

/// Checks length, finiteness, and strict positivity of a series.
pub fn validate_series(
    seq: &[f64],
    horizon: usize,
) -> std::result::Result<(), Vec<SeriesViolation>> {
    let mut violations = Vec::new();
    if seq.len() != horizon {
        violations.push(SeriesViolation::Length {
            actual: seq.len(),
            expected: horizon,
        });
    }
    for (index, &v) in seq.iter().enumerate() {
        if !v.is_finite() {
            violations.push(SeriesViolation::NonFinite { index });
        } else if v <= 0.0 {
            violations.push(SeriesViolation::NonPositive { index });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn violations_to_error(attr: &str, v: Vec<SeriesViolation>) -> Error {
    let joined: Vec<String> = v.iter().map(ToString::to_string).collect();
    Error::validation(format!("series `{attr}`: {}", joined.join(", ")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSeries {
    pub attribute: QoSAttribute,
    pub values: Vec<f64>,
}

/// Per-attribute daily series sharing one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSeries {
    horizon: usize,
    series: BTreeMap<String, AttributeSeries>,
}

impl SignatureSeries {
    pub fn new(horizon: usize, series: impl IntoIterator<Item = AttributeSeries>) -> Result<Self> {
        Timeline::new(horizon)?;
        let mut map = BTreeMap::new();
        for s in series {
            validate_series(&s.values, horizon)
                .map_err(|v| violations_to_error(&s.attribute.id, v))?;
            let id = s.attribute.id.clone();
            if map.insert(id.clone(), s).is_some() {
                return Err(Error::validation(format!("duplicate attribute `{id}`")));
            }
        }
        if map.is_empty() {
            return Err(Error::validation("signature needs at least one attribute"));
        }
        Ok(Self {
            horizon,
            series: map,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self, attr: &str) -> Result<&[f64]> {
        self.series
            .get(attr)
            .map(|s| s.values.as_slice())
            .ok_or_else(|| Error::MissingAttribute(attr.to_string()))
    }

    pub fn attribute(&self, attr: &str) -> Result<&QoSAttribute> {
        self.series
            .get(attr)
            .map(|s| &s.attribute)
            .ok_or_else(|| Error::MissingAttribute(attr.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeSeries> {
        self.series.values()
    }
}

/// Common read access for general and categorical signatures.
pub trait Signature {
    fn provider_id(&self) -> &str;
    fn category(&self) -> Option<&WorkloadCategory>;
    fn series(&self) -> &SignatureSeries;

    fn horizon(&self) -> usize {
        self.series().horizon()
    }

    fn values(&self, attr: &str) -> Result<&[f64]> {
        self.series().values(attr)
    }
}

/// Signature aggregating all trial users regardless of workload type.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralSignature {
    provider_id: String,
    series: SignatureSeries,
}

impl GeneralSignature {
    pub fn new(provider_id: impl Into<String>, series: SignatureSeries) -> Self {
        Self {
            provider_id: provider_id.into(),
            series,
        }
    }
}

impl Signature for GeneralSignature {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }
    fn category(&self) -> Option<&WorkloadCategory> {
        None
    }
    fn series(&self) -> &SignatureSeries {
        &self.series
    }
}

/// Signature computed from observations of a single workload category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSignature {
    provider_id: String,
    category: WorkloadCategory,
    series: SignatureSeries,
}

impl CategoricalSignature {
    pub fn new(
        provider_id: impl Into<String>,
        category: WorkloadCategory,
        series: SignatureSeries,
    ) -> Self {
        Self {
            provider_id: provider_id.into(),
            category,
            series,
        }
    }

    pub fn workload(&self) -> &WorkloadCategory {
        &self.category
    }

    /// Builds a single-attribute categorical signature; mostly for synthesis and tests.
    pub fn from_values(
        provider_id: impl Into<String>,
        category: WorkloadCategory,
        attribute: QoSAttribute,
        values: Vec<f64>,
    ) -> Result<Self> {
        let horizon = values.len();
        let series = SignatureSeries::new(horizon, [AttributeSeries { attribute, values }])?;
        Ok(Self::new(provider_id, category, series))
    }

    /// Returns a copy with the series of `attr` replaced.
    pub fn with_values(&self, attr: &str, values: Vec<f64>) -> Result<Self> {
        let attribute = self.series.attribute(attr)?.clone();
        let mut all: Vec<AttributeSeries> = self
            .series
            .iter()
            .filter(|s| s.attribute.id != attr)
            .cloned()
            .collect();
        all.push(AttributeSeries { attribute, values });
        Ok(Self::new(
            self.provider_id.clone(),
            self.category.clone(),
            SignatureSeries::new(self.series.horizon(), all)?,
        ))
    }
}

impl Signature for CategoricalSignature {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }
    fn category(&self) -> Option<&WorkloadCategory> {
        Some(&self.category)
    }
    fn series(&self) -> &SignatureSeries {
        &self.series
    }
}

/// Ratio of the expected value at `t2` to the expected value at `t1`.
///
/// Multiplying a trial observation made at `t1` by this ratio estimates the
/// value expected at `t2`.
pub fn relative_change<S: Signature + ?Sized>(
    sig: &S,
    attr: &str,
    t1: usize,
    t2: usize,
) -> Result<f64> {
    let values = sig.values(attr)?;
    let horizon = values.len();
    for day in [t1, t2] {
        if day >= horizon {
            return Err(Error::DayOutOfRange { day, horizon });
        }
    }
    Ok(values[t2] / values[t1])
}

/// A consumer request described by fractional resource demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRequest {
    pub arrival_day: usize,
    pub demands: BTreeMap<String, f64>,
}

impl WorkloadRequest {
    pub fn new(arrival_day: usize, demands: BTreeMap<String, f64>) -> Result<Self> {
        if demands.is_empty() {
            return Err(Error::validation("request demands must be non-empty"));
        }
        if let Some((k, v)) = demands.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(format!(
                "demand `{k}` = {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            arrival_day,
            demands,
        })
    }

    pub fn check_horizon(&self, timeline: Timeline) -> Result<()> {
        timeline.check_day(self.arrival_day)
    }
}

/// One consumer's observed QoS over a trial window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialObservation {
    consumer_id: String,
    provider_id: String,
    window_start: usize,
    window_len: usize,
    values: BTreeMap<String, Vec<f64>>,
    category_mix: BTreeMap<WorkloadCategory, f64>,
}

impl TrialObservation {
    pub fn new(
        consumer_id: impl Into<String>,
        provider_id: impl Into<String>,
        window_start: usize,
        values: BTreeMap<String, Vec<f64>>,
        category_mix: BTreeMap<WorkloadCategory, f64>,
    ) -> Result<Self> {
        let consumer_id = consumer_id.into();
        let mut lens = values.values().map(Vec::len);
        let window_len = lens.next().ok_or_else(|| {
            Error::validation(format!(
                "observation `{consumer_id}` has no attribute values"
            ))
        })?;
        if window_len == 0 {
            return Err(Error::EmptyWindow);
        }
        if lens.any(|l| l != window_len) {
            return Err(Error::validation(format!(
                "observation `{consumer_id}` has attribute series of unequal length"
            )));
        }
        for (attr, seq) in &values {
            if let Some((i, v)) = seq
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v <= 0.0)
            {
                return Err(Error::validation(format!(
                    "observation `{consumer_id}` attribute `{attr}` has invalid value {v} at index {i}"
                )));
            }
        }
        if let Some((c, f)) = category_mix.iter().find(|(_, f)| !(0.0..=1.0).contains(*f)) {
            return Err(Error::validation(format!(
                "category_mix[{c}] = {f} outside [0, 1]"
            )));
        }
        Ok(Self {
            consumer_id,
            provider_id: provider_id.into(),
            window_start,
            window_len,
            values,
            category_mix,
        })
    }

    /// Single-attribute convenience constructor.
    pub fn single(
        consumer_id: impl Into<String>,
        provider_id: impl Into<String>,
        window_start: usize,
        attr: &str,
        values: Vec<f64>,
        category_mix: BTreeMap<WorkloadCategory, f64>,
    ) -> Result<Self> {
        Self::new(
            consumer_id,
            provider_id,
            window_start,
            BTreeMap::from([(attr.to_string(), values)]),
            category_mix,
        )
    }

    pub fn consumer_id(&self) -> &str {
        &self.consumer_id
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn window_start(&self) -> usize {
        self.window_start
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Last day covered by the window (inclusive).
    pub fn window_end(&self) -> usize {
        self.window_start + self.window_len - 1
    }

    pub fn values(&self, attr: &str) -> Result<&[f64]> {
        self.values
            .get(attr)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingAttribute(attr.to_string()))
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn category_mix(&self) -> &BTreeMap<WorkloadCategory, f64> {
        &self.category_mix
    }

    pub fn mix_fraction(&self, category: &WorkloadCategory) -> f64 {
        self.category_mix.get(category).copied().unwrap_or(0.0)
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if self.window_start + self.window_len > horizon {
            return Err(Error::WindowOutOfRange {
                start: self.window_start,
                len: self.window_len,
                horizon,
            });
        }
        Ok(())
    }
}
