//! Signature generation from collections of trial observations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeSeries, CategoricalSignature, GeneralSignature, QoSAttribute, SignatureSeries,
    Timeline, TrialObservation, WorkloadCategory, WorkloadRequest,
};

/// Default minimum demand fraction for a request to count as intensive.
pub const DEFAULT_MIN_DEMAND: f64 = 0.8;

/// Default share of an observation's requests a category needs for the
/// observation to feed that category's signature.
pub const DEFAULT_DOMINANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `demand >= threshold`
    #[default]
    Inclusive,
    /// `demand > threshold`
    Strict,
}

/// Minimum resource requirement per resource attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCriteria {
    thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    boundary: Boundary,
}

impl CategoryCriteria {
    pub fn new(thresholds: BTreeMap<String, f64>, boundary: Boundary) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::config(
                "category criteria need at least one attribute",
            ));
        }
        if let Some((k, v)) = thresholds.iter().find(|(_, v)| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::config(format!(
                "threshold for `{k}` = {v} outside (0, 1]"
            )));
        }
        Ok(Self {
            thresholds,
            boundary,
        })
    }

    /// Same minimum demand for cpu, memory and io.
    pub fn uniform(threshold: f64) -> Result<Self> {
        let thresholds = WorkloadCategory::standard()
            .iter()
            .map(|c| (c.criteria_attribute().to_string(), threshold))
            .collect();
        Self::new(thresholds, Boundary::Inclusive)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn thresholds(&self) -> &BTreeMap<String, f64> {
        &self.thresholds
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn meets(&self, demand: f64, threshold: f64) -> bool {
        match self.boundary {
            Boundary::Inclusive => demand >= threshold,
            Boundary::Strict => demand > threshold,
        }
    }
}

impl Default for CategoryCriteria {
    fn default() -> Self {
        Self::uniform(DEFAULT_MIN_DEMAND).expect("default threshold is valid")
    }
}

/// Every category whose resource demand meets its minimum requirement.
///
/// A request may land in several categories or in none. Demand attributes
/// without a configured threshold contribute nothing.
pub fn categorize_request(
    req: &WorkloadRequest,
    criteria: &CategoryCriteria,
) -> BTreeSet<WorkloadCategory> {
    req.demands
        .iter()
        .filter_map(|(attr, &demand)| {
            let threshold = *criteria.thresholds.get(attr)?;
            criteria
                .meets(demand, threshold)
                .then(|| WorkloadCategory::from_attribute(attr))
        })
        .collect()
}

/// Fraction of `requests` falling in each category.
pub fn category_mix_from_requests(
    requests: &[WorkloadRequest],
    criteria: &CategoryCriteria,
) -> BTreeMap<WorkloadCategory, f64> {
    let mut counts: BTreeMap<WorkloadCategory, usize> = BTreeMap::new();
    for req in requests {
        for c in categorize_request(req, criteria) {
            *counts.entry(c).or_default() += 1;
        }
    }
    let n = requests.len().max(1) as f64;
    counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect()
}

/// Mean observed value on one day together with the number of contributors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayAggregate {
    pub mean: Option<f64>,
    pub count: usize,
}

impl DayAggregate {
    pub fn is_covered(&self) -> bool {
        self.count > 0
    }
}

/// Per-day arithmetic mean over every observation whose window covers the day.
pub fn aggregate_trials(
    observations: &[TrialObservation],
    attr: &str,
    timeline: Timeline,
) -> Result<Vec<DayAggregate>> {
    if observations.is_empty() {
        return Err(Error::NoTrialData);
    }
    let horizon = timeline.horizon();
    let mut sums = vec![0.0; horizon];
    let mut counts = vec![0usize; horizon];
    for obs in observations {
        obs.check_horizon(horizon)?;
        let values = obs.values(attr)?;
        for (i, v) in values.iter().enumerate() {
            sums[obs.window_start() + i] += v;
            counts[obs.window_start() + i] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(sum, count)| DayAggregate {
            mean: (count > 0).then(|| sum / count as f64),
            count,
        })
        .collect())
}

fn uncovered(days: &[DayAggregate]) -> Vec<usize> {
    days.iter()
        .enumerate()
        .filter(|(_, d)| !d.is_covered())
        .map(|(t, _)| t)
        .collect()
}

fn build_series(
    observations: &[TrialObservation],
    attrs: &[QoSAttribute],
    timeline: Timeline,
    category: Option<&WorkloadCategory>,
) -> Result<SignatureSeries> {
    if observations.is_empty() {
        return Err(match category {
            Some(c) => Error::Uncovered {
                days: (0..timeline.horizon()).collect(),
                category: Some(c.clone()),
            },
            None => Error::NoTrialData,
        });
    }
    let mut series = Vec::with_capacity(attrs.len());
    for attr in attrs {
        let days = aggregate_trials(observations, &attr.id, timeline)?;
        let gaps = uncovered(&days);
        if !gaps.is_empty() {
            return Err(Error::Uncovered {
                days: gaps,
                category: category.cloned(),
            });
        }
        series.push(AttributeSeries {
            attribute: attr.clone(),
            values: days.iter().map(|d| d.mean.unwrap_or_default()).collect(),
        });
    }
    SignatureSeries::new(timeline.horizon(), series)
}

/// General signature: daily means across all of the provider's observations.
pub fn generate_general_signature(
    observations: &[TrialObservation],
    provider_id: &str,
    attrs: &[QoSAttribute],
    timeline: Timeline,
) -> Result<GeneralSignature> {
    let own: Vec<TrialObservation> = observations
        .iter()
        .filter(|o| o.provider_id() == provider_id)
        .cloned()
        .collect();
    if own.is_empty() {
        return Err(Error::NoTrialData);
    }
    let series = build_series(&own, attrs, timeline, None)?;
    Ok(GeneralSignature::new(provider_id, series))
}

/// Categorical signature: daily means over the observations dominated by
/// `category` (mix fraction at least `dominance`).
pub fn generate_categorical_signature(
    observations: &[TrialObservation],
    provider_id: &str,
    category: &WorkloadCategory,
    dominance: f64,
    attrs: &[QoSAttribute],
    timeline: Timeline,
) -> Result<CategoricalSignature> {
    if !(dominance > 0.0 && dominance <= 1.0) {
        return Err(Error::config(format!(
            "dominance cutoff {dominance} outside (0, 1]"
        )));
    }
    let qualifying: Vec<TrialObservation> = observations
        .iter()
        .filter(|o| o.provider_id() == provider_id && o.mix_fraction(category) >= dominance)
        .cloned()
        .collect();
    let series = build_series(&qualifying, attrs, timeline, Some(category))?;
    Ok(CategoricalSignature::new(
        provider_id,
        category.clone(),
        series,
    ))
}
