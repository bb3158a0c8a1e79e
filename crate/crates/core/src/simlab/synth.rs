//! Latent provider performance, observation synthesis, and change injection.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trace::{partition_trace, synthesize_workload_trace, WorkloadRecord};
use crate::error::{Error, Result};
use crate::model::{
    CategoricalSignature, QoSAttribute, Signature, TrialObservation, WorkloadCategory,
    WorkloadRequest,
};

/// Days of raw workload trace stretched over the horizon.
pub const TRACE_DAYS: usize = 34;

/// Per-day observation noise: multiplicative Gaussian noise plus rare spikes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub spike_prob: f64,
    pub spike_scale: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        sigma: 0.0,
        spike_prob: 0.0,
        spike_scale: 1.0,
    };

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!(
                "noise_sigma {} must be >= 0",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return Err(Error::config(format!(
                "spike_prob {} outside [0, 1]",
                self.spike_prob
            )));
        }
        if !(self.spike_scale > 0.0 && self.spike_scale.is_finite()) {
            return Err(Error::config(format!(
                "spike_scale {} must be > 0",
                self.spike_scale
            )));
        }
        Ok(())
    }
}

/// Synthesizes one trial observation from a (latent) categorical signature.
///
/// `E[i] = S_c[start + i] · (1 + η_i)` with `η_i ~ N(0, σ)`; with
/// probability `spike_prob` a day is additionally scaled by `spike_scale`.
/// Values are floored at a tiny positive number so they remain valid.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_observation<R: Rng + ?Sized>(
    categorical: &CategoricalSignature,
    attr: &str,
    consumer_id: &str,
    window_start: usize,
    window_len: usize,
    category: &WorkloadCategory,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<TrialObservation> {
    noise.validate()?;
    let reference = categorical.values(attr)?;
    if window_len == 0 {
        return Err(Error::EmptyWindow);
    }
    if window_start + window_len > reference.len() {
        return Err(Error::WindowOutOfRange {
            start: window_start,
            len: window_len,
            horizon: reference.len(),
        });
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::config(e.to_string()))?;
    let values: Vec<f64> = reference[window_start..window_start + window_len]
        .iter()
        .map(|&s| {
            let eta = if noise.sigma > 0.0 {
                normal.sample(rng)
            } else {
                0.0
            };
            let mut v = s * (1.0 + eta);
            if noise.spike_prob > 0.0 && rng.random_bool(noise.spike_prob) {
                v *= noise.spike_scale;
            }
            v.max(s * 1e-6)
        })
        .collect();
    TrialObservation::single(
        consumer_id,
        categorical.provider_id(),
        window_start,
        attr,
        values,
        BTreeMap::from([(category.clone(), 1.0)]),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeMode {
    /// Post-change level scaled by `1 ± Δ`.
    Level,
    /// Level shift, deviations mirrored about the post-change mean, and a
    /// seeded smooth re-modulation.
    #[default]
    Reshape,
}

/// Smooth zero-mean modulation with unit peak over `len` days.
fn smooth_modulation<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let components: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let period = (rng.random_range(5f64.ln()..45f64.ln())).exp();
            (
                period,
                rng.random_range(0.0..TAU),
                rng.random_range(0.5..1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..len)
        .map(|t| {
            components
                .iter()
                .map(|(period, phase, weight)| weight * (TAU * t as f64 / period + phase).sin())
                .sum()
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / len.max(1) as f64;
    let peak = raw.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        return vec![0.0; len];
    }
    raw.iter().map(|v| (v - mean) / peak).collect()
}

/// Returns a new signature whose values from `change_day` on are shifted
/// (and, in reshape mode, re-modulated). Earlier days are untouched.
pub fn inject_signature_change<R: Rng + ?Sized>(
    categorical: &CategoricalSignature,
    attr: &str,
    change_day: usize,
    magnitude: f64,
    mode: ChangeMode,
    rng: &mut R,
) -> Result<CategoricalSignature> {
    let values = categorical.values(attr)?;
    if change_day >= values.len() {
        return Err(Error::DayOutOfRange {
            day: change_day,
            horizon: values.len(),
        });
    }
    if !(0.0..1.0).contains(&magnitude) {
        return Err(Error::config(format!(
            "change magnitude {magnitude} outside [0, 1)"
        )));
    }
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let level = 1.0 + sign * magnitude;
    let modulation = match mode {
        ChangeMode::Level => vec![0.0; values.len() - change_day],
        ChangeMode::Reshape => smooth_modulation(values.len() - change_day, rng),
    };
    // Reshape mirrors the post-change deviations about the segment mean
    // before modulating, so the old shape cannot survive a small Δ.
    let segment = &values[change_day..];
    let mean = segment.iter().sum::<f64>() / segment.len() as f64;
    let changed: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            if t < change_day {
                return v;
            }
            let base = match mode {
                ChangeMode::Level => v,
                ChangeMode::Reshape => (2.0 * mean - v).max(mean * 1e-3),
            };
            base * level * (1.0 + magnitude * modulation[t - change_day])
        })
        .collect();
    categorical.with_values(attr, changed)
}

/// Latent long-term performance of one provider.
///
/// Throughput per category is
/// `base · season(t) · offset_c · (1 − β_c · load_c(t))`, where `load_c` is
/// the daily average demand on the category's resource taken from a
/// partitioned workload trace.
#[derive(Debug, Clone)]
pub struct ProviderModel {
    pub provider_id: String,
    pub base: f64,
    season: Vec<f64>,
    daily_load: Vec<WorkloadRecord>,
    sensitivity: BTreeMap<WorkloadCategory, (f64, f64)>,
}

impl ProviderModel {
    pub fn generate<R: Rng + ?Sized>(
        provider_id: &str,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let base = rng.random_range(80.0..120.0);
        let weekly = (rng.random_range(0.05..0.08), rng.random_range(0.0..TAU));
        let monthly = (rng.random_range(0.01..0.03), rng.random_range(0.0..TAU));
        let yearly = (rng.random_range(0.02..0.05), rng.random_range(0.0..TAU));
        let season = (0..horizon)
            .map(|t| {
                let t = t as f64;
                1.0 + weekly.0 * (TAU * t / 7.0 + weekly.1).sin()
                    + monthly.0 * (TAU * t / 30.0 + monthly.1).sin()
                    + yearly.0 * (TAU * t / 360.0 + yearly.1).sin()
            })
            .collect();
        let trace = synthesize_workload_trace(TRACE_DAYS, rng);
        let daily_load = partition_trace(&trace, horizon)?;
        let sensitivity = WorkloadCategory::standard()
            .into_iter()
            .map(|c| {
                let beta = rng.random_range(0.05..0.15);
                let offset = rng.random_range(0.95..1.05);
                (c, (beta, offset))
            })
            .collect();
        Ok(Self {
            provider_id: provider_id.to_string(),
            base,
            season,
            daily_load,
            sensitivity,
        })
    }

    pub fn categories(&self) -> impl Iterator<Item = &WorkloadCategory> {
        self.sensitivity.keys()
    }

    /// Latent categorical signature for `category`.
    pub fn signature(
        &self,
        category: &WorkloadCategory,
        attribute: &QoSAttribute,
    ) -> Result<CategoricalSignature> {
        let (beta, offset) = *self
            .sensitivity
            .get(category)
            .ok_or_else(|| Error::config(format!("provider model has no category {category}")))?;
        let resource = category.criteria_attribute();
        let values = self
            .season
            .iter()
            .zip(&self.daily_load)
            .map(|(s, load)| {
                let l = load.get(resource).unwrap_or(0.0);
                self.base * s * offset * (1.0 - beta * l)
            })
            .collect();
        CategoricalSignature::from_values(
            &self.provider_id,
            category.clone(),
            attribute.clone(),
            values,
        )
    }
}

/// Requests issued during one trial, skewed towards `category`'s resource:
/// the dominant demand is drawn from [0.75, 1.0], the others from [0, 0.7).
pub fn synthesize_requests<R: Rng + ?Sized>(
    category: &WorkloadCategory,
    count: usize,
    first_day: usize,
    rng: &mut R,
) -> Vec<WorkloadRequest> {
    let dominant = category.criteria_attribute();
    (0..count)
        .map(|_| {
            let demands = WorkloadCategory::standard()
                .iter()
                .map(|c| {
                    let r = c.criteria_attribute();
                    let d = if r == dominant {
                        rng.random_range(0.75..=1.0)
                    } else {
                        rng.random_range(0.0..0.7)
                    };
                    (r.to_string(), d)
                })
                .collect();
            WorkloadRequest::new(first_day, demands).expect("synthetic demands lie in [0, 1]")
        })
        .collect()
}
