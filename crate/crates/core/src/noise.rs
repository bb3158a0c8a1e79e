//! Performance noise bandwidth around a categorical signature.
//!
//! The band is stored per day as distances `upper` (d+) and `lower` (d−)
//! from the categorical value. Both are clamped to
//! `[floor · S_c[t], cap · S_c[t]]`, so `floor` and `cap` are fractions of
//! the categorical value on that day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CategoricalSignature, GeneralSignature, Signature, TrialObservation, WorkloadCategory,
};

pub const DEFAULT_FLOOR: f64 = 0.01;
pub const DEFAULT_CAP: f64 = 0.5;

/// Tolerance used when comparing a day fraction against a coverage ratio.
pub(crate) const RATIO_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBandwidth {
    provider_id: String,
    category: WorkloadCategory,
    attribute: String,
    floor: f64,
    cap: f64,
    reference: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandVerdict {
    Inside,
    Adjacent,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Grow,
    Shrink,
}

/// Serialized view of a bandwidth for inspection and plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSnapshot {
    pub provider_id: String,
    pub category: WorkloadCategory,
    pub attribute: String,
    pub floor: f64,
    pub cap: f64,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

fn check_limits(floor: f64, cap: f64) -> Result<()> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::config(format!(
            "bandwidth floor must be > 0, got {floor}"
        )));
    }
    if !(cap >= floor && cap.is_finite()) {
        return Err(Error::config(format!(
            "bandwidth cap {cap} must be finite and >= floor {floor}"
        )));
    }
    Ok(())
}

impl NoiseBandwidth {
    /// Builds a band from explicit distances, clamping each day.
    pub fn from_distances(
        categorical: &CategoricalSignature,
        attr: &str,
        upper: Vec<f64>,
        lower: Vec<f64>,
        floor: f64,
        cap: f64,
    ) -> Result<Self> {
        check_limits(floor, cap)?;
        let reference = categorical.values(attr)?.to_vec();
        for len in [upper.len(), lower.len()] {
            if len != reference.len() {
                return Err(Error::HorizonMismatch {
                    left: len,
                    right: reference.len(),
                });
            }
        }
        let mut bw = Self {
            provider_id: categorical.provider_id().to_string(),
            category: categorical.workload().clone(),
            attribute: attr.to_string(),
            floor,
            cap,
            reference,
            upper,
            lower,
        };
        bw.clamp_all();
        Ok(bw)
    }

    /// Rebuilds a band from a snapshot and its categorical signature.
    pub fn from_snapshot(
        snapshot: BandwidthSnapshot,
        categorical: &CategoricalSignature,
    ) -> Result<Self> {
        Self::from_distances(
            categorical,
            &snapshot.attribute,
            snapshot.upper,
            snapshot.lower,
            snapshot.floor,
            snapshot.cap,
        )
    }

    fn clamp_all(&mut self) {
        for t in 0..self.reference.len() {
            let (lo, hi) = self.limits(t);
            self.upper[t] = self.upper[t].clamp(lo, hi);
            self.lower[t] = self.lower[t].clamp(lo, hi);
        }
    }

    /// Allowed range `[floor·S_c[t], cap·S_c[t]]` for either side on day `t`.
    pub fn limits(&self, t: usize) -> (f64, f64) {
        let s = self.reference[t];
        (self.floor * s, self.cap * s)
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn horizon(&self) -> usize {
        self.reference.len()
    }

    pub fn snapshot(&self) -> BandwidthSnapshot {
        BandwidthSnapshot {
            provider_id: self.provider_id.clone(),
            category: self.category.clone(),
            attribute: self.attribute.clone(),
            floor: self.floor,
            cap: self.cap,
            upper: self.upper.clone(),
            lower: self.lower.clone(),
        }
    }
}

/// Initial symmetric band from the per-day distance between the general and
/// categorical signatures.
pub fn initial_bandwidth(
    general: &GeneralSignature,
    categorical: &CategoricalSignature,
    attr: &str,
    floor: f64,
    cap: f64,
) -> Result<NoiseBandwidth> {
    let g = general.values(attr)?;
    let c = categorical.values(attr)?;
    if g.len() != c.len() {
        return Err(Error::HorizonMismatch {
            left: g.len(),
            right: c.len(),
        });
    }
    let distance: Vec<f64> = g.iter().zip(c).map(|(a, b)| (a - b).abs()).collect();
    NoiseBandwidth::from_distances(categorical, attr, distance.clone(), distance, floor, cap)
}

fn days_meeting(required_ratio: f64, hits: usize, len: usize) -> bool {
    hits as f64 / len as f64 >= required_ratio - RATIO_EPS
}

/// Classifies one observation against the band.
///
/// `inside` when the band holds on at least `coverage` of the window days;
/// `adjacent` when only the band widened by `(1 + margin)` does; otherwise
/// `outside`.
pub fn within_bandwidth(
    obs: &TrialObservation,
    categorical: &CategoricalSignature,
    bw: &NoiseBandwidth,
    coverage: f64,
    margin: f64,
) -> Result<BandVerdict> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config(format!(
            "coverage ratio {coverage} outside (0, 1]"
        )));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::config(format!(
            "adjacency margin {margin} must be >= 0"
        )));
    }
    if obs.window_len() == 0 {
        return Err(Error::EmptyWindow);
    }
    let horizon = categorical.horizon();
    if bw.horizon() != horizon {
        return Err(Error::HorizonMismatch {
            left: bw.horizon(),
            right: horizon,
        });
    }
    obs.check_horizon(horizon)?;
    let observed = obs.values(&bw.attribute)?;
    let reference = categorical.values(&bw.attribute)?;
    let start = obs.window_start();

    let mut strict = 0;
    let mut relaxed = 0;
    let widen = 1.0 + margin;
    for (i, &e) in observed.iter().enumerate() {
        let t = start + i;
        let s = reference[t];
        let deviation = e - s;
        let allowed = if deviation >= 0.0 {
            bw.upper[t]
        } else {
            bw.lower[t]
        };
        if deviation.abs() <= allowed {
            strict += 1;
        }
        if deviation.abs() <= allowed * widen {
            relaxed += 1;
        }
    }
    let len = observed.len();
    Ok(if days_meeting(coverage, strict, len) {
        BandVerdict::Inside
    } else if days_meeting(coverage, relaxed, len) {
        BandVerdict::Adjacent
    } else {
        BandVerdict::Outside
    })
}

/// Scales both sides by `1 ± step` and re-clamps. Not an involution: grow
/// then shrink by the same step gives `(1 - step²)` of the original.
pub fn adjust_bandwidth(
    bw: &NoiseBandwidth,
    direction: Direction,
    step: f64,
) -> Result<NoiseBandwidth> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::config(format!(
            "bandwidth step {step} outside (0, 1)"
        )));
    }
    let factor = match direction {
        Direction::Grow => 1.0 + step,
        Direction::Shrink => 1.0 - step,
    };
    let mut next = bw.clone();
    next.upper.iter_mut().for_each(|u| *u *= factor);
    next.lower.iter_mut().for_each(|l| *l *= factor);
    next.clamp_all();
    Ok(next)
}
