//! Trial scheduling over the monitoring year.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSlot {
    pub consumer_id: String,
    pub provider_id: String,
    pub window_start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleShape {
    pub horizon: usize,
    pub providers: usize,
    pub consumers: usize,
    pub trial_len: usize,
    pub cohort_period: usize,
}

pub fn provider_id(index: usize) -> String {
    format!("p{index:02}")
}

/// Cohort periods that can hold the end of a full trial window.
fn feasible_periods(shape: &ScheduleShape) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    let periods = shape.horizon.div_ceil(shape.cohort_period);
    (0..periods).filter_map(move |p| {
        let lo = (p * shape.cohort_period).max(shape.trial_len - 1);
        let hi = ((p + 1) * shape.cohort_period - 1).min(shape.horizon - 1);
        (lo <= hi).then_some((p, lo, hi))
    })
}

/// In every cohort period each consumer runs one trial on every provider,
/// with the window end drawn uniformly inside the period. Every feasible
/// period therefore holds `consumers` trials per provider.
///
/// Consumer ids are `c{consumer}-t{period}` so each trial stays distinct
/// when written to a flat CSV.
pub fn schedule_trials<R: Rng + ?Sized>(
    shape: &ScheduleShape,
    rng: &mut R,
) -> Result<Vec<TrialSlot>> {
    if shape.consumers == 0 {
        return Err(Error::CoverageImpossible(
            "no consumers; at least 1 consumer is required per cohort period".into(),
        ));
    }
    if shape.providers == 0 {
        return Err(Error::config("providers must be >= 1"));
    }
    if shape.cohort_period == 0 {
        return Err(Error::config("cohort_period must be >= 1"));
    }
    if shape.trial_len < 2 || shape.trial_len > shape.horizon {
        return Err(Error::CoverageImpossible(format!(
            "trial length {} must lie in [2, horizon {}]",
            shape.trial_len, shape.horizon
        )));
    }
    let mut slots = Vec::new();
    for (period, lo, hi) in feasible_periods(shape) {
        for consumer in 0..shape.consumers {
            for provider in 0..shape.providers {
                let end = rng.random_range(lo..=hi);
                slots.push(TrialSlot {
                    consumer_id: format!("c{consumer:02}-t{period:02}"),
                    provider_id: provider_id(provider),
                    window_start: end + 1 - shape.trial_len,
                });
            }
        }
    }
    Ok(slots)
}
