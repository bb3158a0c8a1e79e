//! Two-sided CUSUM control chart used as the comparison baseline.
//!
//! The chart runs over residuals `E[t] − S_c[t]` with reference 0. It has no
//! notion of a noise band: every sustained or large excursion alarms.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    pub pos: f64,
    pub neg: f64,
    pub reference: f64,
    pub allowance: f64,
    pub decision_h: f64,
}

impl CusumState {
    pub fn new(reference: f64, allowance: f64, decision_h: f64) -> Result<Self> {
        if !(allowance >= 0.0 && allowance.is_finite()) {
            return Err(Error::config(format!(
                "CUSUM allowance {allowance} must be >= 0"
            )));
        }
        if !(decision_h > 0.0 && decision_h.is_finite()) {
            return Err(Error::config(format!(
                "CUSUM decision threshold {decision_h} must be > 0"
            )));
        }
        if !reference.is_finite() {
            return Err(Error::NonFinite(reference));
        }
        Ok(Self {
            pos: 0.0,
            neg: 0.0,
            reference,
            allowance,
            decision_h,
        })
    }

    fn reset(self) -> Self {
        Self {
            pos: 0.0,
            neg: 0.0,
            ..self
        }
    }
}

/// One CUSUM update. Both sums reset to zero when the step alarms.
pub fn cusum_step(state: CusumState, x: f64) -> Result<(CusumState, bool)> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    let dev = x - state.reference;
    let next = CusumState {
        pos: (state.pos + dev - state.allowance).max(0.0),
        neg: (state.neg - dev - state.allowance).max(0.0),
        ..state
    };
    let alarm = next.pos > next.decision_h || next.neg > next.decision_h;
    Ok(if alarm {
        (next.reset(), true)
    } else {
        (next, false)
    })
}

/// Allowance and decision threshold of the chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumParams {
    pub allowance: f64,
    pub decision_h: f64,
}

impl CusumParams {
    /// `κ = σ/2`, `h = 4σ`.
    pub fn from_sigma(sigma: f64) -> Self {
        Self {
            allowance: sigma / 2.0,
            decision_h: 4.0 * sigma,
        }
    }

    /// Maps an anomaly threshold in [0.6, 0.9] linearly onto `h` in [3σ, 6σ].
    /// Values outside the range extrapolate along the same line.
    pub fn for_anomaly_threshold(sigma: f64, th: f64) -> Self {
        let multiple = 3.0 + (th - 0.6) / 0.3 * 3.0;
        Self {
            allowance: sigma / 2.0,
            decision_h: multiple * sigma,
        }
    }
}

/// Sample standard deviation; used to calibrate σ from the first trial window.
pub fn estimate_sigma(residuals: &[f64]) -> Option<f64> {
    if residuals.len() < 2 {
        return None;
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

/// Indices of every alarm over a residual stream (reference 0).
pub fn baseline_detect(residuals: &[f64], allowance: f64, decision_h: f64) -> Result<Vec<usize>> {
    let mut state = CusumState::new(0.0, allowance, decision_h)?;
    let mut alarms = Vec::new();
    for (i, &x) in residuals.iter().enumerate() {
        let (next, alarm) = cusum_step(state, x)?;
        state = next;
        if alarm {
            alarms.push(i);
        }
    }
    Ok(alarms)
}
