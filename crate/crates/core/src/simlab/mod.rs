//! Synthetic workload-performance experiments.
//!
//! A run builds, for every repetition and provider, a latent performance
//! model, generates signatures from a dense warm-up year of trials, optionally
//! injects a change into the monitored categorical signature, synthesizes a
//! monitoring year of trials, and scores both the proposed detector and the
//! CUSUM baseline on the same traces.

mod experiment;
mod schedule;
mod synth;
mod trace;

use serde::{Deserialize, Serialize};

pub use experiment::{
    compare_detectors, prepare_scenarios, run_experiment, score_baseline, score_detector,
    sweep_thresholds, CohortVerdict, ComparisonRow, ExperimentResult, Metrics, ProviderRun,
    Scenario, SweepPoint,
};
pub use schedule::{provider_id, schedule_trials, ScheduleShape, TrialSlot};
pub use synth::{
    inject_signature_change, synthesize_observation, synthesize_requests, ChangeMode, NoiseModel,
    ProviderModel, TRACE_DAYS,
};
pub use trace::{
    partition_sizes, partition_trace, synthesize_workload_trace, WorkloadRecord,
    TRACE_SAMPLES_PER_DAY,
};

use crate::detect::{DetectionConfig, DEFAULT_COHORT_PERIOD};
use crate::error::{Error, Result};
use crate::model::{WorkloadCategory, DEFAULT_HORIZON, DEFAULT_TRIAL_LEN};
use crate::noise::{DEFAULT_CAP, DEFAULT_FLOOR};
use crate::siggen::{DEFAULT_DOMINANCE, DEFAULT_MIN_DEMAND};

/// Experiment parameters. Defaults follow the 360-day, 5-provider,
/// 18-consumer, 30-day-trial setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub providers: usize,
    /// Trial consumers per provider in every cohort period.
    pub consumers: usize,
    pub trial_len: usize,
    pub cohort_period: usize,
    /// Relative std-dev of multiplicative observation noise.
    pub noise_sigma: f64,
    pub spike_prob: f64,
    pub spike_scale: f64,
    /// Earliest injected change day; `None` for no-change runs.
    pub change_day: Option<usize>,
    /// The change day is drawn uniformly from `[change_day, change_day + spread]`.
    pub change_day_spread: usize,
    pub change_magnitude: f64,
    pub change_mode: ChangeMode,
    pub seed: u64,
    pub repetitions: usize,
    pub attribute: String,
    pub unit: String,
    /// Workload category whose signature is monitored.
    pub category: WorkloadCategory,
    pub detection: DetectionConfig,
    pub floor: f64,
    pub cap: f64,
    pub min_demand: f64,
    pub dominance: f64,
    /// Warm-up trials start every `warmup_stride` days for every category.
    pub warmup_stride: usize,
    pub requests_per_trial: usize,
    pub ts_range: Vec<f64>,
    pub th_range: Vec<f64>,
    /// CUSUM allowance in units of the calibrated residual σ.
    pub baseline_allowance: f64,
    /// CUSUM decision threshold in units of σ.
    pub baseline_h: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            providers: 5,
            consumers: 18,
            trial_len: DEFAULT_TRIAL_LEN,
            cohort_period: DEFAULT_COHORT_PERIOD,
            noise_sigma: 0.005,
            spike_prob: 0.01,
            spike_scale: 0.5,
            change_day: Some(180),
            change_day_spread: 0,
            change_magnitude: 0.2,
            change_mode: ChangeMode::Reshape,
            seed: 20_210_101,
            repetitions: 20,
            attribute: "throughput".into(),
            unit: "ops/s".into(),
            category: WorkloadCategory::Cpu,
            detection: DetectionConfig::default(),
            floor: DEFAULT_FLOOR,
            cap: DEFAULT_CAP,
            min_demand: DEFAULT_MIN_DEMAND,
            dominance: DEFAULT_DOMINANCE,
            warmup_stride: 5,
            requests_per_trial: 20,
            ts_range: vec![0.6, 0.7, 0.8, 0.9],
            th_range: vec![0.6, 0.7, 0.8, 0.9],
            baseline_allowance: 0.5,
            baseline_h: 4.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.trial_len < 2 || self.horizon < self.trial_len {
            return fail(format!(
                "need horizon ({}) >= trial_len ({}) >= 2",
                self.horizon, self.trial_len
            ));
        }
        if self.providers == 0 || self.consumers == 0 || self.repetitions == 0 {
            return fail("providers, consumers and repetitions must be >= 1".into());
        }
        if self.cohort_period == 0 || self.warmup_stride == 0 || self.warmup_stride > self.trial_len
        {
            return fail("cohort_period must be >= 1 and warmup_stride in [1, trial_len]".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.spike_prob)
            || self.spike_scale.is_nan()
            || self.spike_scale <= 0.0
        {
            return fail("spike_prob must lie in [0, 1] and spike_scale be > 0".into());
        }
        if let Some(d) = self.change_day {
            if d >= self.horizon {
                return fail(format!("change_day {d} outside [0, {})", self.horizon));
            }
        }
        if !(0.0..1.0).contains(&self.change_magnitude) {
            return fail(format!(
                "change_magnitude {} outside [0, 1)",
                self.change_magnitude
            ));
        }
        if !(self.baseline_allowance >= 0.0 && self.baseline_h > 0.0) {
            return fail("baseline_allowance must be >= 0 and baseline_h > 0".into());
        }
        if self.ts_range.is_empty() || self.th_range.is_empty() {
            return fail("threshold sweep ranges must be non-empty".into());
        }
        if let Some(ts) = self.ts_range.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return fail(format!("ts_range value {ts} outside [-1, 1]"));
        }
        if let Some(th) = self.th_range.iter().find(|v| !(0.5..=1.0).contains(*v)) {
            return fail(format!("th_range value {th} outside [0.5, 1]"));
        }
        self.detection.validate()
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma: self.noise_sigma,
            spike_prob: self.spike_prob,
            spike_scale: self.spike_scale,
        }
    }

    pub fn schedule_shape(&self) -> ScheduleShape {
        ScheduleShape {
            horizon: self.horizon,
            providers: self.providers,
            consumers: self.consumers,
            trial_len: self.trial_len,
            cohort_period: self.cohort_period,
        }
    }

    pub fn with_thresholds(&self, ts: f64, th: f64) -> Self {
        let mut cfg = self.clone();
        cfg.detection.ts = ts;
        cfg.detection.th = th;
        cfg
    }
}

/// Independent RNG stream for each part of a run.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Model = 1,
    Warmup = 2,
    Schedule = 3,
    Change = 4,
    Monitor = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(master, repetition, provider, stream)`; thresholds never enter,
/// so every grid point sees the same traces.
pub(crate) fn stream_seed(master: u64, repetition: usize, provider: usize, stream: Stream) -> u64 {
    [repetition as u64, provider as u64, stream as u64]
        .into_iter()
        .fold(splitmix(master), |acc, part| splitmix(acc ^ splitmix(part)))
}
