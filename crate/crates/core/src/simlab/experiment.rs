use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::{provider_id, schedule_trials};
use super::synth::{
    inject_signature_change, synthesize_observation, synthesize_requests, NoiseModel, ProviderModel,
};
use super::{stream_seed, ExperimentConfig, Stream};
use crate::baseline::{baseline_detect, estimate_sigma, CusumParams};
use crate::detect::{monitor_stream, DetectionConfig, DetectionEvent, Verdict};
use crate::error::{Error, Result};
use crate::model::{
    CategoricalSignature, GeneralSignature, QoSAttribute, Signature, Timeline, TrialObservation,
    WorkloadCategory,
};
use crate::noise::{initial_bandwidth, BandwidthSnapshot, NoiseBandwidth};
use crate::siggen::{
    category_mix_from_requests, generate_categorical_signature, generate_general_signature,
    CategoryCriteria,
};

/// Everything one provider contributes to one repetition, independent of
/// detector thresholds.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub repetition: usize,
    pub provider_id: String,
    pub general: GeneralSignature,
    /// Categorical signature estimated from the warm-up year.
    pub categorical: CategoricalSignature,
    pub initial_bandwidth: NoiseBandwidth,
    /// Monitoring-year trials sorted by window end.
    pub trials: Vec<TrialObservation>,
    pub injected_day: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortVerdict {
    pub cohort_day: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRun {
    pub repetition: usize,
    pub provider_id: String,
    pub injected_day: Option<usize>,
    pub detected_day: Option<usize>,
    pub delay: Option<usize>,
    pub true_positive: bool,
    pub false_positives: usize,
    pub missed: bool,
    pub events: Vec<DetectionEvent>,
    pub final_bandwidth: BandwidthSnapshot,
}

impl ProviderRun {
    pub fn verdict_history(&self) -> Vec<CohortVerdict> {
        self.events
            .iter()
            .map(|e| CohortVerdict {
                cohort_day: e.cohort_day,
                verdict: e.verdict,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub injected: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub missed: usize,
    /// `true_positives / injected`; `None` without injected changes.
    pub accuracy: Option<f64>,
    /// Mean delay over true positives.
    pub mean_delay: Option<f64>,
}

impl Metrics {
    pub fn from_runs(runs: &[ProviderRun]) -> Self {
        let injected = runs.iter().filter(|r| r.injected_day.is_some()).count();
        let true_positives = runs.iter().filter(|r| r.true_positive).count();
        let delays: Vec<usize> = runs.iter().filter_map(|r| r.delay).collect();
        Self {
            injected,
            true_positives,
            false_positives: runs.iter().map(|r| r.false_positives).sum(),
            missed: runs.iter().filter(|r| r.missed).count(),
            accuracy: (injected > 0).then(|| true_positives as f64 / injected as f64),
            mean_delay: (!delays.is_empty())
                .then(|| delays.iter().sum::<usize>() as f64 / delays.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub runs: Vec<ProviderRun>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ts: f64,
    pub th: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub detector: String,
    pub ts: f64,
    pub th: f64,
    pub metrics: Metrics,
}

/// Warm-up consumers sharing each window start, so every day is covered by
/// at least two trials.
const WARMUP_USERS_PER_START: usize = 2;

fn warmup_starts(horizon: usize, trial_len: usize, stride: usize) -> Vec<usize> {
    let last = horizon - trial_len;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

fn build_scenario(cfg: &ExperimentConfig, repetition: usize, provider: usize) -> Result<Scenario> {
    let pid = provider_id(provider);
    let attribute = QoSAttribute::new(cfg.attribute.clone(), cfg.unit.clone())?;
    let timeline = Timeline::new(cfg.horizon)?;
    let seed = |s| ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, repetition, provider, s));

    let model = ProviderModel::generate(&pid, cfg.horizon, &mut seed(Stream::Model))?;
    let criteria = CategoryCriteria::uniform(cfg.min_demand)?;

    // Dense, spike-free warm-up year feeding signature generation.
    let mut rng = seed(Stream::Warmup);
    let warmup_noise = NoiseModel {
        sigma: cfg.noise_sigma,
        ..NoiseModel::NONE
    };
    let mut warmup = Vec::new();
    let categories: Vec<WorkloadCategory> = model.categories().cloned().collect();
    for category in &categories {
        let truth = model.signature(category, &attribute)?;
        let starts = warmup_starts(cfg.horizon, cfg.trial_len, cfg.warmup_stride);
        for (i, start) in starts
            .into_iter()
            .flat_map(|s| [s; WARMUP_USERS_PER_START])
            .enumerate()
        {
            let id = format!("w-{category}-{i:03}");
            let obs = synthesize_observation(
                &truth,
                &attribute.id,
                &id,
                start,
                cfg.trial_len,
                category,
                &warmup_noise,
                &mut rng,
            )?;
            let requests = synthesize_requests(category, cfg.requests_per_trial, start, &mut rng);
            let mix = category_mix_from_requests(&requests, &criteria);
            warmup.push(TrialObservation::single(
                id,
                &pid,
                start,
                &attribute.id,
                obs.values(&attribute.id)?.to_vec(),
                mix,
            )?);
        }
    }
    let attrs = [attribute.clone()];
    let general = generate_general_signature(&warmup, &pid, &attrs, timeline)?;
    let categorical = generate_categorical_signature(
        &warmup,
        &pid,
        &cfg.category,
        cfg.dominance,
        &attrs,
        timeline,
    )?;
    let initial = initial_bandwidth(&general, &categorical, &attribute.id, cfg.floor, cfg.cap)?;

    let mut truth = model.signature(&cfg.category, &attribute)?;
    let mut injected_day = None;
    if let Some(first) = cfg.change_day {
        let mut rng = seed(Stream::Change);
        let last = (first + cfg.change_day_spread).min(cfg.horizon - 1);
        let day = rand::Rng::random_range(&mut rng, first..=last);
        truth = inject_signature_change(
            &truth,
            &attribute.id,
            day,
            cfg.change_magnitude,
            cfg.change_mode,
            &mut rng,
        )?;
        injected_day = Some(day);
    }

    // The schedule is drawn per repetition so all providers share one calendar.
    let slots = schedule_trials(
        &cfg.schedule_shape(),
        &mut ChaCha8Rng::seed_from_u64(stream_seed(
            cfg.seed,
            repetition,
            usize::MAX,
            Stream::Schedule,
        )),
    )?;
    let noise = cfg.noise();
    let mut rng = seed(Stream::Monitor);
    let mut trials = slots
        .iter()
        .filter(|s| s.provider_id == pid)
        .map(|s| {
            synthesize_observation(
                &truth,
                &attribute.id,
                &s.consumer_id,
                s.window_start,
                cfg.trial_len,
                &cfg.category,
                &noise,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by(|a, b| {
        a.window_end()
            .cmp(&b.window_end())
            .then_with(|| a.consumer_id().cmp(b.consumer_id()))
    });

    Ok(Scenario {
        repetition,
        provider_id: pid,
        general,
        categorical,
        initial_bandwidth: initial,
        trials,
        injected_day,
    })
}

/// Builds every `(repetition, provider)` scenario of a configuration.
pub fn prepare_scenarios(cfg: &ExperimentConfig) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.repetitions)
        .flat_map(|r| (0..cfg.providers).map(move |p| (r, p)))
        .collect();
    jobs.into_par_iter()
        .map(|(r, p)| build_scenario(cfg, r, p))
        .collect()
}

fn attribute_of(scenario: &Scenario) -> &str {
    scenario.initial_bandwidth.attribute()
}

fn score_proposed(
    scenario: &Scenario,
    detection: &DetectionConfig,
    cohort_period: usize,
) -> Result<ProviderRun> {
    let results = monitor_stream(
        &scenario.trials,
        &scenario.categorical,
        &scenario.initial_bandwidth,
        detection,
        cohort_period,
    )?;
    let first_change = results
        .iter()
        .find(|r| r.verdict.is_change())
        .map(|r| r.cohort_day);
    let (true_positive, false_positives, missed, delay) =
        match (scenario.injected_day, first_change) {
            (None, None) => (false, 0, false, None),
            (None, Some(_)) => (false, 1, false, None),
            (Some(_), None) => (false, 0, true, None),
            (Some(d), Some(c)) if c >= d => (true, 0, false, Some(c - d)),
            // Monitoring halts on the early verdict, so the real change is missed too.
            (Some(_), Some(_)) => (false, 1, true, None),
        };
    let final_bandwidth = results
        .last()
        .map(|r| r.final_bandwidth.snapshot())
        .unwrap_or_else(|| scenario.initial_bandwidth.snapshot());
    Ok(ProviderRun {
        repetition: scenario.repetition,
        provider_id: scenario.provider_id.clone(),
        injected_day: scenario.injected_day,
        detected_day: true_positive.then_some(first_change).flatten(),
        delay,
        true_positive,
        false_positives,
        missed,
        events: results.iter().map(|r| r.event()).collect(),
        final_bandwidth,
    })
}

/// Scores the proposed detector on prepared scenarios.
pub fn score_detector(
    scenarios: &[Scenario],
    detection: &DetectionConfig,
    cohort_period: usize,
) -> Result<ExperimentResult> {
    let runs = scenarios
        .par_iter()
        .map(|s| score_proposed(s, detection, cohort_period))
        .collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::from_runs(&runs);
    Ok(ExperimentResult { runs, metrics })
}

fn residual_stream(scenario: &Scenario) -> Result<(Vec<f64>, Vec<usize>)> {
    let attr = attribute_of(scenario);
    let reference = scenario.categorical.values(attr)?;
    let mut residuals = Vec::new();
    let mut owner = Vec::new();
    for (k, obs) in scenario.trials.iter().enumerate() {
        for (i, e) in obs.values(attr)?.iter().enumerate() {
            residuals.push(e - reference[obs.window_start() + i]);
            owner.push(k);
        }
    }
    Ok((residuals, owner))
}

fn score_cusum(
    scenario: &Scenario,
    sigma_to_params: impl Fn(f64) -> CusumParams,
    cohort_period: usize,
) -> Result<ProviderRun> {
    let (residuals, owner) = residual_stream(scenario)?;
    let first_len = scenario
        .trials
        .first()
        .map_or(0, TrialObservation::window_len);
    let scale = scenario
        .categorical
        .values(attribute_of(scenario))?
        .iter()
        .sum::<f64>()
        / scenario.categorical.horizon() as f64;
    let sigma = estimate_sigma(&residuals[..first_len])
        .unwrap_or(0.0)
        .max(scale * 1e-9);
    let params = sigma_to_params(sigma);
    let alarms = baseline_detect(&residuals, params.allowance, params.decision_h)?;

    // One change verdict per cohort with at least one alarm.
    let mut events: Vec<DetectionEvent> = Vec::new();
    for idx in alarms {
        let obs = &scenario.trials[owner[idx]];
        let cohort_day = (obs.window_end() / cohort_period + 1) * cohort_period - 1;
        match events.last_mut() {
            Some(e) if e.cohort_day == cohort_day => e.iterations += 1,
            _ => {
                let users = scenario
                    .trials
                    .iter()
                    .filter(|o| o.window_end() / cohort_period == obs.window_end() / cohort_period)
                    .count();
                events.push(DetectionEvent::alarm(cohort_day, users));
            }
        }
    }

    let mut false_positives = 0;
    let mut detected = None;
    let mut kept = Vec::new();
    for e in events {
        let cohort_day = e.cohort_day;
        kept.push(e);
        match scenario.injected_day {
            Some(d) if cohort_day >= d => {
                detected = Some(cohort_day);
                break;
            }
            _ => false_positives += 1,
        }
    }
    let delay = match (scenario.injected_day, detected) {
        (Some(d), Some(c)) => Some(c - d),
        _ => None,
    };
    Ok(ProviderRun {
        repetition: scenario.repetition,
        provider_id: scenario.provider_id.clone(),
        injected_day: scenario.injected_day,
        detected_day: detected,
        delay,
        true_positive: detected.is_some(),
        false_positives,
        missed: scenario.injected_day.is_some() && detected.is_none(),
        events: kept,
        final_bandwidth: scenario.initial_bandwidth.snapshot(),
    })
}

/// Scores the CUSUM baseline with `κ` and `h` given in units of the residual
/// σ calibrated on the first trial window. Alarms before the injected day
/// count as false positives; monitoring continues past them.
pub fn score_baseline(
    scenarios: &[Scenario],
    allowance_sigmas: f64,
    h_sigmas: f64,
    cohort_period: usize,
) -> Result<ExperimentResult> {
    if !(allowance_sigmas >= 0.0 && h_sigmas > 0.0) {
        return Err(Error::config("baseline allowance must be >= 0 and h > 0"));
    }
    let runs = scenarios
        .par_iter()
        .map(|s| {
            score_cusum(
                s,
                |sigma| CusumParams {
                    allowance: allowance_sigmas * sigma,
                    decision_h: h_sigmas * sigma,
                },
                cohort_period,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::from_runs(&runs);
    Ok(ExperimentResult { runs, metrics })
}

/// Prepares the scenarios and scores the proposed detector at `cfg.detection`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let scenarios = prepare_scenarios(cfg)?;
    score_detector(&scenarios, &cfg.detection, cfg.cohort_period)
}

/// Scores every `(ts, th)` in the configured grid on one shared set of
/// scenarios (common random numbers).
pub fn sweep_thresholds(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let scenarios = prepare_scenarios(cfg)?;
    sweep_on(&scenarios, cfg)
}

fn grid(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    cfg.ts_range
        .iter()
        .flat_map(|&ts| cfg.th_range.iter().map(move |&th| (ts, th)))
        .collect()
}

fn sweep_on(scenarios: &[Scenario], cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    grid(cfg)
        .into_iter()
        .map(|(ts, th)| {
            let detection = cfg.with_thresholds(ts, th).detection;
            let result = score_detector(scenarios, &detection, cfg.cohort_period)?;
            Ok(SweepPoint {
                ts,
                th,
                metrics: result.metrics,
            })
        })
        .collect()
}

/// Both detectors over the threshold grid on shared scenarios. The baseline
/// maps `th` linearly from [0.6, 0.9] onto `h` in [3σ, 6σ] and ignores `ts`.
pub fn compare_detectors(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let scenarios = prepare_scenarios(cfg)?;
    let mut rows: Vec<ComparisonRow> = sweep_on(&scenarios, cfg)?
        .into_iter()
        .map(|p| ComparisonRow {
            detector: "proposed".into(),
            ts: p.ts,
            th: p.th,
            metrics: p.metrics,
        })
        .collect();
    for (ts, th) in grid(cfg) {
        let runs = scenarios
            .par_iter()
            .map(|s| {
                score_cusum(
                    s,
                    |sigma| {
                        let mut p = CusumParams::for_anomaly_threshold(sigma, th);
                        p.allowance = cfg.baseline_allowance * sigma;
                        p
                    },
                    cfg.cohort_period,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ComparisonRow {
            detector: "baseline".into(),
            ts,
            th,
            metrics: Metrics::from_runs(&runs),
        });
    }
    Ok(rows)
}
