//! Signature change detection over cohorts of trial observations.
//!
//! Each user is matched on distance (inside / adjacent / outside the noise
//! band) and on shape (Pearson correlation against the categorical
//! signature). A majority vote picks one of four cases:
//!
//! | case | users                     | action                      |
//! |------|---------------------------|-----------------------------|
//! | 1    | inside, similar shape     | no change                   |
//! | 2    | outside, dissimilar shape | change, signature is stale  |
//! | 3    | inside, dissimilar shape  | shrink the band and retry   |
//! | 4    | adjacent, similar shape   | grow the band and retry     |
//!
//! Band edits persist only when the loop ends in case 1 or case 2.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CategoricalSignature, Signature, TrialObservation};
use crate::noise::{
    adjust_bandwidth, within_bandwidth, BandVerdict, Direction, NoiseBandwidth, RATIO_EPS,
};

pub const DEFAULT_COHORT_PERIOD: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Anomaly threshold: fraction of users that must agree on a case.
    pub th: f64,
    /// Similarity threshold: minimum Pearson correlation counted as similar.
    pub ts: f64,
    /// Multiplicative bandwidth step for cases 3 and 4.
    pub delta_d: f64,
    /// Fraction of window days that must satisfy the band.
    pub coverage_ratio: f64,
    /// Relative widening used to decide adjacency. Defaults to `delta_d`.
    pub adjacency_margin: Option<f64>,
    pub max_iters: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            th: 0.7,
            ts: 0.9,
            delta_d: 0.2,
            coverage_ratio: 0.8,
            adjacency_margin: None,
            max_iters: 10,
        }
    }
}

impl DetectionConfig {
    pub fn margin(&self) -> f64 {
        self.adjacency_margin.unwrap_or(self.delta_d)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(
            (0.5..=1.0).contains(&self.th),
            format!("th = {} outside [0.5, 1]", self.th),
        )?;
        check(
            (-1.0..=1.0).contains(&self.ts),
            format!("ts = {} outside [-1, 1]", self.ts),
        )?;
        check(
            self.delta_d > 0.0 && self.delta_d < 1.0,
            format!("delta_d = {} outside (0, 1)", self.delta_d),
        )?;
        check(
            self.coverage_ratio > 0.0 && self.coverage_ratio <= 1.0,
            format!("coverage_ratio = {} outside (0, 1]", self.coverage_ratio),
        )?;
        check(
            self.margin() >= 0.0 && self.margin().is_finite(),
            format!("adjacency_margin = {} must be >= 0", self.margin()),
        )?;
        check(self.max_iters >= 1, "max_iters must be >= 1".to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Case1,
    Case2,
    Case3,
    Case4,
    None,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Case3 => "case3",
            Case::Case4 => "case4",
            Case::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoChange,
    Change,
    Inconclusive,
}

impl Verdict {
    pub fn is_change(self) -> bool {
        self == Verdict::Change
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMatch {
    pub consumer_id: String,
    pub band_verdict: BandVerdict,
    pub distance_profile: Vec<f64>,
    pub pcc: Option<f64>,
    pub shape_similar: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseFractions {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub verdict: Verdict,
    pub iterations_used: usize,
    pub case_trace: Vec<Case>,
    pub final_bandwidth: NoiseBandwidth,
    pub cohort_day: usize,
    pub users: usize,
    /// Fractions from the last vote.
    pub fractions: CaseFractions,
}

/// One line of a detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub cohort_day: usize,
    pub verdict: Verdict,
    pub iterations: usize,
    pub case_trace: Vec<Case>,
    pub users: usize,
    pub fractions: CaseFractions,
}

impl DetectionEvent {
    /// A baseline alarm: a `change` verdict without a case vote.
    pub fn alarm(cohort_day: usize, users: usize) -> Self {
        Self {
            cohort_day,
            verdict: Verdict::Change,
            iterations: 1,
            case_trace: Vec::new(),
            users,
            fractions: CaseFractions::default(),
        }
    }
}

impl DetectionResult {
    pub fn event(&self) -> DetectionEvent {
        DetectionEvent {
            cohort_day: self.cohort_day,
            verdict: self.verdict,
            iterations: self.iterations_used,
            case_trace: self.case_trace.clone(),
            users: self.users,
            fractions: self.fractions,
        }
    }
}

fn signature_window<'a>(
    obs: &TrialObservation,
    categorical: &'a CategoricalSignature,
    attr: &str,
) -> Result<&'a [f64]> {
    let reference = categorical.values(attr)?;
    obs.check_horizon(reference.len())?;
    Ok(&reference[obs.window_start()..obs.window_start() + obs.window_len()])
}

/// `|S_c[start + i] − E[i]|` for every day of the window.
pub fn distance_profile(
    obs: &TrialObservation,
    categorical: &CategoricalSignature,
    attr: &str,
) -> Result<Vec<f64>> {
    let observed = obs.values(attr)?;
    let window = signature_window(obs, categorical, attr)?;
    Ok(window
        .iter()
        .zip(observed)
        .map(|(s, e)| (s - e).abs())
        .collect())
}

/// Pearson correlation of two equal-length series; `None` when either is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let is_constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if sxx == 0.0 || syy == 0.0 || is_constant(x) || is_constant(y) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Shape similarity between the observed window and the signature window.
pub fn shape_similarity(
    obs: &TrialObservation,
    categorical: &CategoricalSignature,
    attr: &str,
) -> Result<Option<f64>> {
    if obs.window_len() < 2 {
        return Err(Error::WindowTooShort(obs.window_len()));
    }
    let observed = obs.values(attr)?;
    let window = signature_window(obs, categorical, attr)?;
    Ok(pearson(window, observed))
}

pub fn classify_user(
    obs: &TrialObservation,
    categorical: &CategoricalSignature,
    bw: &NoiseBandwidth,
    cfg: &DetectionConfig,
) -> Result<UserMatch> {
    let attr = bw.attribute();
    let band_verdict = within_bandwidth(obs, categorical, bw, cfg.coverage_ratio, cfg.margin())?;
    let pcc = shape_similarity(obs, categorical, attr)?;
    let shape_similar = match pcc {
        Some(r) => r >= cfg.ts,
        // A flat observation tracking a flat signature is not a shape mismatch.
        None => band_verdict == BandVerdict::Inside,
    };
    Ok(UserMatch {
        consumer_id: obs.consumer_id().to_string(),
        band_verdict,
        distance_profile: distance_profile(obs, categorical, attr)?,
        pcc,
        shape_similar,
    })
}

pub fn case_fractions(matches: &[UserMatch]) -> Result<CaseFractions> {
    if matches.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut counts = [0usize; 4];
    for m in matches {
        let slot = match (m.band_verdict, m.shape_similar) {
            (BandVerdict::Inside, true) => Some(0),
            (BandVerdict::Outside | BandVerdict::Adjacent, false) => Some(1),
            (BandVerdict::Inside, false) => Some(2),
            (BandVerdict::Adjacent, true) => Some(3),
            (BandVerdict::Outside, true) => None,
        };
        if let Some(i) = slot {
            counts[i] += 1;
        }
    }
    let n = matches.len() as f64;
    Ok(CaseFractions {
        f1: counts[0] as f64 / n,
        f2: counts[1] as f64 / n,
        f3: counts[2] as f64 / n,
        f4: counts[3] as f64 / n,
    })
}

fn pick_case(fr: &CaseFractions, th: f64) -> Case {
    [
        (fr.f1, Case::Case1),
        (fr.f2, Case::Case2),
        (fr.f3, Case::Case3),
        (fr.f4, Case::Case4),
    ]
    .into_iter()
    .find(|(f, _)| *f >= th - RATIO_EPS)
    .map_or(Case::None, |(_, c)| c)
}

/// First case, in precedence order 1 > 2 > 3 > 4, whose fraction reaches `th`.
pub fn vote_case(matches: &[UserMatch], th: f64) -> Result<Case> {
    if !(0.5..=1.0).contains(&th) {
        return Err(Error::config(format!("th = {th} outside [0.5, 1]")));
    }
    Ok(pick_case(&case_fractions(matches)?, th))
}

/// Runs the classify / vote / adjust loop on one cohort. `cohort_day` is the
/// latest window end in the cohort; [`monitor_stream`] overrides it with the
/// period end.
pub fn detect_change(
    cohort: &[TrialObservation],
    categorical: &CategoricalSignature,
    bw: &NoiseBandwidth,
    cfg: &DetectionConfig,
) -> Result<DetectionResult> {
    cfg.validate()?;
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let cohort_day = cohort
        .iter()
        .map(TrialObservation::window_end)
        .max()
        .unwrap_or_default();
    let mut current = bw.clone();
    let mut trace = Vec::new();
    let mut fractions = CaseFractions::default();

    for round in 1..=cfg.max_iters {
        let matches = cohort
            .iter()
            .map(|o| classify_user(o, categorical, &current, cfg))
            .collect::<Result<Vec<_>>>()?;
        fractions = case_fractions(&matches)?;
        let case = pick_case(&fractions, cfg.th);
        trace.push(case);
        let terminal = match case {
            Case::Case1 => Some(Verdict::NoChange),
            Case::Case2 => Some(Verdict::Change),
            Case::None => Some(Verdict::Inconclusive),
            Case::Case3 => {
                current = adjust_bandwidth(&current, Direction::Shrink, cfg.delta_d)?;
                None
            }
            Case::Case4 => {
                current = adjust_bandwidth(&current, Direction::Grow, cfg.delta_d)?;
                None
            }
        };
        if let Some(verdict) = terminal {
            let final_bandwidth = if verdict == Verdict::Inconclusive {
                bw.clone()
            } else {
                current
            };
            return Ok(DetectionResult {
                verdict,
                iterations_used: round,
                case_trace: trace,
                final_bandwidth,
                cohort_day,
                users: cohort.len(),
                fractions,
            });
        }
    }

    Ok(DetectionResult {
        verdict: Verdict::Inconclusive,
        iterations_used: cfg.max_iters,
        case_trace: trace,
        final_bandwidth: bw.clone(),
        cohort_day,
        users: cohort.len(),
        fractions,
    })
}

/// Groups observations into cohorts by the period containing their window
/// end and runs [`detect_change`] per cohort, threading the bandwidth.
/// Stops after the first `change` verdict.
pub fn monitor_stream(
    trials: &[TrialObservation],
    categorical: &CategoricalSignature,
    initial: &NoiseBandwidth,
    cfg: &DetectionConfig,
    cohort_period: usize,
) -> Result<Vec<DetectionResult>> {
    cfg.validate()?;
    if cohort_period == 0 {
        return Err(Error::config("cohort_period must be >= 1"));
    }
    if let Some(index) = trials
        .windows(2)
        .position(|w| w[1].window_end() < w[0].window_end())
    {
        return Err(Error::Unsorted { index: index + 1 });
    }

    let mut results = Vec::new();
    let mut bandwidth = initial.clone();
    let mut rest = trials;
    while let Some(first) = rest.first() {
        let period = first.window_end() / cohort_period;
        let split = rest
            .iter()
            .position(|o| o.window_end() / cohort_period != period)
            .unwrap_or(rest.len());
        let (cohort, tail) = rest.split_at(split);
        rest = tail;

        let mut result = detect_change(cohort, categorical, &bandwidth, cfg)?;
        result.cohort_day = (period + 1) * cohort_period - 1;
        bandwidth = result.final_bandwidth.clone();
        let stop = result.verdict.is_change();
        results.push(result);
        if stop {
            break;
        }
    }
    Ok(results)
}
