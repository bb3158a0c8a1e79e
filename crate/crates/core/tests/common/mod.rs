//! Brute-force oracles and property checks shared by the integration tests
//! and the acceptance target.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod invariants;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigwatch::baseline::{cusum_step, CusumState};
use sigwatch::detect::{distance_profile, shape_similarity, vote_case, Case, UserMatch};
use sigwatch::noise::{within_bandwidth, BandVerdict, NoiseBandwidth};
use sigwatch::{CategoricalSignature, QoSAttribute, TrialObservation, WorkloadCategory};

pub const ORACLE_CASES: usize = 1000;
pub const TOL: f64 = 1e-9;
pub const MAX_WINDOW: usize = 10;
pub const MAX_USERS: usize = 12;
const MAX_HORIZON: usize = 20;

pub fn attr() -> QoSAttribute {
    QoSAttribute::new("t", "u").unwrap()
}

pub fn signature(values: Vec<f64>) -> CategoricalSignature {
    CategoricalSignature::from_values("p", WorkloadCategory::Cpu, attr(), values).unwrap()
}

pub fn observation(start: usize, values: Vec<f64>) -> TrialObservation {
    TrialObservation::single(
        "u",
        "p",
        start,
        "t",
        values,
        BTreeMap::from([(WorkloadCategory::Cpu, 1.0)]),
    )
    .unwrap()
}

/// Textbook sums-of-products Pearson, written independently of the library.
/// Both series are shifted by their first element first; the raw-sum form
/// cancels badly on nearly flat windows.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (a, b) = (x[i] - x[0], y[i] - y[0]);
        sx += a;
        sy += b;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    let flat = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if flat(x) || flat(y) {
        return None;
    }
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    Some((num / den).clamp(-1.0, 1.0))
}

pub fn oracle_distance(sig: &[f64], start: usize, obs: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..obs.len() {
        let d = sig[start + i] - obs[i];
        out.push(if d < 0.0 { -d } else { d });
    }
    out
}

/// Smallest hit count `k` with `k / len >= ratio − 1e-9`.
fn required_hits(ratio: f64, len: usize) -> usize {
    (0..=len)
        .find(|k| *k as f64 / len as f64 >= ratio - 1e-9)
        .unwrap_or(len + 1)
}

pub fn oracle_within(
    sig: &[f64],
    start: usize,
    obs: &[f64],
    upper: &[f64],
    lower: &[f64],
    coverage: f64,
    margin: f64,
) -> BandVerdict {
    let mut strict = 0;
    let mut relaxed = 0;
    for i in 0..obs.len() {
        let t = start + i;
        let (up, lo) = (upper[t], lower[t]);
        let s = sig[t];
        let e = obs[i];
        let above = e >= s;
        if (above && e - s <= up) || (!above && s - e <= lo) {
            strict += 1;
        }
        if (above && e - s <= up * (1.0 + margin)) || (!above && s - e <= lo * (1.0 + margin)) {
            relaxed += 1;
        }
    }
    let need = required_hits(coverage, obs.len());
    if strict >= need {
        BandVerdict::Inside
    } else if relaxed >= need {
        BandVerdict::Adjacent
    } else {
        BandVerdict::Outside
    }
}

pub fn oracle_vote(users: &[(BandVerdict, bool)], th: f64) -> Case {
    let n = users.len();
    let count = |band: &[BandVerdict], similar: bool| {
        users
            .iter()
            .filter(|(b, s)| band.contains(b) && *s == similar)
            .count()
    };
    let tallies = [
        (count(&[BandVerdict::Inside], true), Case::Case1),
        (
            count(&[BandVerdict::Outside, BandVerdict::Adjacent], false),
            Case::Case2,
        ),
        (count(&[BandVerdict::Inside], false), Case::Case3),
        (count(&[BandVerdict::Adjacent], true), Case::Case4),
    ];
    let need = required_hits(th, n);
    for (k, case) in tallies {
        if k >= need {
            return case;
        }
    }
    Case::None
}

pub fn oracle_cusum(
    pos: f64,
    neg: f64,
    reference: f64,
    k: f64,
    h: f64,
    x: f64,
) -> (f64, f64, bool) {
    let mut p = pos + (x - reference) - k;
    if p < 0.0 {
        p = 0.0;
    }
    let mut q = neg + (reference - x) - k;
    if q < 0.0 {
        q = 0.0;
    }
    if p > h || q > h {
        (0.0, 0.0, true)
    } else {
        (p, q, false)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * (1.0 + a.abs().max(b.abs()))
}

fn band_levels(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let base = rng.random_range(1.0..200.0);
    let wiggle = rng.random_range(0.02..0.3);
    (0..n)
        .map(|_| base * (1.0 + rng.random_range(-wiggle..=wiggle)))
        .collect()
}

/// Mismatch count between library and oracle over random cases.
pub fn check_distance(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .filter(|_| {
            let horizon = rng.random_range(2..=MAX_HORIZON);
            let sig = band_levels(&mut rng, horizon);
            let len = rng.random_range(1..=horizon.min(MAX_WINDOW));
            let start = rng.random_range(0..=horizon - len);
            let obs = band_levels(&mut rng, len);
            let got = distance_profile(
                &observation(start, obs.clone()),
                &signature(sig.clone()),
                "t",
            )
            .unwrap();
            let want = oracle_distance(&sig, start, &obs);
            got.len() != want.len() || got.iter().zip(&want).any(|(a, b)| !close(*a, *b))
        })
        .count()
}

pub fn check_pearson(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .filter(|_| {
            let horizon = rng.random_range(2..=MAX_HORIZON);
            let mut sig = band_levels(&mut rng, horizon);
            let len = rng.random_range(2..=horizon.min(MAX_WINDOW));
            let start = rng.random_range(0..=horizon - len);
            let mut obs: Vec<f64> = sig[start..start + len]
                .iter()
                .map(|s| s * rng.random_range(0.8..1.2) + rng.random_range(-5.0..5.0))
                .map(|v: f64| v.abs() + 0.1)
                .collect();
            match rng.random_range(0..10) {
                0 => obs.iter_mut().for_each(|v| *v = 7.0),
                1 => sig[start..start + len].iter_mut().for_each(|v| *v = 3.0),
                _ => {}
            }
            let got = shape_similarity(
                &observation(start, obs.clone()),
                &signature(sig.clone()),
                "t",
            )
            .unwrap();
            let want = oracle_pearson(&sig[start..start + len], &obs);
            match (got, want) {
                (None, None) => false,
                (Some(a), Some(b)) => (a - b).abs() > TOL,
                _ => true,
            }
        })
        .count()
}

pub fn check_within(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .filter(|_| {
            let horizon = rng.random_range(2..=MAX_HORIZON);
            let sig = band_levels(&mut rng, horizon);
            let upper: Vec<f64> = sig
                .iter()
                .map(|s| s * rng.random_range(0.01..0.2))
                .collect();
            let lower: Vec<f64> = sig
                .iter()
                .map(|s| s * rng.random_range(0.01..0.2))
                .collect();
            let len = rng.random_range(1..=horizon.min(MAX_WINDOW));
            let start = rng.random_range(0..=horizon - len);
            let spread = rng.random_range(0.0..0.4);
            let obs: Vec<f64> = sig[start..start + len]
                .iter()
                .map(|s| s * (1.0 + rng.random_range(-spread..=spread)))
                .map(|v: f64| v.max(1e-6))
                .collect();
            let coverage = [0.5, 0.8, 1.0, rng.random_range(0.05..1.0)][rng.random_range(0..4)];
            let margin = rng.random_range(0.0..1.0);
            let categorical = signature(sig.clone());
            let bw = NoiseBandwidth::from_distances(
                &categorical,
                "t",
                upper.clone(),
                lower.clone(),
                1e-3,
                1.0,
            )
            .unwrap();
            let got = within_bandwidth(
                &observation(start, obs.clone()),
                &categorical,
                &bw,
                coverage,
                margin,
            )
            .unwrap();
            got != oracle_within(&sig, start, &obs, bw.upper(), bw.lower(), coverage, margin)
        })
        .count()
}

pub fn check_vote(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = [
        BandVerdict::Inside,
        BandVerdict::Adjacent,
        BandVerdict::Outside,
    ];
    (0..cases)
        .filter(|_| {
            let n = rng.random_range(1..=MAX_USERS);
            // Skew towards one class so every case occurs.
            let favourite = (bands[rng.random_range(0..3)], rng.random_bool(0.5));
            let users: Vec<(BandVerdict, bool)> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        favourite
                    } else {
                        (bands[rng.random_range(0..3)], rng.random_bool(0.5))
                    }
                })
                .collect();
            let th = [0.6, 0.7, 0.8, 0.9, 1.0, rng.random_range(0.5..=1.0)][rng.random_range(0..6)];
            let matches: Vec<UserMatch> = users
                .iter()
                .map(|(b, s)| UserMatch {
                    consumer_id: String::new(),
                    band_verdict: *b,
                    distance_profile: Vec::new(),
                    pcc: None,
                    shape_similar: *s,
                })
                .collect();
            vote_case(&matches, th).unwrap() != oracle_vote(&users, th)
        })
        .count()
}

pub fn check_cusum(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .filter(|_| {
            let reference = rng.random_range(-10.0..10.0);
            let k = rng.random_range(0.0..2.0);
            let h = rng.random_range(0.1..10.0);
            let mut state = CusumState::new(reference, k, h).unwrap();
            let (mut p, mut q) = (0.0, 0.0);
            let steps = rng.random_range(1..40);
            (0..steps).any(|_| {
                let x = reference + rng.random_range(-4.0..4.0);
                let (next, alarm) = cusum_step(state, x).unwrap();
                let (op, oq, oalarm) = oracle_cusum(p, q, reference, k, h, x);
                state = next;
                p = op;
                q = oq;
                alarm != oalarm || !close(next.pos, op) || !close(next.neg, oq)
            })
        })
        .count()
}

/// Every oracle comparison with its mismatch count.
pub fn oracle_suite(cases: usize) -> Vec<(&'static str, usize)> {
    vec![
        ("distance_profile", check_distance(cases, 11)),
        ("shape_similarity", check_pearson(cases, 12)),
        ("within_bandwidth", check_within(cases, 13)),
        ("vote_case", check_vote(cases, 14)),
        ("cusum_step", check_cusum(cases, 15)),
    ]
}
