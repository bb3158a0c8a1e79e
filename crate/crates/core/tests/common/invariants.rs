//! Property checks run with a deterministic proptest runner.

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use sigwatch::baseline::baseline_detect;
use sigwatch::detect::{
    classify_user, detect_change, distance_profile, pearson, vote_case, Case, DetectionConfig,
    Verdict,
};
use sigwatch::model::relative_change;
use sigwatch::noise::{
    adjust_bandwidth, initial_bandwidth, within_bandwidth, BandVerdict, Direction, NoiseBandwidth,
};
use sigwatch::siggen::{
    categorize_request, generate_categorical_signature, generate_general_signature, Boundary,
    CategoryCriteria,
};
use sigwatch::simlab::{prepare_scenarios, run_experiment, ExperimentConfig};
use sigwatch::{
    GeneralSignature, Signature, SignatureSeries, Timeline, TrialObservation, WorkloadCategory,
    WorkloadRequest,
};

use super::{attr, observation, signature};

pub const CASES: u32 = 500;

pub type Check = fn() -> Result<(), String>;

fn run<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn positive_series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    vec(1.0f64..500.0, len)
}

fn rank(v: BandVerdict) -> u8 {
    match v {
        BandVerdict::Inside => 0,
        BandVerdict::Adjacent => 1,
        BandVerdict::Outside => 2,
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn relative_change_algebra() -> Result<(), String> {
    let s = positive_series(2..60).prop_flat_map(|v| {
        let n = v.len();
        (Just(v), 0..n, 0..n, 0..n, 0.01f64..100.0)
    });
    run(s, |(values, a, b, c, k)| {
        let sig = signature(values.clone());
        let rc = |s: &dyn Signature, x, y| relative_change(s, "t", x, y).unwrap();
        prop_assert_eq!(rc(&sig, a, a), 1.0);
        prop_assert!(rel_close(
            rc(&sig, a, b) * rc(&sig, b, c),
            rc(&sig, a, c),
            1e-9
        ));
        let scaled = signature(values.iter().map(|v| v * k).collect());
        prop_assert!(rel_close(rc(&scaled, a, b), rc(&sig, a, b), 1e-9));
        Ok(())
    })
}

/// Random windows plus a tiling that guarantees every day is covered.
fn trial_set() -> impl Strategy<Value = (usize, Vec<(usize, Vec<f64>)>)> {
    (4usize..40, 1usize..6).prop_flat_map(|(horizon, extra)| {
        let window =
            (1..=horizon).prop_flat_map(move |len| (0..=horizon - len, vec(1.0f64..100.0, len)));
        (Just(horizon), vec(window, extra), 1usize..=4)
            .prop_flat_map(move |(h, random, tile)| {
                let windows = random;
                let mut start = 0;
                let mut tiles = Vec::new();
                while start < h {
                    let len = tile.min(h - start);
                    tiles.push((start, len));
                    start += len;
                }
                let tiled: Vec<_> = tiles
                    .into_iter()
                    .map(|(s, len)| vec(1.0f64..100.0, len).prop_map(move |v| (s, v)))
                    .collect();
                (Just(h), Just(windows), tiled)
            })
            .prop_map(|(h, mut windows, tiled)| {
                windows.extend(tiled);
                (h, windows)
            })
    })
}

fn pure(windows: &[(usize, Vec<f64>)]) -> Vec<TrialObservation> {
    windows
        .iter()
        .enumerate()
        .map(|(i, (s, v))| {
            let mix = BTreeMap::from([(WorkloadCategory::Cpu, 1.0)]);
            TrialObservation::single(format!("u{i}"), "p", *s, "t", v.clone(), mix).unwrap()
        })
        .collect()
}

pub fn siggen_properties() -> Result<(), String> {
    let s = trial_set().prop_flat_map(|(h, windows)| {
        (Just(h), Just(windows.clone()), Just(windows).prop_shuffle())
    });
    run(s, |(horizon, windows, shuffled)| {
        let timeline = Timeline::new(horizon).unwrap();
        let obs = pure(&windows);
        let attrs = [attr()];
        let general = generate_general_signature(&obs, "p", &attrs, timeline).unwrap();
        let cat = generate_categorical_signature(
            &obs,
            "p",
            &WorkloadCategory::Cpu,
            0.5,
            &attrs,
            timeline,
        )
        .unwrap();
        prop_assert_eq!(general.values("t").unwrap(), cat.values("t").unwrap());

        let values = general.values("t").unwrap();
        for (t, v) in values.iter().enumerate() {
            let covering: Vec<f64> = windows
                .iter()
                .filter(|(s, w)| *s <= t && t < s + w.len())
                .map(|(s, w)| w[t - s])
                .collect();
            let lo = covering.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = covering.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
        }

        let permuted = generate_general_signature(&pure(&shuffled), "p", &attrs, timeline).unwrap();
        for (a, b) in permuted.values("t").unwrap().iter().zip(values) {
            prop_assert!(rel_close(*a, *b, 1e-9));
        }
        Ok(())
    })
}

pub fn categorize_monotone() -> Result<(), String> {
    let s = (vec(0.0f64..=1.0, 3), 0usize..3, 0.0f64..=1.0, 0.0f64..=1.0);
    run(s, |(d, which, bump, threshold)| {
        let keys = ["cpu", "memory", "io"];
        let req = |d: &[f64]| {
            WorkloadRequest::new(
                0,
                keys.iter()
                    .map(|k| k.to_string())
                    .zip(d.iter().copied())
                    .collect(),
            )
            .unwrap()
        };
        let criteria = CategoryCriteria::uniform(threshold).unwrap();
        let before = categorize_request(&req(&d), &criteria);
        let mut raised = d.clone();
        raised[which] = (raised[which] + bump).min(1.0);
        let after = categorize_request(&req(&raised), &criteria);
        prop_assert!(before.is_subset(&after));
        let strict: BTreeSet<_> =
            categorize_request(&req(&d), &criteria.clone().with_boundary(Boundary::Strict));
        prop_assert!(strict.is_subset(&before));
        Ok(())
    })
}

fn general_from(values: Vec<f64>) -> GeneralSignature {
    let series = SignatureSeries::new(
        values.len(),
        [sigwatch::model::AttributeSeries {
            attribute: attr(),
            values,
        }],
    )
    .unwrap();
    GeneralSignature::new("p", series)
}

pub fn bandwidth_symmetric_clamped() -> Result<(), String> {
    let s = positive_series(2..50).prop_flat_map(|c| {
        let n = c.len();
        (
            Just(c),
            vec(1.0f64..500.0, n),
            0.001f64..0.1,
            0.0f64..1.0,
            vec((any::<bool>(), 0.01f64..0.9), 0..6),
        )
    });
    run(s, |(c, g, floor, cap_frac, steps)| {
        let cap = floor + cap_frac;
        let cat = signature(c.clone());
        let mut bw = initial_bandwidth(&general_from(g), &cat, "t", floor, cap).unwrap();
        prop_assert_eq!(bw.upper(), bw.lower());
        let within = |bw: &NoiseBandwidth| {
            c.iter().enumerate().all(|(t, s)| {
                let ok = |d: f64| d >= floor * s * (1.0 - 1e-12) && d <= cap * s * (1.0 + 1e-12);
                ok(bw.upper()[t]) && ok(bw.lower()[t])
            })
        };
        prop_assert!(within(&bw));
        for (grow, step) in steps {
            let dir = if grow {
                Direction::Grow
            } else {
                Direction::Shrink
            };
            bw = adjust_bandwidth(&bw, dir, step).unwrap();
            prop_assert!(within(&bw));
        }
        Ok(())
    })
}

/// Signature, band distances and an observation window around it.
fn band_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize, Vec<f64>)> {
    positive_series(2..40).prop_flat_map(|sig| {
        let n = sig.len();
        (1..=n).prop_flat_map(move |len| {
            let sig = sig.clone();
            (
                Just(sig),
                vec(0.01f64..0.3, n),
                vec(0.01f64..0.3, n),
                0..=n - len,
                vec(-0.5f64..0.5, len),
            )
        })
    })
}

fn build_band(
    sig: &[f64],
    up: &[f64],
    lo: &[f64],
) -> (sigwatch::CategoricalSignature, NoiseBandwidth) {
    let cat = signature(sig.to_vec());
    let u = up.iter().zip(sig).map(|(f, s)| f * s).collect();
    let l = lo.iter().zip(sig).map(|(f, s)| f * s).collect();
    let bw = NoiseBandwidth::from_distances(&cat, "t", u, l, 1e-3, 1.0).unwrap();
    (cat, bw)
}

fn window_obs(sig: &[f64], start: usize, rel: &[f64]) -> TrialObservation {
    observation(
        start,
        rel.iter()
            .enumerate()
            .map(|(i, r)| sig[start + i] * (1.0 + r))
            .collect(),
    )
}

pub fn verdict_monotone() -> Result<(), String> {
    let s = (
        band_case(),
        0.01f64..0.9,
        0.0f64..1.0,
        0.0f64..1.0,
        0.1f64..=1.0,
    );
    run(s, |((sig, up, lo, start, rel), step, m1, m2, coverage)| {
        let (cat, bw) = build_band(&sig, &up, &lo);
        let obs = window_obs(&sig, start, &rel);
        let (small, large) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let base = within_bandwidth(&obs, &cat, &bw, coverage, small).unwrap();
        let grown = adjust_bandwidth(&bw, Direction::Grow, step).unwrap();
        prop_assert!(
            rank(within_bandwidth(&obs, &cat, &grown, coverage, small).unwrap()) <= rank(base)
        );
        prop_assert!(
            rank(within_bandwidth(&obs, &cat, &bw, coverage, large).unwrap()) <= rank(base)
        );
        let shrunk = adjust_bandwidth(&bw, Direction::Shrink, step).unwrap();
        prop_assert!(
            rank(within_bandwidth(&obs, &cat, &shrunk, coverage, small).unwrap()) >= rank(base)
        );
        Ok(())
    })
}

pub fn pearson_properties() -> Result<(), String> {
    let s = (3usize..40).prop_flat_map(|n| {
        (
            vec(-100.0f64..100.0, n),
            vec(-100.0f64..100.0, n),
            prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            -100.0f64..100.0,
        )
    });
    run(s, |(x, y, a, b)| {
        let Some(r) = pearson(&x, &y) else {
            return Ok(());
        };
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((pearson(&y, &x).unwrap() - r).abs() <= 1e-12);
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let transformed = pearson(&xs, &y).unwrap();
        prop_assert!(
            (transformed - a.signum() * r).abs() <= 1e-6,
            "{} vs {}",
            transformed,
            r
        );
        Ok(())
    })
}

pub fn distance_symmetric() -> Result<(), String> {
    let s = (positive_series(2..40), positive_series(2..40));
    run(s, |(a, b)| {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let ab =
            distance_profile(&observation(0, a.to_vec()), &signature(b.to_vec()), "t").unwrap();
        let ba =
            distance_profile(&observation(0, b.to_vec()), &signature(a.to_vec()), "t").unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab.iter().all(|d| *d >= 0.0));
        Ok(())
    })
}

fn detection_config() -> impl Strategy<Value = DetectionConfig> {
    (
        0.5f64..=1.0,
        -1.0f64..=1.0,
        0.05f64..0.5,
        0.5f64..=1.0,
        1usize..8,
    )
        .prop_map(|(th, ts, delta_d, c, max_iters)| DetectionConfig {
            th,
            ts,
            delta_d,
            coverage_ratio: c,
            adjacency_margin: None,
            max_iters,
        })
}

type CohortCase = (Vec<f64>, Vec<f64>, Vec<(usize, Vec<f64>)>);

fn cohort_case() -> impl Strategy<Value = CohortCase> {
    positive_series(6..40).prop_flat_map(|sig| {
        let n = sig.len();
        let user = (2..=n).prop_flat_map(move |len| (0..=n - len, vec(-0.2f64..0.2, len)));
        (Just(sig), vec(0.01f64..0.2, n), vec(user, 1..8))
    })
}

pub fn detect_loop_properties() -> Result<(), String> {
    let s = (cohort_case(), detection_config());
    run(s, |((sig, width, users), cfg)| {
        let (cat, bw) = build_band(&sig, &width, &width);
        let cohort: Vec<_> = users
            .iter()
            .map(|(s, rel)| window_obs(&sig, *s, rel))
            .collect();
        let r = detect_change(&cohort, &cat, &bw, &cfg).unwrap();
        prop_assert!(r.iterations_used <= cfg.max_iters);
        prop_assert_eq!(r.iterations_used, r.case_trace.len());
        prop_assert_eq!(&detect_change(&cohort, &cat, &bw, &cfg).unwrap(), &r);
        if r.verdict == Verdict::Inconclusive {
            prop_assert_eq!(&r.final_bandwidth, &bw);
        }
        let matches: Vec<_> = cohort
            .iter()
            .map(|o| classify_user(o, &cat, &bw, &cfg).unwrap())
            .collect();
        if vote_case(&matches, cfg.th).unwrap() == Case::Case1 {
            let grown = adjust_bandwidth(&bw, Direction::Grow, cfg.delta_d).unwrap();
            let regrown: Vec<_> = cohort
                .iter()
                .map(|o| classify_user(o, &cat, &grown, &cfg).unwrap())
                .collect();
            prop_assert_eq!(vote_case(&regrown, cfg.th).unwrap(), Case::Case1);
        }

        let single = &cohort[..1];
        let strict = DetectionConfig { th: 1.0, ..cfg };
        let m = classify_user(&single[0], &cat, &bw, &strict).unwrap();
        let first = detect_change(single, &cat, &bw, &strict)
            .unwrap()
            .case_trace[0];
        let expected = match (m.band_verdict, m.shape_similar) {
            (BandVerdict::Inside, true) => Case::Case1,
            (BandVerdict::Inside, false) => Case::Case3,
            (BandVerdict::Adjacent, true) => Case::Case4,
            (_, false) => Case::Case2,
            (BandVerdict::Outside, true) => Case::None,
        };
        prop_assert_eq!(first, expected);
        Ok(())
    })
}

pub fn cusum_properties() -> Result<(), String> {
    let s = (
        vec(-5.0f64..5.0, 1..200),
        0.0f64..2.0,
        0.1f64..10.0,
        prop::sample::select(vec![0.25, 0.5, 2.0, 4.0, 8.0]),
    );
    run(s, |(xs, k, h, scale)| {
        prop_assert!(baseline_detect(&vec![0.0; xs.len()], k, h)
            .unwrap()
            .is_empty());
        let base = baseline_detect(&xs, k, h).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        prop_assert_eq!(
            baseline_detect(&scaled, k * scale, h * scale).unwrap(),
            base
        );
        let clipped: Vec<f64> = xs.iter().map(|x| x.clamp(-k, k)).collect();
        prop_assert!(baseline_detect(&clipped, k, h).unwrap().is_empty());
        Ok(())
    })
}

fn small_config(seed: u64, change: Option<usize>) -> ExperimentConfig {
    ExperimentConfig {
        horizon: 90,
        providers: 1,
        consumers: 3,
        repetitions: 1,
        seed,
        change_day: change,
        change_day_spread: 0,
        warmup_stride: 10,
        requests_per_trial: 10,
        ..ExperimentConfig::default()
    }
}

pub fn experiment_determinism() -> Result<(), String> {
    let s = (
        any::<u64>(),
        prop::option::of(0usize..90),
        0.5f64..=1.0,
        -1.0f64..1.0,
    );
    run(s, |(seed, change, th, ts)| {
        let cfg = small_config(seed, change);
        let a = prepare_scenarios(&cfg).unwrap();
        let b = prepare_scenarios(&cfg.with_thresholds(ts, th)).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.trials, &y.trials);
            prop_assert_eq!(&x.categorical, &y.categorical);
            prop_assert_eq!(x.injected_day, y.injected_day);
        }
        prop_assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        Ok(())
    })
}

pub fn zero_noise_no_false_positives() -> Result<(), String> {
    let s = (any::<u64>(), 0.5f64..=1.0, -1.0f64..=(1.0 - 1e-9));
    run(s, |(seed, th, ts)| {
        let cfg = ExperimentConfig {
            noise_sigma: 0.0,
            spike_prob: 0.0,
            ..small_config(seed, None)
        }
        .with_thresholds(ts, th);
        let result = run_experiment(&cfg).unwrap();
        prop_assert_eq!(result.metrics.false_positives, 0);
        for run in &result.runs {
            prop_assert!(run.events.iter().all(|e| e.verdict == Verdict::NoChange));
        }
        Ok(())
    })
}

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        (
            "relative_change identity/composition/scale",
            relative_change_algebra as Check,
        ),
        (
            "siggen categorical=general, bounds, order",
            siggen_properties,
        ),
        ("categorize monotone in demand", categorize_monotone),
        (
            "bandwidth symmetric and clamped",
            bandwidth_symmetric_clamped,
        ),
        ("verdict monotone in band and margin", verdict_monotone),
        ("pearson bounds, symmetry, affine", pearson_properties),
        ("distance profile symmetric", distance_symmetric),
        (
            "detect loop bounds, determinism, Th=1",
            detect_loop_properties,
        ),
        ("cusum neutrality, scale, allowance", cusum_properties),
        ("experiment determinism and CRN", experiment_determinism),
        ("zero-noise runs never alarm", zero_noise_no_false_positives),
    ]
}
