//! File formats: signature JSON, trial CSV, JSON-lines reports, result tables.
//!
//! Floats that are written out are first rounded to 9 significant digits so
//! repeated runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{CaseFractions, DetectionEvent};
use crate::error::{Error, Result};
use crate::model::{
    AttributeSeries, CategoricalSignature, GeneralSignature, QoSAttribute, Signature,
    SignatureSeries, TrialObservation, WorkloadCategory,
};
use crate::noise::BandwidthSnapshot;
use crate::simlab::{ComparisonRow, SweepPoint};

/// Rounds to 9 significant digits.
pub fn round9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

fn round_all(values: &[f64]) -> Vec<f64> {
    values.iter().copied().map(round9).collect()
}

/// One attribute series of one signature. `category` is `null` for a
/// general signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureRecord {
    pub provider_id: String,
    pub category: Option<WorkloadCategory>,
    pub attribute: String,
    #[serde(default)]
    pub unit: String,
    pub horizon: usize,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(SignatureRecord),
    Many(Vec<SignatureRecord>),
}

/// Records for every attribute of a signature.
pub fn signature_records<S: Signature + ?Sized>(sig: &S) -> Vec<SignatureRecord> {
    sig.series()
        .iter()
        .map(|s| SignatureRecord {
            provider_id: sig.provider_id().to_string(),
            category: sig.category().cloned(),
            attribute: s.attribute.id.clone(),
            unit: s.attribute.unit.clone(),
            horizon: sig.horizon(),
            values: round_all(&s.values),
        })
        .collect()
}

pub fn parse_signature_records(text: &str) -> Result<Vec<SignatureRecord>> {
    let records = match serde_json::from_str::<OneOrMany>(text) {
        Ok(OneOrMany::One(r)) => vec![r],
        Ok(OneOrMany::Many(rs)) => rs,
        // Re-parse as a list to surface a field-level message.
        Err(_) => serde_json::from_str::<Vec<SignatureRecord>>(text)?,
    };
    for r in &records {
        if r.values.len() != r.horizon {
            return Err(Error::validation(format!(
                "signature {}/{}: {} values for horizon {}",
                r.provider_id,
                r.attribute,
                r.values.len(),
                r.horizon
            )));
        }
    }
    Ok(records)
}

pub fn read_signature_records(path: &Path) -> Result<Vec<SignatureRecord>> {
    parse_signature_records(&fs::read_to_string(path)?)
}

fn select_series(
    records: &[SignatureRecord],
    provider_id: &str,
    category: Option<&WorkloadCategory>,
) -> Result<SignatureSeries> {
    let chosen: Vec<&SignatureRecord> = records
        .iter()
        .filter(|r| r.provider_id == provider_id && r.category.as_ref() == category)
        .collect();
    let Some(first) = chosen.first() else {
        let what = category.map_or("general".to_string(), |c| format!("categorical ({c})"));
        return Err(Error::validation(format!(
            "no {what} signature for provider `{provider_id}`"
        )));
    };
    let series = chosen
        .iter()
        .map(|r| {
            Ok(AttributeSeries {
                attribute: QoSAttribute::new(r.attribute.clone(), r.unit.clone())?,
                values: r.values.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SignatureSeries::new(first.horizon, series)
}

pub fn general_from_records(
    records: &[SignatureRecord],
    provider_id: &str,
) -> Result<GeneralSignature> {
    Ok(GeneralSignature::new(
        provider_id,
        select_series(records, provider_id, None)?,
    ))
}

pub fn categorical_from_records(
    records: &[SignatureRecord],
    provider_id: &str,
    category: &WorkloadCategory,
) -> Result<CategoricalSignature> {
    Ok(CategoricalSignature::new(
        provider_id,
        category.clone(),
        select_series(records, provider_id, Some(category))?,
    ))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_signature_records(path: &Path, records: &[SignatureRecord]) -> Result<()> {
    write_json(path, records)
}

/// Long-format trial row: one value of one attribute on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub consumer_id: String,
    pub provider_id: String,
    pub day: usize,
    pub attr: String,
    pub value: f64,
    pub cpu_frac: f64,
    pub mem_frac: f64,
    pub io_frac: f64,
}

pub fn trial_rows(observations: &[TrialObservation]) -> Vec<TrialRow> {
    let mut rows = Vec::new();
    for obs in observations {
        let frac = |c: WorkloadCategory| round9(obs.mix_fraction(&c));
        for attr in obs.attributes() {
            let values = obs.values(attr).unwrap_or_default();
            for (i, v) in values.iter().enumerate() {
                rows.push(TrialRow {
                    consumer_id: obs.consumer_id().to_string(),
                    provider_id: obs.provider_id().to_string(),
                    day: obs.window_start() + i,
                    attr: attr.to_string(),
                    value: round9(*v),
                    cpu_frac: frac(WorkloadCategory::Cpu),
                    mem_frac: frac(WorkloadCategory::Memory),
                    io_frac: frac(WorkloadCategory::Io),
                });
            }
        }
    }
    rows
}

/// Reassembles observations from long-format rows. Rows of one
/// `(consumer_id, provider_id)` pair must cover a contiguous day range for
/// every attribute. Output follows first appearance in `rows`.
pub fn observations_from_rows(rows: &[TrialRow]) -> Result<Vec<TrialObservation>> {
    type Key = (String, String);
    type Trial = (BTreeMap<String, BTreeMap<usize, f64>>, [f64; 3]);
    let mut order: Vec<Key> = Vec::new();
    let mut grouped: BTreeMap<Key, Trial> = BTreeMap::new();
    for (line, row) in rows.iter().enumerate() {
        let key = (row.consumer_id.clone(), row.provider_id.clone());
        let mix = [row.cpu_frac, row.mem_frac, row.io_frac];
        let entry = grouped.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (BTreeMap::new(), mix)
        });
        if entry.1 != mix {
            return Err(Error::validation(format!(
                "row {}: category fractions differ within trial `{}`",
                line + 1,
                row.consumer_id
            )));
        }
        if entry
            .0
            .entry(row.attr.clone())
            .or_default()
            .insert(row.day, row.value)
            .is_some()
        {
            return Err(Error::validation(format!(
                "row {}: duplicate day {} for trial `{}` attribute `{}`",
                line + 1,
                row.day,
                row.consumer_id,
                row.attr
            )));
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (attrs, mix) = grouped.remove(&key).unwrap_or_default();
            let mut start = None;
            let mut values = BTreeMap::new();
            for (attr, days) in attrs {
                let first = *days.keys().next().unwrap_or(&0);
                let contiguous = days.keys().enumerate().all(|(i, d)| *d == first + i);
                if !contiguous || start.is_some_and(|s| s != first) {
                    return Err(Error::validation(format!(
                        "trial `{}` on `{}` does not cover one contiguous window",
                        key.0, key.1
                    )));
                }
                start = Some(first);
                values.insert(attr, days.into_values().collect::<Vec<f64>>());
            }
            let category_mix = WorkloadCategory::standard()
                .into_iter()
                .zip(mix)
                .filter(|(_, f)| *f > 0.0)
                .collect();
            TrialObservation::new(key.0, key.1, start.unwrap_or(0), values, category_mix)
        })
        .collect()
}

pub fn write_trials_csv(path: &Path, observations: &[TrialObservation]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in trial_rows(observations) {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialObservation>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<TrialRow>, _>>()?;
    observations_from_rows(&rows)
}

/// One JSON line of a detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provider_id: Option<String>,
    #[serde(flatten)]
    pub event: DetectionEvent,
}

impl ReportLine {
    pub fn new(event: &DetectionEvent) -> Self {
        let f = event.fractions;
        let mut event = event.clone();
        event.fractions = CaseFractions {
            f1: round9(f.f1),
            f2: round9(f.f2),
            f3: round9(f.f3),
            f4: round9(f.f4),
        };
        Self {
            run: None,
            provider_id: None,
            event,
        }
    }

    pub fn tagged(event: &DetectionEvent, run: usize, provider_id: &str) -> Self {
        Self {
            run: Some(run),
            provider_id: Some(provider_id.to_string()),
            ..Self::new(event)
        }
    }
}

pub fn write_report_jsonl(path: &Path, lines: &[ReportLine]) -> Result<()> {
    let mut out = Vec::new();
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_report_jsonl(path: &Path) -> Result<Vec<ReportLine>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

pub fn rounded_snapshot(snapshot: &BandwidthSnapshot) -> BandwidthSnapshot {
    BandwidthSnapshot {
        upper: round_all(&snapshot.upper),
        lower: round_all(&snapshot.lower),
        ..snapshot.clone()
    }
}

pub fn write_bandwidths(path: &Path, snapshots: &[BandwidthSnapshot]) -> Result<()> {
    let rounded: Vec<BandwidthSnapshot> = snapshots.iter().map(rounded_snapshot).collect();
    write_json(path, &rounded)
}

pub fn read_bandwidths(path: &Path) -> Result<Vec<BandwidthSnapshot>> {
    let text = fs::read_to_string(path)?;
    if let Ok(one) = serde_json::from_str::<BandwidthSnapshot>(&text) {
        return Ok(vec![one]);
    }
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize)]
struct ResultRow<'a> {
    detector: Option<&'a str>,
    ts: f64,
    th: f64,
    mean_delay: Option<f64>,
    accuracy: Option<f64>,
    fp: usize,
}

fn write_result_rows<'a>(
    path: &Path,
    rows: impl Iterator<Item = ResultRow<'a>>,
    with_detector: bool,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut header = vec!["ts", "th", "mean_delay", "accuracy", "fp"];
    if with_detector {
        header.insert(0, "detector");
    }
    writer.write_record(&header)?;
    for row in rows {
        let opt = |v: Option<f64>| v.map(|x| round9(x).to_string()).unwrap_or_default();
        let mut record = vec![
            round9(row.ts).to_string(),
            round9(row.th).to_string(),
            opt(row.mean_delay),
            opt(row.accuracy),
            row.fp.to_string(),
        ];
        if let Some(d) = row.detector {
            record.insert(0, d.to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// `ts,th,mean_delay,accuracy,fp`; undefined metrics are left empty.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let rows = points.iter().map(|p| ResultRow {
        detector: None,
        ts: p.ts,
        th: p.th,
        mean_delay: p.metrics.mean_delay,
        accuracy: p.metrics.accuracy,
        fp: p.metrics.false_positives,
    });
    write_result_rows(path, rows, false)
}

/// `detector,ts,th,mean_delay,accuracy,fp`.
pub fn write_compare_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let rows = rows.iter().map(|r| ResultRow {
        detector: Some(&r.detector),
        ts: r.ts,
        th: r.th,
        mean_delay: r.metrics.mean_delay,
        accuracy: r.metrics.accuracy,
        fp: r.metrics.false_positives,
    });
    write_result_rows(path, rows, true)
}
