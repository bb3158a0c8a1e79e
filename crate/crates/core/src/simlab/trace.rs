//! Workload traces: raw demand rows and their partition into daily averages.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional resource demand of one trace sample (or one averaged part).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    pub cpu: f64,
    pub memory: f64,
    pub io: f64,
}

impl WorkloadRecord {
    pub fn get(&self, resource: &str) -> Option<f64> {
        match resource {
            "cpu" => Some(self.cpu),
            "memory" | "mem" => Some(self.memory),
            "io" => Some(self.io),
            _ => None,
        }
    }
}

/// Splits `rows` into `parts` contiguous chunks of `rows.len() / parts`
/// rows (the last chunk absorbs the remainder) and averages each chunk.
pub fn partition_trace(rows: &[WorkloadRecord], parts: usize) -> Result<Vec<WorkloadRecord>> {
    if rows.is_empty() {
        return Err(Error::validation("empty workload trace"));
    }
    if parts == 0 {
        return Err(Error::config("partition count must be >= 1"));
    }
    if rows.len() < parts {
        return Err(Error::validation(format!(
            "trace has {} rows, fewer than {parts} parts",
            rows.len()
        )));
    }
    let size = rows.len() / parts;
    Ok((0..parts)
        .map(|p| {
            let start = p * size;
            let end = if p + 1 == parts {
                rows.len()
            } else {
                start + size
            };
            mean_record(&rows[start..end])
        })
        .collect())
}

/// Sizes of the chunks [`partition_trace`] would produce.
pub fn partition_sizes(rows: usize, parts: usize) -> Vec<usize> {
    if parts == 0 || rows < parts {
        return Vec::new();
    }
    let size = rows / parts;
    let mut sizes = vec![size; parts];
    sizes[parts - 1] = rows - size * (parts - 1);
    sizes
}

fn mean_record(chunk: &[WorkloadRecord]) -> WorkloadRecord {
    let n = chunk.len() as f64;
    let sum = chunk.iter().fold((0.0, 0.0, 0.0), |acc, r| {
        (acc.0 + r.cpu, acc.1 + r.memory, acc.2 + r.io)
    });
    WorkloadRecord {
        cpu: sum.0 / n,
        memory: sum.1 / n,
        io: sum.2 / n,
    }
}

/// Samples per day in the synthetic trace (4-minute resolution).
pub const TRACE_SAMPLES_PER_DAY: usize = 360;

/// Synthetic production-style trace: diurnal and weekly demand cycles per
/// resource plus sample noise, clamped to [0, 1].
pub fn synthesize_workload_trace<R: Rng + ?Sized>(days: usize, rng: &mut R) -> Vec<WorkloadRecord> {
    let per_day = TRACE_SAMPLES_PER_DAY as f64;
    let mut resource = |base: f64| {
        let level = base + rng.random_range(-0.05..0.05);
        let diurnal = rng.random_range(0.10..0.25);
        let weekly = rng.random_range(0.03..0.10);
        let phase = rng.random_range(0.0..TAU);
        (level, diurnal, weekly, phase)
    };
    let params = [resource(0.45), resource(0.40), resource(0.35)];
    (0..days * TRACE_SAMPLES_PER_DAY)
        .map(|i| {
            let day = i as f64 / per_day;
            let sample = |p: (f64, f64, f64, f64), rng: &mut R| {
                let (level, diurnal, weekly, phase) = p;
                let v = level
                    + diurnal * (TAU * day + phase).sin()
                    + weekly * (TAU * day / 7.0 + phase).sin()
                    + rng.random_range(-0.05..0.05);
                v.clamp(0.0, 1.0)
            };
            WorkloadRecord {
                cpu: sample(params[0], rng),
                memory: sample(params[1], rng),
                io: sample(params[2], rng),
            }
        })
        .collect()
}
