//! Request-trace ingestion and perturbation.
//!
//! Raw connection traces (whitespace-delimited, timestamp in seconds as the
//! first field) are binned into fixed-length intervals to form a
//! [`TraceSchedule`]. Schedules can also be loaded from a pre-binned CSV.
//! At run time the per-interval counts are perturbed with Gaussian noise
//! whose spread grows with the square root of the count.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{stream_seed, SplitMix64};

/// Per-interval request counts driving an environment episode.
///
/// Immutable after construction; safe to share across parallel runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSchedule {
    interval_seconds: u32,
    counts: Vec<u64>,
    origin_label: String,
}

/// Gaussian perturbation of scheduled counts: for a scheduled count `c` the
/// realized count is drawn from `Normal(c, sigma_coeff * sqrt(c))`, rounded
/// half-to-even and clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_coeff: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_coeff: f64, seed: u64) -> Result<Self> {
        if !(sigma_coeff >= 0.0) {
            return Err(Error::config(format!(
                "sigma_coeff must be >= 0, got {sigma_coeff}"
            )));
        }
        Ok(NoiseSpec { sigma_coeff, seed })
    }

    /// Perturbation disabled: realized counts equal scheduled counts.
    pub fn disabled() -> Self {
        NoiseSpec {
            sigma_coeff: 0.0,
            seed: 0,
        }
    }
}

impl TraceSchedule {
    pub fn new(interval_seconds: u32, counts: Vec<u64>, origin_label: impl Into<String>) -> Result<Self> {
        if interval_seconds == 0 {
            return Err(Error::config("interval_seconds must be > 0"));
        }
        if counts.is_empty() {
            return Err(Error::config("schedule must contain at least one interval"));
        }
        Ok(TraceSchedule {
            interval_seconds,
            counts,
            origin_label: origin_label.into(),
        })
    }

    pub fn interval_seconds(&self) -> u32 {
        self.interval_seconds
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn origin_label(&self) -> &str {
        &self.origin_label
    }

    /// Keeps only the first `n` intervals (used by quick mode). No-op when the
    /// schedule is already shorter.
    pub fn truncated(mut self, n: usize) -> Self {
        if n > 0 && n < self.counts.len() {
            self.counts.truncate(n);
            let _ = write!(self.origin_label, " [first {n} intervals]");
        }
        self
    }

    /// Multiplies every count by `factor`, rounding half-to-even.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::config(format!("scale factor must be > 0, got {factor}")));
        }
        let counts = self
            .counts
            .iter()
            .map(|&c| (c as f64 * factor).round_ties_even() as u64)
            .collect();
        Ok(TraceSchedule {
            interval_seconds: self.interval_seconds,
            counts,
            origin_label: self.origin_label.clone(),
        })
    }

    /// Realized request count for one interval under `noise`.
    ///
    /// Deterministic in `(noise.seed, index)` and independent of query order:
    /// each draw uses its own SplitMix64 stream keyed by the interval index.
    pub fn perturbed_count(&self, index: usize, noise: &NoiseSpec) -> Result<u64> {
        let &c = self
            .counts
            .get(index)
            .ok_or_else(|| Error::config(format!("interval index {index} out of range (len {})", self.len())))?;
        if noise.sigma_coeff == 0.0 || c == 0 {
            return Ok(c);
        }
        let sd = noise.sigma_coeff * (c as f64).sqrt();
        let z = SplitMix64::new(stream_seed(noise.seed, index as u64)).next_normal();
        let v = (c as f64 + sd * z).round_ties_even();
        Ok(if v < 0.0 { 0 } else { v as u64 })
    }
}

/// Bins raw trace lines into a schedule.
///
/// Each non-empty line must start with a whitespace-delimited timestamp in
/// seconds; all other fields are ignored. `counts[i]` is the number of events
/// with `floor(timestamp / interval_seconds) == i`.
pub fn ingest_raw_trace<R: BufRead>(reader: R, interval_seconds: u32) -> Result<TraceSchedule> {
    if interval_seconds == 0 {
        return Err(Error::config("interval_seconds must be > 0"));
    }
    let mut counts: Vec<u64> = Vec::new();
    let mut events = 0u64;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let field = trimmed.split_whitespace().next().unwrap();
        let ts: f64 = field.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("expected numeric timestamp, found '{field}'"),
        })?;
        if !ts.is_finite() || ts < 0.0 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("timestamp must be finite and non-negative, found {ts}"),
            });
        }
        let bin = (ts / interval_seconds as f64).floor() as usize;
        if bin >= counts.len() {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
        events += 1;
    }
    if events == 0 {
        return Err(Error::Parse {
            line: 0,
            msg: "trace stream contained no events".into(),
        });
    }
    TraceSchedule::new(interval_seconds, counts, "raw trace")
}

/// Reads a schedule from a file, auto-detecting the format:
///
/// * binned CSV with header `interval_index,count`
/// * one-column CSV with header `count`
/// * otherwise: raw trace (timestamp-first lines)
pub fn load_schedule(path: &Path, interval_seconds: u32) -> Result<TraceSchedule> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
    let label = path.display().to_string();
    let first = content.lines().next().unwrap_or("").trim();
    if first == "interval_index,count" || first == "count" {
        let schedule = parse_binned_csv(&content, first == "count", interval_seconds)?;
        return TraceSchedule::new(interval_seconds, schedule, label);
    }
    let mut schedule = ingest_raw_trace(content.as_bytes(), interval_seconds)?;
    schedule.origin_label = label;
    Ok(schedule)
}

fn parse_binned_csv(content: &str, single_column: bool, interval_seconds: u32) -> Result<Vec<u64>> {
    if interval_seconds == 0 {
        return Err(Error::config("interval_seconds must be > 0"));
    }
    let mut counts = Vec::new();
    for (lineno, line) in content.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        let count_field = if single_column {
            line
        } else {
            let (idx, count) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected 'interval_index,count'".into()))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad interval index '{idx}'")))?;
            if idx != counts.len() {
                return Err(parse_err(format!(
                    "interval indices must be consecutive from 0; expected {}, found {idx}",
                    counts.len()
                )));
            }
            count.trim()
        };
        let count: u64 = count_field
            .parse()
            .map_err(|_| parse_err(format!("bad count '{count_field}'")))?;
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "binned CSV contained no rows".into(),
        });
    }
    Ok(counts)
}

/// Writes a schedule as CSV with header `interval_index,count`.
pub fn write_schedule_csv(schedule: &TraceSchedule, path: &Path) -> Result<()> {
    let mut out = String::from("interval_index,count\n");
    for (i, c) in schedule.counts.iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    fs::write(path, out).map_err(|e| Error::io(e, path))
}

/// Deterministic synthetic workload for demos and tests: diurnal day/night
/// cycle, a weekend dip, a slower intra-day swell, and short random bursts.
///
/// Counts are at raw-trace scale (tens to low hundreds per interval); pass the
/// result through [`TraceSchedule::scaled`] to reach serving-fleet volumes.
pub fn synthetic_schedule(days: u32, interval_seconds: u32, seed: u64) -> Result<TraceSchedule> {
    if days == 0 {
        return Err(Error::config("synthetic schedule needs days >= 1"));
    }
    if interval_seconds == 0 || interval_seconds > 86_400 {
        return Err(Error::config("interval_seconds must be in [1, 86400]"));
    }
    let per_day = 86_400 / interval_seconds as usize;
    let n = per_day * days as usize;
    let mut burst_rng = SplitMix64::new(stream_seed(seed, 0));

    let mut counts = vec![0u64; n];
    let mut burst_left = 0usize;
    let mut burst_gain = 1.0f64;
    for (i, slot) in counts.iter_mut().enumerate() {
        let day = i / per_day;
        let hour = (i % per_day) as f64 * interval_seconds as f64 / 3600.0;

        // Day/night envelope: low until ~07:00, high plateau ~10:00-20:00.
        let up = smooth01((hour - 7.0) / 3.0);
        let down = smooth01((hour - 20.0) / 3.0);
        let envelope = up - down; // 0 at night, 1 on the plateau
        let mut level = 20.0 + 100.0 * envelope;

        // Weekend dip.
        if day % 7 >= 5 {
            level *= 0.7;
        }

        // Intra-day swell, period 3 h, phase re-drawn each day.
        let phase = SplitMix64::new(stream_seed(seed, 1000 + day as u64)).next_f64()
            * std::f64::consts::TAU;
        level *= 1.0 + 0.18 * envelope * (hour / 3.0 * std::f64::consts::TAU + phase).sin();

        // Bursts: ~6 per day, 1-4 intervals long, 1.5-2.6x.
        if burst_left == 0 && burst_rng.next_f64() < 6.0 / per_day as f64 {
            burst_left = 1 + (burst_rng.next_u64() % 4) as usize;
            burst_gain = 1.5 + 1.1 * burst_rng.next_f64();
        }
        if burst_left > 0 {
            level *= burst_gain;
            burst_left -= 1;
        }

        *slot = level.round_ties_even().max(0.0) as u64;
    }
    TraceSchedule::new(
        interval_seconds,
        counts,
        format!("synthetic(days={days},seed={seed})"),
    )
}

fn smooth01(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}
