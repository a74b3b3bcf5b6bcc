//! Front-loaded hourly billing and the penalty-bearing reward.
//!
//! Each instance is charged a full hour's price at launch and again every
//! `steps_per_hour` steps while it stays alive; partial hours are never
//! refunded. High CPU utilization adds a graduated penalty on top of the
//! plain resource cost.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Hourly price for one instance type.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePricing {
    pub instance_type: String,
    pub hourly_price: f64,
}

impl InstancePricing {
    pub fn new(instance_type: impl Into<String>, hourly_price: f64) -> Result<Self> {
        if !(hourly_price > 0.0) {
            return Err(Error::config(format!(
                "hourly_price must be > 0, got {hourly_price}"
            )));
        }
        Ok(InstancePricing {
            instance_type: instance_type.into(),
            hourly_price,
        })
    }
}

/// Reads a pricing table CSV (`instance_type,hourly_price`) and returns the
/// row for `instance_type`.
pub fn load_pricing(path: &Path, instance_type: &str) -> Result<InstancePricing> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "instance_type,hourly_price" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "pricing CSV must start with header 'instance_type,hourly_price'".into(),
            })
        }
    }
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (ty, price) = line.split_once(',').ok_or(Error::Parse {
            line: lineno + 1,
            msg: "expected 'instance_type,hourly_price'".into(),
        })?;
        if ty.trim() == instance_type {
            let price: f64 = price.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad price '{price}'"),
            })?;
            return InstancePricing::new(instance_type, price);
        }
    }
    Err(Error::config(format!(
        "instance type '{instance_type}' not found in {}",
        path.display()
    )))
}

/// Graduated CPU-utilization penalty bands: `(lower bound %, multiplier)`,
/// half-open and exhaustive above the first bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySchedule {
    bands: Vec<(f64, u32)>,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            bands: vec![(70.0, 3), (80.0, 5), (90.0, 10)],
        }
    }
}

impl PenaltySchedule {
    pub fn new(bands: Vec<(f64, u32)>) -> Result<Self> {
        for pair in bands.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::config("penalty band bounds must be strictly increasing"));
            }
        }
        if bands.iter().any(|&(_, m)| m == 0) {
            return Err(Error::config("penalty multipliers must be positive"));
        }
        Ok(PenaltySchedule { bands })
    }

    /// Multiplier for the band containing `cpu_utilization` (0 below the
    /// first band).
    pub fn multiplier(&self, cpu_utilization: f64) -> u32 {
        let mut m = 0;
        for &(bound, mult) in &self.bands {
            if cpu_utilization >= bound {
                m = mult;
            }
        }
        m
    }
}

/// Convenience wrapper matching the reward definition.
pub fn penalty_multiplier(cpu_utilization: f64, schedule: &PenaltySchedule) -> u32 {
    schedule.multiplier(cpu_utilization)
}

/// Per-step reward: negative resource cost plus a graduated penalty scaled by
/// the per-step amortized fleet cost.
pub fn step_reward(
    charges: f64,
    fleet_size: u32,
    cpu_utilization: f64,
    pricing: &InstancePricing,
    schedule: &PenaltySchedule,
    steps_per_hour: u32,
) -> f64 {
    let m = schedule.multiplier(cpu_utilization) as f64;
    -charges - m * fleet_size as f64 * pricing.hourly_price / steps_per_hour as f64
}

#[derive(Debug, Clone)]
struct InstanceEntry {
    id: u64,
    launch_step: u64,
    next_charge_step: u64,
}

/// Per-instance billing clocks for the live fleet.
///
/// Single-owner mutable; one ledger per environment instance.
#[derive(Debug, Clone)]
pub struct FleetLedger {
    entries: Vec<InstanceEntry>,
    pricing: InstancePricing,
    steps_per_hour: u32,
    next_id: u64,
    last_accrued_step: Option<u64>,
}

impl FleetLedger {
    pub fn new(pricing: InstancePricing, steps_per_hour: u32) -> Result<Self> {
        if steps_per_hour == 0 {
            return Err(Error::config("steps_per_hour must be > 0"));
        }
        Ok(FleetLedger {
            entries: Vec::new(),
            pricing,
            steps_per_hour,
            next_id: 0,
            last_accrued_step: None,
        })
    }

    pub fn fleet_size(&self) -> u32 {
        self.entries.len() as u32
    }

    pub fn pricing(&self) -> &InstancePricing {
        &self.pricing
    }

    pub fn steps_per_hour(&self) -> u32 {
        self.steps_per_hour
    }

    /// Launches `n` instances at `step`, charging the first hour up front.
    pub fn launch_instances(&mut self, n: u32, step: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::config("cannot launch 0 instances"));
        }
        for _ in 0..n {
            self.entries.push(InstanceEntry {
                id: self.next_id,
                launch_step: step,
                next_charge_step: step + self.steps_per_hour as u64,
            });
            self.next_id += 1;
        }
        Ok(n as f64 * self.pricing.hourly_price)
    }

    /// Charges every instance whose next instance-hour starts at `step`.
    ///
    /// Must be called exactly once per step, after that step's launches and
    /// terminations.
    pub fn accrue_step(&mut self, step: u64) -> Result<f64> {
        if let Some(last) = self.last_accrued_step {
            if step <= last {
                return Err(Error::config(format!(
                    "accrue_step called out of order: step {step} after step {last}"
                )));
            }
        }
        self.last_accrued_step = Some(step);
        let mut charge = 0.0;
        for e in &mut self.entries {
            if e.next_charge_step == step {
                charge += self.pricing.hourly_price;
                e.next_charge_step += self.steps_per_hour as u64;
            }
        }
        Ok(charge)
    }

    /// Removes the `n` instances closest to their next charge (ties broken by
    /// lowest id). No refunds. The fleet must keep at least one instance.
    pub fn terminate_instances(&mut self, n: u32, step: u64) -> Result<Vec<u64>> {
        if n == 0 {
            return Err(Error::config("cannot terminate 0 instances"));
        }
        if n >= self.fleet_size() {
            return Err(Error::config(format!(
                "cannot terminate {n} of {} instances; fleet must keep at least one",
                self.fleet_size()
            )));
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&i| {
            let e = &self.entries[i];
            (e.next_charge_step.saturating_sub(step), e.id)
        });
        let mut victims: Vec<usize> = order.into_iter().take(n as usize).collect();
        victims.sort_unstable_by(|a, b| b.cmp(a)); // remove back-to-front
        let mut ids: Vec<u64> = victims
            .into_iter()
            .map(|i| self.entries.remove(i).id)
            .collect();
        ids.sort_unstable();
        Ok(ids)
    }

    /// Instance ids with their launch steps, for inspection in tests.
    pub fn entries(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.entries
            .iter()
            .map(|e| (e.id, e.launch_step, e.next_charge_step))
    }
}

/// Writes a single-entry pricing table CSV.
pub fn write_pricing_csv(pricing: &InstancePricing, path: &Path) -> Result<()> {
    let mut out = String::from("instance_type,hourly_price\n");
    let _ = writeln!(out, "{},{}", pricing.instance_type, pricing.hourly_price);
    fs::write(path, out).map_err(|e| Error::io(e, path))
}
