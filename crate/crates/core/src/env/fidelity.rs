//! Discrete-event workload model.
//!
//! Requests become jobs with uniform instruction demands, spread evenly
//! across the interval and dispatched round-robin to fleet servers, each
//! processing FIFO at a fixed instruction rate. Work that does not finish
//! within the interval carries over and is re-dispatched (shared-queue load
//! balancing), which also handles fleet resizes between intervals.

use crate::error::{Error, Result};
use crate::rng::{stream_seed, Xoshiro256StarStar};

/// Instruction-level parameters of the discrete-event backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FidelityParams {
    /// Instructions per second one instance executes.
    pub instance_ips: u64,
    /// Instruction demand per request, drawn uniformly from
    /// `[demand_min, demand_max]`.
    pub demand_min: u64,
    pub demand_max: u64,
}

impl Default for FidelityParams {
    fn default() -> Self {
        // Mean demand 3e6 at 6e6 IPS serves 600 requests per 300 s interval
        // at full utilization, matching the fast backend's default capacity.
        FidelityParams {
            instance_ips: 6_000_000,
            demand_min: 2_000_000,
            demand_max: 4_000_000,
        }
    }
}

impl FidelityParams {
    pub fn validate(&self) -> Result<()> {
        if self.instance_ips == 0 {
            return Err(Error::config("instance_ips must be > 0"));
        }
        if self.demand_min == 0 || self.demand_min > self.demand_max {
            return Err(Error::config(
                "instruction demands must satisfy 0 < demand_min <= demand_max",
            ));
        }
        Ok(())
    }
}

/// One request in flight: remaining instructions and absolute arrival time.
#[derive(Debug, Clone, Copy)]
struct Job {
    remaining: u64,
    arrival: f64,
}

/// Instruction bookkeeping for one simulated interval. Conservation holds
/// exactly in integers: `carried_in + admitted == completed + carried_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkAccounting {
    pub carried_in: u64,
    pub admitted: u64,
    pub completed: u64,
    pub carried_out: u64,
}

/// Mutable queue state of the discrete-event backend.
pub struct FidelityState {
    params: FidelityParams,
    interval_seconds: u32,
    demand_seed: u64,
    carry: Vec<Job>,
}

impl FidelityState {
    pub fn new(params: FidelityParams, interval_seconds: u32, demand_seed: u64) -> Self {
        FidelityState {
            params,
            interval_seconds,
            demand_seed,
            carry: Vec::new(),
        }
    }

    pub fn queued_jobs(&self) -> usize {
        self.carry.len()
    }

    /// Simulates one interval, consuming and updating the carry queue.
    pub fn run_interval(
        &mut self,
        index: usize,
        requests: u64,
        fleet: u32,
        base_latency: f64,
    ) -> (f64, f64) {
        let (cpu, latency, _) = self.run_interval_detailed(index, requests, fleet, base_latency);
        (cpu, latency)
    }

    /// As [`run_interval`](Self::run_interval) but also returns instruction
    /// accounting.
    pub fn run_interval_detailed(
        &mut self,
        index: usize,
        requests: u64,
        fleet: u32,
        base_latency: f64,
    ) -> (f64, f64, WorkAccounting) {
        let mut carry = std::mem::take(&mut self.carry);
        let out = simulate_interval(
            &self.params,
            self.interval_seconds,
            self.demand_seed,
            &mut carry,
            index,
            requests,
            fleet,
            base_latency,
        );
        self.carry = carry;
        out
    }

    /// Read-only look at an interval: same jobs and results as
    /// [`run_interval`](Self::run_interval) would produce, without touching
    /// the carry queue.
    pub fn preview(&self, index: usize, requests: u64, fleet: u32, base_latency: f64) -> (f64, f64) {
        let mut carry = self.carry.clone();
        let (cpu, latency, _) = simulate_interval(
            &self.params,
            self.interval_seconds,
            self.demand_seed,
            &mut carry,
            index,
            requests,
            fleet,
            base_latency,
        );
        (cpu, latency)
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_interval(
    params: &FidelityParams,
    interval_seconds: u32,
    demand_seed: u64,
    carry: &mut Vec<Job>,
    index: usize,
    requests: u64,
    fleet: u32,
    base_latency: f64,
) -> (f64, f64, WorkAccounting) {
    debug_assert!(fleet >= 1);
    let dt = interval_seconds as f64;
    let t0 = index as f64 * dt;
    let t_end = t0 + dt;
    let ips = params.instance_ips as f64;

    // Job demands come from a per-interval stream so episodes replay
    // identically regardless of how earlier intervals were queried.
    let mut rng = Xoshiro256StarStar::new(stream_seed(demand_seed, index as u64));
    let n = requests as usize;
    let mut admitted = 0u64;
    let mut jobs: Vec<Job> = Vec::with_capacity(carry.len() + n);
    let carried_in: u64 = carry.iter().map(|j| j.remaining).sum();
    jobs.append(carry);
    for j in 0..n {
        let demand = rng.next_range(params.demand_min, params.demand_max);
        admitted += demand;
        jobs.push(Job {
            remaining: demand,
            arrival: t0 + j as f64 * dt / n as f64,
        });
    }

    let servers = fleet as usize;
    let mut busy = vec![0.0f64; servers];
    let mut free_at = vec![t0; servers];
    let mut completed = 0u64;
    let mut latency_sum = 0.0;
    let mut finished_jobs = 0u64;
    let mut carried_out = 0u64;

    for (i, mut job) in jobs.into_iter().enumerate() {
        let s = i % servers;
        let start = free_at[s].max(job.arrival);
        if start >= t_end {
            carried_out += job.remaining;
            carry.push(job);
            continue;
        }
        let time_to_finish = job.remaining as f64 / ips;
        if start + time_to_finish < t_end {
            busy[s] += time_to_finish;
            free_at[s] = start + time_to_finish;
            completed += job.remaining;
            latency_sum += start + time_to_finish - job.arrival;
            finished_jobs += 1;
        } else {
            // Runs to the end of the interval; at least one instruction
            // stays so the job is observably carried.
            let done = ((t_end - start) * ips).floor() as u64;
            let done = done.min(job.remaining - 1);
            busy[s] += t_end - start;
            free_at[s] = t_end;
            completed += done;
            job.remaining -= done;
            carried_out += job.remaining;
            carry.push(job);
        }
    }

    let cpu = 100.0 * busy.iter().sum::<f64>() / (servers as f64 * dt);
    let latency = if finished_jobs > 0 {
        latency_sum / finished_jobs as f64
    } else {
        base_latency
    };
    (
        cpu,
        latency,
        WorkAccounting {
            carried_in,
            admitted,
            completed,
            carried_out,
        },
    )
}
