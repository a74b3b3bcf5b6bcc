//! Reset/step environment over a request schedule.
//!
//! Two workload backends share the same contract: a closed-form scaling law
//! ([`fast_model`]) and a per-request discrete-event model
//! ([`fidelity::FidelityState`]). One environment instance is single-threaded;
//! run several in parallel by giving each its own instance.

pub mod fidelity;

use crate::billing::{step_reward, FleetLedger, InstancePricing, PenaltySchedule};
use crate::error::{Error, Result};
use crate::rng::stream_seed;
use crate::trace::{NoiseSpec, TraceSchedule};

use fidelity::{FidelityParams, FidelityState};

/// Scaling action: change of fleet size by a fixed delta.
///
/// Index order is fixed (`Down2 = 0` … `Up2 = 4`) so Q-value vectors align
/// across agents and serialized tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Down2,
    Down1,
    Hold,
    Up1,
    Up2,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Down2,
        Action::Down1,
        Action::Hold,
        Action::Up1,
        Action::Up2,
    ];
    pub const COUNT: usize = 5;

    pub fn delta(self) -> i32 {
        match self {
            Action::Down2 => -2,
            Action::Down1 => -1,
            Action::Hold => 0,
            Action::Up1 => 1,
            Action::Up2 => 2,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Action::Down2 => 0,
            Action::Down1 => 1,
            Action::Hold => 2,
            Action::Up1 => 3,
            Action::Up2 => 4,
        }
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }
}

/// One 5-minute snapshot of the five state channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Live fleet size, within `[min_instances, max_instances]`.
    pub instance_count: u32,
    /// Fleet-average CPU utilization in percent, 0..=100.
    pub cpu_utilization: f64,
    /// Fleet-average packets per interval per instance.
    pub network_packets_in: f64,
    /// Mean request latency in seconds.
    pub latency: f64,
    /// Total requests seen by the load balancer this interval.
    pub request_count: u64,
}

/// Workload model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Fast,
    Fidelity,
}

/// Environment configuration. All workload constants are explicit so saved
/// runs are reproducible from the config file alone.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub min_instances: u32,
    pub max_instances: u32,
    pub initial_instances: u32,
    pub steps_per_hour: u32,
    /// Requests one instance serves per interval at 100% utilization.
    pub capacity_per_instance: f64,
    /// Latency at zero load, seconds.
    pub base_latency: f64,
    /// Utilization percentage where the latency law saturates.
    pub utilization_cap_for_latency: f64,
    pub packets_per_request: f64,
    /// Noise spread multiplier; the seed is supplied at reset.
    pub sigma_coeff: f64,
    pub pricing: InstancePricing,
    pub penalties: PenaltySchedule,
    pub backend: Backend,
    pub fidelity: FidelityParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            min_instances: 1,
            max_instances: 10,
            initial_instances: 5,
            steps_per_hour: 12,
            capacity_per_instance: 600.0,
            base_latency: 0.05,
            utilization_cap_for_latency: 95.0,
            packets_per_request: 2.0,
            sigma_coeff: 1.0,
            pricing: InstancePricing {
                instance_type: "m4.large".into(),
                hourly_price: 1.0,
            },
            penalties: PenaltySchedule::default(),
            backend: Backend::Fast,
            fidelity: FidelityParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_instances < 1 {
            return Err(Error::config("min_instances must be >= 1"));
        }
        if self.max_instances > 10 {
            return Err(Error::config("max_instances must be <= 10"));
        }
        if self.min_instances > self.max_instances {
            return Err(Error::config("min_instances must be <= max_instances"));
        }
        if !(self.min_instances..=self.max_instances).contains(&self.initial_instances) {
            return Err(Error::config(
                "initial_instances must lie within [min_instances, max_instances]",
            ));
        }
        if self.steps_per_hour == 0 {
            return Err(Error::config("steps_per_hour must be > 0"));
        }
        if !(self.capacity_per_instance > 0.0) {
            return Err(Error::config("capacity_per_instance must be > 0"));
        }
        if !(self.base_latency > 0.0) {
            return Err(Error::config("base_latency must be > 0"));
        }
        if !(0.0 < self.utilization_cap_for_latency && self.utilization_cap_for_latency < 100.0) {
            return Err(Error::config("utilization_cap_for_latency must be in (0, 100)"));
        }
        if !(self.packets_per_request >= 0.0) {
            return Err(Error::config("packets_per_request must be >= 0"));
        }
        if !(self.sigma_coeff >= 0.0) {
            return Err(Error::config("sigma_coeff must be >= 0"));
        }
        if !(self.pricing.hourly_price > 0.0) {
            return Err(Error::config("hourly_price must be > 0"));
        }
        self.fidelity.validate()
    }
}

/// Closed-form workload model: linear CPU scaling law with an M/M/1-style
/// latency blow-up capped below saturation.
pub fn fast_model(requests: u64, fleet: u32, config: &EnvConfig) -> (f64, f64, f64) {
    debug_assert!(fleet >= 1);
    let cpu = (100.0 * requests as f64 / (fleet as f64 * config.capacity_per_instance)).min(100.0);
    let rho = cpu.min(config.utilization_cap_for_latency) / 100.0;
    let latency = config.base_latency / (1.0 - rho);
    let packets_in = config.packets_per_request * requests as f64 / fleet as f64;
    (cpu, latency, packets_in)
}

/// Extra diagnostics attached to every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Money charged this step (front-loaded launches plus hourly accruals).
    pub charges: f64,
    pub penalty_multiplier: u32,
    /// Scheduled (unperturbed) request count for the interval.
    pub raw_requests: u64,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Trace-driven autoscaling environment.
pub struct CloudEnv {
    config: EnvConfig,
    schedule: TraceSchedule,
    noise: NoiseSpec,
    ledger: FleetLedger,
    fidelity: FidelityState,
    next_index: usize,
    pending_launch_charges: f64,
    done: bool,
    started: bool,
}

impl CloudEnv {
    pub fn new(config: EnvConfig, schedule: TraceSchedule) -> Result<Self> {
        config.validate()?;
        if schedule.is_empty() {
            return Err(Error::config("schedule must not be empty"));
        }
        let ledger = FleetLedger::new(config.pricing.clone(), config.steps_per_hour)?;
        let fidelity = FidelityState::new(config.fidelity.clone(), schedule.interval_seconds(), 0);
        Ok(CloudEnv {
            config,
            schedule,
            noise: NoiseSpec::disabled(),
            ledger,
            fidelity,
            next_index: 0,
            pending_launch_charges: 0.0,
            done: false,
            started: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn schedule(&self) -> &TraceSchedule {
        &self.schedule
    }

    pub fn episode_len(&self) -> usize {
        self.schedule.len()
    }

    pub fn fleet_size(&self) -> u32 {
        self.ledger.fleet_size()
    }

    /// Starts a fresh episode. Separate noise and job-demand streams are
    /// derived from `seed`, so episodes with the same seed are bit-identical.
    ///
    /// Returns a preview observation for interval 0 under the initial fleet
    /// with no queued work; the first `step` call then consumes interval 0.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.noise = NoiseSpec::new(self.config.sigma_coeff, stream_seed(seed, 0x6e6f6973))?;
        self.ledger = FleetLedger::new(self.config.pricing.clone(), self.config.steps_per_hour)?;
        self.fidelity = FidelityState::new(
            self.config.fidelity.clone(),
            self.schedule.interval_seconds(),
            stream_seed(seed, 0x64656d64),
        );
        self.next_index = 0;
        self.done = false;
        self.started = true;
        self.pending_launch_charges = self
            .ledger
            .launch_instances(self.config.initial_instances, 0)?;

        let fleet = self.ledger.fleet_size();
        let requests = self.schedule.perturbed_count(0, &self.noise)?;
        let (cpu, latency) = match self.config.backend {
            Backend::Fast => {
                let (cpu, latency, _) = fast_model(requests, fleet, &self.config);
                (cpu, latency)
            }
            // Preview only: peek at interval 0 without consuming queue state.
            Backend::Fidelity => self.fidelity.preview(0, requests, fleet, self.config.base_latency),
        };
        let packets_in = self.config.packets_per_request * requests as f64 / fleet as f64;
        Ok(Observation {
            instance_count: fleet,
            cpu_utilization: cpu,
            network_packets_in: packets_in,
            latency,
            request_count: requests,
        })
    }

    /// Applies `action`, advances one interval, accrues billing, and returns
    /// the new observation with its reward.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if !self.started {
            return Err(Error::config("step called before reset"));
        }
        if self.done {
            return Err(Error::config("step called after episode end"));
        }
        let step = self.next_index as u64;
        let mut charges = std::mem::take(&mut self.pending_launch_charges);

        // Apply the fleet delta, clamped silently to the configured bounds.
        let fleet = self.ledger.fleet_size() as i64;
        let target = (fleet + action.delta() as i64)
            .clamp(self.config.min_instances as i64, self.config.max_instances as i64);
        let realized = target - fleet;
        if realized > 0 {
            charges += self.ledger.launch_instances(realized as u32, step)?;
        } else if realized < 0 {
            self.ledger.terminate_instances((-realized) as u32, step)?;
        }
        let fleet = self.ledger.fleet_size();

        // Advance one interval through the workload model.
        let raw_requests = self.schedule.counts()[self.next_index];
        let requests = self.schedule.perturbed_count(self.next_index, &self.noise)?;
        let (cpu, latency) = match self.config.backend {
            Backend::Fast => {
                let (cpu, latency, _) = fast_model(requests, fleet, &self.config);
                (cpu, latency)
            }
            Backend::Fidelity => {
                self.fidelity
                    .run_interval(self.next_index, requests, fleet, self.config.base_latency)
            }
        };
        let packets_in = self.config.packets_per_request * requests as f64 / fleet as f64;

        charges += self.ledger.accrue_step(step)?;
        let penalty = self.config.penalties.multiplier(cpu);
        let reward = step_reward(
            charges,
            fleet,
            cpu,
            &self.config.pricing,
            &self.config.penalties,
            self.config.steps_per_hour,
        );

        self.next_index += 1;
        self.done = self.next_index == self.schedule.len();

        Ok(StepResult {
            observation: Observation {
                instance_count: fleet,
                cpu_utilization: cpu,
                network_packets_in: packets_in,
                latency,
                request_count: requests,
            },
            reward,
            done: self.done,
            info: StepInfo {
                charges,
                penalty_multiplier: penalty,
                raw_requests,
            },
        })
    }
}
