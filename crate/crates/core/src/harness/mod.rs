//! Experiment orchestration: run policy x environment x seeds for N epochs,
//! write per-epoch summaries and checkpoints, compare runs statistically and
//! drive transfer-learning experiments.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agents::{DeepAgent, EpsilonSchedule};
use crate::env::{Action, CloudEnv, Observation, StepResult};
use crate::error::{Error, Result};
use crate::nn::io as nn_io;
use crate::policy::{threshold_action, DiscretizationSpec, QTable, StateKey};
use crate::rng::{stream_seed, Xoshiro256StarStar};
use crate::stats::{paired_t_test, TTest};
use crate::trace::TraceSchedule;

pub use config::{AgentKind, EpisodeLogMode, ExperimentConfig, TraceSource};

pub const EPOCHS_CSV_HEADER: &str =
    "epoch,mean_reward,mean_instances,mean_cpu,mean_packets_in,mean_latency,total_cost,penalty_steps";
pub const EPISODE_CSV_HEADER: &str =
    "step,requests,instances,cpu,packets_in,latency,action,reward,charges";
pub const TRAIN_LOG_HEADER: &str = "epoch,step,loss,epsilon,reward";

/// Aggregates of one full schedule pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: u32,
    pub mean_reward: f64,
    pub mean_instances: f64,
    pub mean_cpu: f64,
    pub mean_packets_in: f64,
    pub mean_latency: f64,
    pub total_cost: f64,
    pub penalty_steps: u64,
}

impl EpochSummary {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.mean_reward,
            self.mean_instances,
            self.mean_cpu,
            self.mean_packets_in,
            self.mean_latency,
            self.total_cost,
            self.penalty_steps
        )
    }
}

/// One seed's run: epoch summaries plus where its files were written.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub epochs: Vec<EpochSummary>,
    pub dir: PathBuf,
}

impl SeedRun {
    pub fn epochs_csv_path(&self) -> PathBuf {
        self.dir.join("epochs.csv")
    }

    pub fn final_weights_path(&self) -> PathBuf {
        self.dir.join("weights_final.qnw")
    }

    /// Mean of `mean_reward` over epochs `[from, to)`.
    pub fn mean_reward_over(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.epochs.len());
        let slice = &self.epochs[from.min(to)..to];
        slice.iter().map(|e| e.mean_reward).sum::<f64>() / slice.len().max(1) as f64
    }
}

/// All seeds of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub label: String,
    pub runs: Vec<SeedRun>,
}

struct EpochAccumulator {
    steps: u64,
    reward: f64,
    instances: f64,
    cpu: f64,
    packets: f64,
    latency: f64,
    cost: f64,
    penalty_steps: u64,
}

impl EpochAccumulator {
    fn new() -> Self {
        EpochAccumulator {
            steps: 0,
            reward: 0.0,
            instances: 0.0,
            cpu: 0.0,
            packets: 0.0,
            latency: 0.0,
            cost: 0.0,
            penalty_steps: 0,
        }
    }

    fn add(&mut self, r: &StepResult) {
        self.steps += 1;
        self.reward += r.reward;
        self.instances += r.observation.instance_count as f64;
        self.cpu += r.observation.cpu_utilization;
        self.packets += r.observation.network_packets_in;
        self.latency += r.observation.latency;
        self.cost += r.info.charges;
        if r.info.penalty_multiplier > 0 {
            self.penalty_steps += 1;
        }
    }

    fn finish(self, epoch: u32) -> EpochSummary {
        let n = self.steps.max(1) as f64;
        EpochSummary {
            epoch,
            mean_reward: self.reward / n,
            mean_instances: self.instances / n,
            mean_cpu: self.cpu / n,
            mean_packets_in: self.packets / n,
            mean_latency: self.latency / n,
            total_cost: self.cost,
            penalty_steps: self.penalty_steps,
        }
    }
}

enum Driver {
    Threshold,
    Tabular {
        table: QTable,
        spec: DiscretizationSpec,
        rng: Xoshiro256StarStar,
        schedule: EpsilonSchedule,
        epsilon: f64,
        state: StateKey,
    },
    Deep(Box<DeepAgent>),
}

impl Driver {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(match cfg.agent {
            AgentKind::Threshold => Driver::Threshold,
            AgentKind::QTable => Driver::Tabular {
                table: QTable::new(cfg.alpha, cfg.gamma)?,
                spec: cfg.discretization.clone(),
                rng: Xoshiro256StarStar::new(stream_seed(seed, 4)),
                schedule: cfg.epsilon,
                epsilon: cfg.epsilon.start,
                state: [0; 5],
            },
            AgentKind::Dqn | AgentKind::D3qn => {
                let kind = cfg.agent.deep_kind().unwrap();
                let mut agent = DeepAgent::new(kind, cfg.agent_config(kind)?, seed)?;
                if let Some(path) = &cfg.init_weights {
                    let params = nn_io::load_params(path, &agent.config().arch.clone())?;
                    agent.load_weights(params)?;
                }
                Driver::Deep(Box::new(agent))
            }
        })
    }

    fn begin_epoch(&mut self, epoch: u32) {
        match self {
            Driver::Threshold => {}
            Driver::Tabular {
                schedule, epsilon, ..
            } => *epsilon = schedule.value(epoch),
            Driver::Deep(agent) => agent.begin_epoch(epoch),
        }
    }

    fn begin_episode(&mut self) {
        if let Driver::Deep(agent) = self {
            agent.begin_episode();
        }
    }

    fn act(&mut self, obs: &Observation) -> Action {
        match self {
            Driver::Threshold => threshold_action(obs.cpu_utilization),
            Driver::Tabular {
                table,
                spec,
                rng,
                epsilon,
                state,
                ..
            } => {
                *state = spec.discretize(obs);
                table.epsilon_greedy(state, *epsilon, rng)
            }
            Driver::Deep(agent) => agent.act(obs),
        }
    }

    /// Learning update after an environment step; returns the training loss
    /// when a gradient step happened.
    fn learn(&mut self, action: Action, result: &StepResult) -> Result<Option<f32>> {
        match self {
            Driver::Threshold => Ok(None),
            Driver::Tabular {
                table, spec, state, ..
            } => {
                let next = spec.discretize(&result.observation);
                table.update(*state, action.index(), result.reward, &next);
                Ok(None)
            }
            Driver::Deep(agent) => {
                let t = agent.transition(action, result.reward, &result.observation, result.done);
                agent.train_tick(t)
            }
        }
    }

    fn epsilon(&self) -> f64 {
        match self {
            Driver::Threshold => 0.0,
            Driver::Tabular { epsilon, .. } => *epsilon,
            Driver::Deep(agent) => agent.epsilon(),
        }
    }

    fn checkpoint(&self, dir: &Path, epoch: u32) -> Result<()> {
        if let Driver::Deep(agent) = self {
            agent.save_weights(&dir.join(format!("weights_ep{:03}.qnw", epoch + 1)))?;
        }
        Ok(())
    }

    fn finalize(&self, dir: &Path) -> Result<()> {
        match self {
            Driver::Threshold => Ok(()),
            Driver::Tabular { table, .. } => table.save_csv(&dir.join("qtable.csv")),
            Driver::Deep(agent) => agent.save_weights(&dir.join("weights_final.qnw")),
        }
    }
}

/// Runs the configured experiment for every seed (in parallel) and writes
/// per-seed CSVs and checkpoints under `out_dir/<label>/s<seed>/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let schedule = cfg.load_schedule()?;
    let runs: Vec<Result<SeedRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &schedule, seed))
        .collect();
    let mut collected = Vec::with_capacity(runs.len());
    for run in runs {
        collected.push(run?);
    }
    Ok(ExperimentResult {
        label: cfg.label(),
        runs: collected,
    })
}

fn run_seed(cfg: &ExperimentConfig, schedule: &TraceSchedule, seed: u64) -> Result<SeedRun> {
    let dir = cfg.out_dir.join(cfg.label()).join(format!("s{seed}"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(e, &dir))?;

    let mut env = CloudEnv::new(cfg.env_config()?, schedule.clone())?;
    let mut driver = Driver::new(cfg, seed)?;

    let mut epochs_csv = String::from(EPOCHS_CSV_HEADER);
    epochs_csv.push('\n');
    let mut train_log = if cfg.train_log {
        let mut s = String::from(TRAIN_LOG_HEADER);
        s.push('\n');
        Some(s)
    } else {
        None
    };
    let mut summaries = Vec::with_capacity(cfg.epochs as usize);

    for epoch in 0..cfg.epochs {
        driver.begin_epoch(epoch);
        driver.begin_episode();
        let mut obs = env.reset(stream_seed(seed, 1_000_000 + epoch as u64))?;

        let log_this_epoch = match cfg.episode_log {
            EpisodeLogMode::None => false,
            EpisodeLogMode::Last => epoch + 1 == cfg.epochs,
            EpisodeLogMode::All => true,
        };
        let mut episode_csv = if log_this_epoch {
            let mut s = String::from(EPISODE_CSV_HEADER);
            s.push('\n');
            Some(s)
        } else {
            None
        };

        let mut acc = EpochAccumulator::new();
        let mut step = 0u64;
        loop {
            let action = driver.act(&obs);
            let result = env.step(action)?;
            let loss = driver.learn(action, &result)?;
            acc.add(&result);
            if let Some(csv) = episode_csv.as_mut() {
                let o = &result.observation;
                let _ = writeln!(
                    csv,
                    "{step},{},{},{},{},{},{},{},{}",
                    o.request_count,
                    o.instance_count,
                    o.cpu_utilization,
                    o.network_packets_in,
                    o.latency,
                    action.delta(),
                    result.reward,
                    result.info.charges
                );
            }
            if let Some(log) = train_log.as_mut() {
                let loss_field = loss.map(|l| l.to_string()).unwrap_or_default();
                let _ = writeln!(
                    log,
                    "{epoch},{step},{loss_field},{},{}",
                    driver.epsilon(),
                    result.reward
                );
            }
            obs = result.observation;
            step += 1;
            if result.done {
                break;
            }
        }

        let summary = acc.finish(epoch);
        epochs_csv.push_str(&summary.csv_row());
        epochs_csv.push('\n');
        summaries.push(summary);
        if let Some(csv) = episode_csv {
            let path = dir.join(format!("episode_ep{:03}.csv", epoch + 1));
            fs::write(&path, csv).map_err(|e| Error::io(e, &path))?;
        }
        driver.checkpoint(&dir, epoch)?;
    }

    let path = dir.join("epochs.csv");
    fs::write(&path, epochs_csv).map_err(|e| Error::io(e, &path))?;
    if let Some(log) = train_log {
        let path = dir.join("train_log.csv");
        fs::write(&path, log).map_err(|e| Error::io(e, &path))?;
    }
    driver.finalize(&dir)?;

    Ok(SeedRun {
        seed,
        epochs: summaries,
        dir,
    })
}

/// Parsed epoch summaries of a written run.
pub fn read_epochs_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
    let mut lines = content.lines();
    let header = lines.next().unwrap_or("");
    if header != EPOCHS_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected epochs CSV header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|_| Error::Parse {
            line: lineno + 2,
            msg: format!("bad numeric row '{line}'"),
        })?);
    }
    Ok(rows)
}

fn metric_column(metric: &str) -> Result<usize> {
    EPOCHS_CSV_HEADER
        .split(',')
        .position(|name| name == metric)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown metric '{metric}' (expected one of: {EPOCHS_CSV_HEADER})"
            ))
        })
}

/// Statistical comparison of two runs on one epoch-summary metric.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub metric: String,
    pub epochs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: TTest,
    /// Histogram of per-epoch differences: (bin low, bin high, count).
    pub histogram: Vec<(f64, f64, u64)>,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "metric: {}", self.metric);
        let _ = writeln!(out, "epochs: {}", self.epochs);
        let _ = writeln!(out, "mean_a: {}", self.mean_a);
        let _ = writeln!(out, "mean_b: {}", self.mean_b);
        let _ = writeln!(out, "mean_diff: {}", self.test.mean_diff);
        let _ = writeln!(out, "t: {}", self.test.t);
        let _ = writeln!(out, "p: {}", self.test.p);
        let _ = writeln!(out, "histogram (diff_low,diff_high,count):");
        for (lo, hi, n) in &self.histogram {
            let _ = writeln!(out, "{lo},{hi},{n}");
        }
        out
    }
}

/// Paired comparison of two epoch-summary CSVs on `metric` (per-epoch
/// pairing), with difference histogram data.
pub fn compare_runs(a: &Path, b: &Path, metric: &str) -> Result<CompareReport> {
    let col = metric_column(metric)?;
    let rows_a = read_epochs_csv(a)?;
    let rows_b = read_epochs_csv(b)?;
    if rows_a.len() != rows_b.len() {
        return Err(Error::config(format!(
            "epoch count mismatch: {} has {}, {} has {}",
            a.display(),
            rows_a.len(),
            b.display(),
            rows_b.len()
        )));
    }
    let xs: Vec<f64> = rows_a.iter().map(|r| r[col]).collect();
    let ys: Vec<f64> = rows_b.iter().map(|r| r[col]).collect();
    let test = paired_t_test(&xs, &ys)?;
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).collect();
    Ok(CompareReport {
        metric: metric.to_string(),
        epochs: xs.len(),
        mean_a: xs.iter().sum::<f64>() / xs.len() as f64,
        mean_b: ys.iter().sum::<f64>() / ys.len() as f64,
        test,
        histogram: histogram(&diffs, 20),
    })
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, u64)> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() || min == max {
        return vec![(min, max, values.len() as u64)];
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = (((v - min) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, n)| (min + i as f64 * width, min + (i + 1) as f64 * width, n))
        .collect()
}

/// One seed's warm-vs-cold outcome.
#[derive(Debug, Clone)]
pub struct TransferSeedOutcome {
    pub seed: u64,
    pub cold_first_epochs_mean: f64,
    pub warm_first_epochs_mean: f64,
}

/// Result of a transfer experiment.
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub source_weights: PathBuf,
    pub first_epochs: usize,
    pub outcomes: Vec<TransferSeedOutcome>,
    pub cold: ExperimentResult,
    pub warm: ExperimentResult,
}

impl TransferReport {
    /// Seeds where warm starting did not hurt early reward.
    pub fn warm_wins(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| o.warm_first_epochs_mean >= o.cold_first_epochs_mean)
            .count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source_weights: {}", self.source_weights.display());
        let _ = writeln!(out, "first_epochs: {}", self.first_epochs);
        let _ = writeln!(out, "seed,cold_mean_reward,warm_mean_reward,warm_at_least_cold");
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                o.seed,
                o.cold_first_epochs_mean,
                o.warm_first_epochs_mean,
                o.warm_first_epochs_mean >= o.cold_first_epochs_mean
            );
        }
        let _ = writeln!(out, "warm_wins: {} of {}", self.warm_wins(), self.outcomes.len());
        out
    }
}

/// Runs the same fidelity-environment config twice per seed, cold
/// (default-initialized) and warm (weights loaded from `source_weights`),
/// and reports early-learning reward for each.
pub fn transfer_experiment(cfg: &ExperimentConfig, source_weights: &Path) -> Result<TransferReport> {
    if cfg.agent.deep_kind().is_none() {
        return Err(Error::config("transfer requires a dqn or d3qn agent"));
    }
    if cfg.backend != crate::env::Backend::Fidelity {
        return Err(Error::config("transfer experiments target the fidelity backend"));
    }
    // Fail fast on unreadable/mismatched weights before any run starts.
    let kind = cfg.agent.deep_kind().unwrap();
    nn_io::load_params(source_weights, &cfg.agent_config(kind)?.arch)?;

    let mut cold_cfg = cfg.clone();
    cold_cfg.init_weights = None;
    cold_cfg.out_dir = cfg.out_dir.join("cold");
    let mut warm_cfg = cfg.clone();
    warm_cfg.init_weights = Some(source_weights.to_path_buf());
    warm_cfg.out_dir = cfg.out_dir.join("warm");

    let cold = run_experiment(&cold_cfg)?;
    let warm = run_experiment(&warm_cfg)?;

    let first_epochs = 5.min(cfg.epochs as usize);
    let outcomes = cold
        .runs
        .iter()
        .zip(&warm.runs)
        .map(|(c, w)| TransferSeedOutcome {
            seed: c.seed,
            cold_first_epochs_mean: c.mean_reward_over(0, first_epochs),
            warm_first_epochs_mean: w.mean_reward_over(0, first_epochs),
        })
        .collect();
    Ok(TransferReport {
        source_weights: source_weights.to_path_buf(),
        first_epochs,
        outcomes,
        cold,
        warm,
    })
}
