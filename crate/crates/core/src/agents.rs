//! DQN and dueling double DQN agents: sliding observation windows, FIFO
//! replay, target networks with hard or soft maintenance, and the per-step
//! training loop.

use std::collections::VecDeque;
use std::path::Path;

use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::nn::{
    backward_and_step, io, Adam, ArchDescriptor, GradBuffers, HeadKind, QNetworkParams, Scratch,
    TrainSample,
};
use crate::rng::{stream_seed, Xoshiro256StarStar};

/// One replay record.
#[derive(Debug, Clone)]
pub struct Transition {
    /// Normalized window the action was taken from, `channels * K` values.
    pub window: Vec<f32>,
    pub action: usize,
    pub reward: f32,
    pub next_window: Vec<f32>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO replay store with uniform sampling.
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
    rng: Xoshiro256StarStar,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be > 0"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::new(),
            head: 0,
            rng: Xoshiro256StarStar::new(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Insertion order position of slot `index` (0 = oldest still stored).
    pub fn age_rank(&self, index: usize) -> usize {
        if self.items.len() < self.capacity {
            index
        } else {
            (index + self.capacity - self.head) % self.capacity
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Uniform sample of distinct slot indices; empty while fewer than
    /// `batch` transitions are stored.
    pub fn sample_indices(&mut self, batch: usize) -> Vec<usize> {
        let n = self.items.len();
        if batch == 0 || n < batch {
            return Vec::new();
        }
        // Floyd's algorithm: `batch` distinct indices, O(batch) draws.
        let mut picked: Vec<usize> = Vec::with_capacity(batch);
        for j in (n - batch)..n {
            let t = self.rng.next_below(j as u64 + 1) as usize;
            if picked.contains(&t) {
                picked.push(j);
            } else {
                picked.push(t);
            }
        }
        picked
    }

    /// Pushes a transition, then returns a uniform batch (cloned) or an
    /// empty vector while warming up.
    pub fn push_and_sample(&mut self, t: Transition, batch: usize) -> Vec<Transition> {
        self.push(t);
        self.sample_indices(batch)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect()
    }
}

/// Vanilla DQN bootstrap target:
/// `r` if terminal, else `r + gamma * max_a Q_target(next)[a]`.
pub fn dqn_target(t: &Transition, target_net: &QNetworkParams, gamma: f32, scratch: &mut Scratch) -> f32 {
    if t.terminal {
        return t.reward;
    }
    let q = target_net.forward_into(&t.next_window, scratch);
    t.reward + gamma * q.iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Double-Q target: the online network selects the action (lowest index on
/// ties), the target network evaluates it.
pub fn double_target(
    t: &Transition,
    online_net: &QNetworkParams,
    target_net: &QNetworkParams,
    gamma: f32,
    scratch: &mut Scratch,
) -> f32 {
    if t.terminal {
        return t.reward;
    }
    let q_online = online_net.forward_into(&t.next_window, scratch);
    let mut best = 0;
    for i in 1..5 {
        if q_online[i] > q_online[best] {
            best = i;
        }
    }
    let q_target = target_net.forward_into(&t.next_window, scratch);
    t.reward + gamma * q_target[best]
}

/// Polyak step: every target tensor moves as
/// `theta_target <- tau * theta_online + (1 - tau) * theta_target`.
pub fn soft_update(target: &mut QNetworkParams, online: &QNetworkParams, tau: f32) -> Result<()> {
    if target.descriptor() != online.descriptor() {
        return Err(Error::config("soft_update: architecture descriptors differ"));
    }
    for (t, o) in target.tensors_mut().iter_mut().zip(online.tensors()) {
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

/// Linear epsilon anneal over epochs, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_epochs: u32,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            anneal_epochs: 20,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, epoch: u32) -> f64 {
        if self.anneal_epochs == 0 || epoch >= self.anneal_epochs {
            return self.end;
        }
        self.start + (self.end - self.start) * epoch as f64 / self.anneal_epochs as f64
    }
}

/// Normalization scales mapping an [`Observation`] onto the five NN input
/// channels; documented so saved weights stay portable across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsNormalizer {
    pub max_instances: f64,
    pub latency_scale: f64,
    pub packets_scale: f64,
    pub requests_scale: f64,
}

impl Default for ObsNormalizer {
    fn default() -> Self {
        ObsNormalizer {
            max_instances: 10.0,
            latency_scale: 1.0,
            packets_scale: 10_000.0,
            requests_scale: 5_000.0,
        }
    }
}

impl ObsNormalizer {
    pub fn normalize(&self, obs: &Observation) -> [f32; 5] {
        [
            (obs.instance_count as f64 / self.max_instances) as f32,
            (obs.cpu_utilization / 100.0) as f32,
            (obs.latency / self.latency_scale) as f32,
            (obs.network_packets_in / self.packets_scale) as f32,
            (obs.request_count as f64 / self.requests_scale) as f32,
        ]
    }
}

/// Which deep learner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeepKind {
    Dqn,
    D3qn,
}

impl DeepKind {
    pub fn head(self) -> HeadKind {
        match self {
            DeepKind::Dqn => HeadKind::Linear,
            DeepKind::D3qn => HeadKind::Dueling,
        }
    }
}

/// Hyper-parameters of the deep agents.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub gamma: f32,
    pub batch: usize,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub epsilon: EpsilonSchedule,
    /// DQN: gradient steps between hard target copies (one simulated day).
    pub target_copy_period: u64,
    /// D3QN: per-tick soft update rate.
    pub tau: f32,
    pub learning_rate: f32,
    pub arch: ArchDescriptor,
    pub normalizer: ObsNormalizer,
}

impl AgentConfig {
    pub fn standard(kind: DeepKind) -> Self {
        AgentConfig {
            gamma: 0.99,
            batch: 32,
            replay_capacity: 50_000,
            warmup: 1_000,
            epsilon: EpsilonSchedule::default(),
            target_copy_period: 288,
            tau: 0.001,
            learning_rate: 1e-4,
            arch: ArchDescriptor::standard(kind.head()),
            normalizer: ObsNormalizer::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must be in (0,1]"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be > 0"));
        }
        if self.warmup > self.replay_capacity {
            return Err(Error::config("warmup must not exceed replay capacity"));
        }
        if self.warmup < self.batch {
            return Err(Error::config("warmup must cover at least one batch"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau must be in (0,1]"));
        }
        if !(self.target_copy_period > 0) {
            return Err(Error::config("target_copy_period must be > 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        self.arch.validate()
    }
}

/// DQN / D3QN agent owning its networks, replay, window and exploration
/// state.
pub struct DeepAgent {
    kind: DeepKind,
    cfg: AgentConfig,
    online: QNetworkParams,
    target: QNetworkParams,
    opt: Adam,
    replay: ReplayBuffer,
    window: VecDeque<[f32; 5]>,
    epsilon: f64,
    rng: Xoshiro256StarStar,
    grad_steps: u64,
    scratch: Scratch,
    grads: GradBuffers,
    window_buf: Vec<f32>,
    next_window_buf: Vec<f32>,
    batch_targets: Vec<f32>,
}

impl DeepAgent {
    /// Fresh agent. Weight init, exploration and replay sampling streams are
    /// all derived from `seed`.
    pub fn new(kind: DeepKind, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.arch.head != kind.head() {
            return Err(Error::config("architecture head does not match agent kind"));
        }
        let online = QNetworkParams::init(cfg.arch.clone(), stream_seed(seed, 1))?;
        let target = online.clone();
        let opt = Adam::new(cfg.learning_rate, &online);
        let replay = ReplayBuffer::new(cfg.replay_capacity, stream_seed(seed, 2))?;
        let scratch = Scratch::new(&cfg.arch);
        let grads = GradBuffers::new(&online);
        let k = cfg.arch.window;
        Ok(DeepAgent {
            kind,
            epsilon: cfg.epsilon.start,
            rng: Xoshiro256StarStar::new(stream_seed(seed, 3)),
            online,
            target,
            opt,
            replay,
            window: VecDeque::with_capacity(k),
            grad_steps: 0,
            scratch,
            grads,
            window_buf: vec![0.0; 5 * k],
            next_window_buf: vec![0.0; 5 * k],
            batch_targets: Vec::new(),
            cfg,
        })
    }

    pub fn kind(&self) -> DeepKind {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online_params(&self) -> &QNetworkParams {
        &self.online
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Replaces the online and target parameters (transfer warm start).
    pub fn load_weights(&mut self, params: QNetworkParams) -> Result<()> {
        if params.descriptor() != &self.cfg.arch {
            return Err(Error::config(
                "loaded weights do not match the agent architecture",
            ));
        }
        self.target = params.clone();
        self.opt = Adam::new(self.cfg.learning_rate, &params);
        self.online = params;
        Ok(())
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        io::save_params(&self.online, path)
    }

    /// Sets the exploration rate for an epoch.
    pub fn begin_epoch(&mut self, epoch: u32) {
        self.epsilon = self.cfg.epsilon.value(epoch);
    }

    /// Clears the sliding window; replay, weights and epsilon persist.
    pub fn begin_episode(&mut self) {
        self.window.clear();
    }

    /// Normalizes and appends the observation (repeat-first padding on the
    /// first step), then picks an epsilon-greedy action for the current
    /// window.
    pub fn act(&mut self, obs: &Observation) -> Action {
        let x = self.cfg.normalizer.normalize(obs);
        let k = self.cfg.arch.window;
        if self.window.is_empty() {
            for _ in 0..k {
                self.window.push_back(x);
            }
        } else {
            self.window.pop_front();
            self.window.push_back(x);
        }
        fill_window(&self.window, k, &mut self.window_buf);

        if self.rng.next_f64() < self.epsilon {
            return Action::from_index(self.rng.next_below(5) as usize).unwrap();
        }
        let q = self.online.forward_into(&self.window_buf, &mut self.scratch);
        let mut best = 0;
        for i in 1..5 {
            if q[i] > q[best] {
                best = i;
            }
        }
        Action::from_index(best).unwrap()
    }

    /// Builds the replay transition for the step taken from the current
    /// window that produced `next_obs`.
    pub fn transition(&mut self, action: Action, reward: f64, next_obs: &Observation, terminal: bool) -> Transition {
        let k = self.cfg.arch.window;
        let x = self.cfg.normalizer.normalize(next_obs);
        // The next window is the current one advanced by the new
        // observation, exactly what the next `act` call will see.
        let mut shifted: VecDeque<[f32; 5]> = self.window.clone();
        if shifted.is_empty() {
            for _ in 0..k {
                shifted.push_back(x);
            }
        } else {
            shifted.pop_front();
            shifted.push_back(x);
        }
        fill_window(&shifted, k, &mut self.next_window_buf);
        Transition {
            window: self.window_buf.clone(),
            action: action.index(),
            reward: reward as f32,
            next_window: self.next_window_buf.clone(),
            terminal,
        }
    }

    /// Stores the transition and, once the replay holds `warmup`
    /// transitions, performs one gradient step plus target maintenance.
    /// Returns the training loss when a step happened.
    pub fn train_tick(&mut self, t: Transition) -> Result<Option<f32>> {
        self.replay.push(t);
        if self.replay.len() < self.cfg.warmup {
            return Ok(None);
        }
        let indices = self.replay.sample_indices(self.cfg.batch);
        if indices.is_empty() {
            return Ok(None);
        }

        self.batch_targets.clear();
        for &i in &indices {
            let tr = self.replay.get(i);
            let target = match self.kind {
                DeepKind::Dqn => dqn_target(tr, &self.target, self.cfg.gamma, &mut self.scratch),
                DeepKind::D3qn => double_target(
                    tr,
                    &self.online,
                    &self.target,
                    self.cfg.gamma,
                    &mut self.scratch,
                ),
            };
            self.batch_targets.push(target);
        }
        let batch: Vec<TrainSample> = indices
            .iter()
            .zip(&self.batch_targets)
            .map(|(&i, &target)| TrainSample {
                window: &self.replay.items[i].window,
                action: self.replay.items[i].action,
                target,
            })
            .collect();
        let loss = backward_and_step(
            &mut self.online,
            &batch,
            &mut self.opt,
            &mut self.scratch,
            &mut self.grads,
        )?;
        drop(batch);
        self.grad_steps += 1;

        match self.kind {
            DeepKind::Dqn => {
                if self.grad_steps % self.cfg.target_copy_period == 0 {
                    self.target = self.online.clone();
                }
            }
            DeepKind::D3qn => {
                soft_update(&mut self.target, &self.online, self.cfg.tau)?;
            }
        }
        Ok(Some(loss))
    }
}

fn fill_window(window: &VecDeque<[f32; 5]>, k: usize, buf: &mut [f32]) {
    debug_assert_eq!(window.len(), k);
    for (t, x) in window.iter().enumerate() {
        for (c, &v) in x.iter().enumerate() {
            buf[c * k + t] = v;
        }
    }
}
