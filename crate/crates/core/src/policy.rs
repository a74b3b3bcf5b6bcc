//! Human-defined threshold baseline and tabular Q-learning.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

/// CPU-threshold scaling rule.
///
/// Boundary closure: exactly 70 and exactly 50 hold, exactly 90 adds one,
/// exactly 30 removes one.
pub fn threshold_action(cpu_utilization: f64) -> Action {
    if cpu_utilization > 90.0 {
        Action::Up2
    } else if cpu_utilization > 70.0 {
        Action::Up1
    } else if cpu_utilization >= 50.0 {
        Action::Hold
    } else if cpu_utilization >= 30.0 {
        Action::Down1
    } else {
        Action::Down2
    }
}

/// Discrete state key: per-channel bin indices
/// (instances, cpu, latency, packets, requests).
pub type StateKey = [u8; 5];

/// Non-linear binning of the five observation channels. Instance counts map
/// to themselves; the other channels use half-open bins `[edge_i, edge_i+1)`
/// with an open-ended final bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationSpec {
    pub cpu_edges: Vec<f64>,
    pub latency_edges: Vec<f64>,
    pub packets_edges: Vec<f64>,
    pub requests_edges: Vec<f64>,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        DiscretizationSpec {
            cpu_edges: vec![30.0, 50.0, 70.0, 80.0, 90.0],
            latency_edges: vec![0.1, 0.5, 1.0, 5.0],
            packets_edges: vec![1e2, 1e3, 1e4, 1e5],
            requests_edges: vec![1e2, 1e3, 1e4, 1e5],
        }
    }
}

impl DiscretizationSpec {
    pub fn validate(&self) -> Result<()> {
        for edges in [
            &self.cpu_edges,
            &self.latency_edges,
            &self.packets_edges,
            &self.requests_edges,
        ] {
            if edges.is_empty() {
                return Err(Error::config("bin edges must not be empty"));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("bin edges must be strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn discretize(&self, obs: &Observation) -> StateKey {
        [
            obs.instance_count.saturating_sub(1) as u8,
            bin_index(obs.cpu_utilization, &self.cpu_edges),
            bin_index(obs.latency, &self.latency_edges),
            bin_index(obs.network_packets_in, &self.packets_edges),
            bin_index(obs.request_count as f64, &self.requests_edges),
        ]
    }
}

fn bin_index(value: f64, edges: &[f64]) -> u8 {
    edges.iter().take_while(|&&e| value >= e).count() as u8
}

/// Action-value table over discretized states, default 0 on first touch.
#[derive(Debug, Clone)]
pub struct QTable {
    values: HashMap<StateKey, [f64; 5]>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("alpha must be in (0,1], got {alpha}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::config(format!("gamma must be in (0,1], got {gamma}")));
        }
        Ok(QTable {
            values: HashMap::new(),
            alpha,
            gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn q_values(&self, state: &StateKey) -> [f64; 5] {
        self.values.get(state).copied().unwrap_or([0.0; 5])
    }

    /// One off-policy update:
    /// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
    /// Returns the updated entry value.
    pub fn update(&mut self, state: StateKey, action: usize, reward: f64, next_state: &StateKey) -> f64 {
        debug_assert!(action < 5);
        let next_max = self
            .q_values(next_state)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let entry = self.values.entry(state).or_insert([0.0; 5]);
        entry[action] += self.alpha * (reward + self.gamma * next_max - entry[action]);
        entry[action]
    }

    /// Greedy action (lowest index wins ties).
    pub fn greedy(&self, state: &StateKey) -> Action {
        let q = self.q_values(state);
        let mut best = 0;
        for (i, &v) in q.iter().enumerate().skip(1) {
            if v > q[best] {
                best = i;
            }
        }
        Action::from_index(best).unwrap()
    }

    /// Epsilon-greedy: uniform random action with probability `epsilon`,
    /// otherwise greedy.
    pub fn epsilon_greedy(&self, state: &StateKey, epsilon: f64, rng: &mut Xoshiro256StarStar) -> Action {
        debug_assert!((0.0..=1.0).contains(&epsilon));
        if rng.next_f64() < epsilon {
            Action::from_index(rng.next_below(5) as usize).unwrap()
        } else {
            self.greedy(state)
        }
    }

    /// Writes the table as CSV, rows sorted by state key.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<&StateKey> = self.values.keys().collect();
        keys.sort_unstable();
        let mut out = String::from("i_bin,cpu_bin,lat_bin,pkt_bin,req_bin,q0,q1,q2,q3,q4\n");
        for k in keys {
            let q = &self.values[k];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                k[0], k[1], k[2], k[3], k[4], q[0], q[1], q[2], q[3], q[4]
            );
        }
        fs::write(path, out).map_err(|e| Error::io(e, path))
    }

    /// Loads a table snapshot written by [`save_csv`](Self::save_csv).
    pub fn load_csv(path: &Path, alpha: f64, gamma: f64) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
        let mut table = QTable::new(alpha, gamma)?;
        let mut lines = content.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "i_bin,cpu_bin,lat_bin,pkt_bin,req_bin,q0,q1,q2,q3,q4" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "bad Q-table header".into(),
                })
            }
        }
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected 10 fields, found {}", fields.len()),
                });
            }
            let parse_err = |f: &str| Error::Parse {
                line: lineno + 1,
                msg: format!("bad number '{f}'"),
            };
            let mut key = [0u8; 5];
            for (i, f) in fields[..5].iter().enumerate() {
                key[i] = f.trim().parse().map_err(|_| parse_err(f))?;
            }
            let mut q = [0f64; 5];
            for (i, f) in fields[5..].iter().enumerate() {
                q[i] = f.trim().parse().map_err(|_| parse_err(f))?;
            }
            table.values.insert(key, q);
        }
        Ok(table)
    }
}
