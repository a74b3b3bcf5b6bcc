//! Experiment configuration: plain `key = value` files with `#` comments.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::{AgentConfig, DeepKind, EpsilonSchedule, ObsNormalizer};
use crate::billing::{load_pricing, InstancePricing, PenaltySchedule};
use crate::env::{Backend, EnvConfig};
use crate::env::fidelity::FidelityParams;
use crate::error::{Error, Result};
use crate::nn::{ArchDescriptor, ConvSpec};
use crate::policy::DiscretizationSpec;
use crate::trace::{self, TraceSchedule};

/// Which policy drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Threshold,
    QTable,
    Dqn,
    D3qn,
}

impl AgentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(AgentKind::Threshold),
            "qtable" => Ok(AgentKind::QTable),
            "dqn" => Ok(AgentKind::Dqn),
            "d3qn" => Ok(AgentKind::D3qn),
            _ => Err(Error::config(format!(
                "unknown agent '{s}' (expected threshold|qtable|dqn|d3qn)"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Threshold => "threshold",
            AgentKind::QTable => "qtable",
            AgentKind::Dqn => "dqn",
            AgentKind::D3qn => "d3qn",
        }
    }

    pub fn deep_kind(self) -> Option<DeepKind> {
        match self {
            AgentKind::Dqn => Some(DeepKind::Dqn),
            AgentKind::D3qn => Some(DeepKind::D3qn),
            _ => None,
        }
    }
}

pub fn parse_backend(s: &str) -> Result<Backend> {
    match s {
        "fast" => Ok(Backend::Fast),
        "fidelity" => Ok(Backend::Fidelity),
        _ => Err(Error::config(format!(
            "unknown env backend '{s}' (expected fast|fidelity)"
        ))),
    }
}

pub fn backend_label(b: Backend) -> &'static str {
    match b {
        Backend::Fast => "fast",
        Backend::Fidelity => "fidelity",
    }
}

/// How much per-step data to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeLogMode {
    None,
    Last,
    All,
}

/// Where the request schedule comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceSource {
    File(PathBuf),
    Synthetic { days: u32, seed: u64 },
}

/// Full description of one experiment (agent x backend x seeds x epochs).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub agent: AgentKind,
    pub backend: Backend,
    pub epochs: u32,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub init_weights: Option<PathBuf>,
    pub quick: bool,
    pub episode_log: EpisodeLogMode,
    pub train_log: bool,

    pub trace: TraceSource,
    pub trace_scale: f64,
    pub interval_seconds: u32,

    pub sigma_coeff: f64,
    pub capacity_per_instance: f64,
    pub base_latency: f64,
    pub utilization_cap_for_latency: f64,
    pub packets_per_request: f64,
    pub min_instances: u32,
    pub max_instances: u32,
    pub initial_instances: u32,
    pub steps_per_hour: u32,
    pub instance_type: String,
    pub hourly_price: f64,
    pub pricing_file: Option<PathBuf>,
    pub fidelity: FidelityParams,

    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub epsilon: EpsilonSchedule,
    pub target_copy_period: u64,
    pub tau: f64,
    pub learning_rate: f64,
    pub window: usize,
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub kernel_width: usize,
    pub normalizer: ObsNormalizer,

    pub alpha: f64,
    pub discretization: DiscretizationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        ExperimentConfig {
            agent: AgentKind::Threshold,
            backend: Backend::Fast,
            epochs: 100,
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("out"),
            init_weights: None,
            quick: false,
            episode_log: EpisodeLogMode::Last,
            train_log: false,
            trace: TraceSource::Synthetic { days: 30, seed: 7 },
            trace_scale: 20.0,
            interval_seconds: 300,
            sigma_coeff: 1.0,
            capacity_per_instance: env.capacity_per_instance,
            base_latency: env.base_latency,
            utilization_cap_for_latency: env.utilization_cap_for_latency,
            packets_per_request: env.packets_per_request,
            min_instances: env.min_instances,
            max_instances: env.max_instances,
            initial_instances: env.initial_instances,
            steps_per_hour: env.steps_per_hour,
            instance_type: "m4.large".into(),
            hourly_price: 1.0,
            pricing_file: None,
            fidelity: FidelityParams::default(),
            gamma: 0.99,
            batch_size: 32,
            replay_capacity: 50_000,
            warmup: 1_000,
            epsilon: EpsilonSchedule::default(),
            target_copy_period: 288,
            tau: 0.001,
            learning_rate: 1e-4,
            window: 12,
            conv_layers: 4,
            conv_filters: 32,
            kernel_width: 3,
            normalizer: ObsNormalizer::default(),
            alpha: 0.1,
            discretization: DiscretizationSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file. Unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
        Self::from_str_content(&content)
    }

    pub fn from_str_content(content: &str) -> Result<Self> {
        let mut map: HashMap<String, (usize, String)> = HashMap::new();
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lineno + 1,
                msg: format!("expected 'key = value', found '{line}'"),
            })?;
            map.insert(key.trim().to_string(), (lineno + 1, value.trim().to_string()));
        }
        let mut cfg = ExperimentConfig::default();
        let mut reader = KeyReader { map };
        cfg.apply_reader(&mut reader)?;
        reader.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_reader(&mut self, r: &mut KeyReader) -> Result<()> {
        if let Some(v) = r.take("agent")? {
            self.agent = AgentKind::parse(&v)?;
        }
        if let Some(v) = r.take("env")? {
            self.backend = parse_backend(&v)?;
        }
        r.num("epochs", &mut self.epochs)?;
        if let Some(v) = r.take("seeds")? {
            self.seeds = parse_seed_list(&v)?;
        }
        if let Some(v) = r.take("out_dir")? {
            self.out_dir = PathBuf::from(v);
        }
        if let Some(v) = r.take("init_weights")? {
            self.init_weights = Some(PathBuf::from(v));
        }
        r.bool("quick", &mut self.quick)?;
        if let Some(v) = r.take("episode_log")? {
            self.episode_log = match v.as_str() {
                "none" => EpisodeLogMode::None,
                "last" => EpisodeLogMode::Last,
                "all" => EpisodeLogMode::All,
                _ => return Err(Error::config(format!("episode_log must be none|last|all, got '{v}'"))),
            };
        }
        r.bool("train_log", &mut self.train_log)?;

        if let Some(v) = r.take("trace")? {
            self.trace = if v == "synthetic" {
                TraceSource::Synthetic { days: 30, seed: 7 }
            } else {
                TraceSource::File(PathBuf::from(v))
            };
        }
        let mut synth_days = 30u32;
        let mut synth_seed = 7u64;
        let had_days = r.num("synthetic_days", &mut synth_days)?;
        let had_seed = r.num("synthetic_seed", &mut synth_seed)?;
        if let TraceSource::Synthetic { days, seed } = &mut self.trace {
            if had_days {
                *days = synth_days;
            }
            if had_seed {
                *seed = synth_seed;
            }
        } else if had_days || had_seed {
            return Err(Error::config(
                "synthetic_days/synthetic_seed only apply when trace = synthetic",
            ));
        }
        r.num("trace_scale", &mut self.trace_scale)?;
        r.num("interval_seconds", &mut self.interval_seconds)?;

        r.num("sigma_coeff", &mut self.sigma_coeff)?;
        r.num("capacity_per_instance", &mut self.capacity_per_instance)?;
        r.num("base_latency", &mut self.base_latency)?;
        r.num("utilization_cap_for_latency", &mut self.utilization_cap_for_latency)?;
        r.num("packets_per_request", &mut self.packets_per_request)?;
        r.num("min_instances", &mut self.min_instances)?;
        r.num("max_instances", &mut self.max_instances)?;
        r.num("initial_instances", &mut self.initial_instances)?;
        r.num("steps_per_hour", &mut self.steps_per_hour)?;
        if let Some(v) = r.take("instance_type")? {
            self.instance_type = v;
        }
        r.num("hourly_price", &mut self.hourly_price)?;
        if let Some(v) = r.take("pricing_file")? {
            self.pricing_file = Some(PathBuf::from(v));
        }
        r.num("instance_ips", &mut self.fidelity.instance_ips)?;
        r.num("demand_min", &mut self.fidelity.demand_min)?;
        r.num("demand_max", &mut self.fidelity.demand_max)?;

        r.num("gamma", &mut self.gamma)?;
        r.num("batch_size", &mut self.batch_size)?;
        r.num("replay_capacity", &mut self.replay_capacity)?;
        r.num("warmup", &mut self.warmup)?;
        r.num("epsilon_start", &mut self.epsilon.start)?;
        r.num("epsilon_end", &mut self.epsilon.end)?;
        r.num("epsilon_anneal_epochs", &mut self.epsilon.anneal_epochs)?;
        r.num("target_copy_period", &mut self.target_copy_period)?;
        r.num("tau", &mut self.tau)?;
        r.num("learning_rate", &mut self.learning_rate)?;
        r.num("window", &mut self.window)?;
        r.num("conv_layers", &mut self.conv_layers)?;
        r.num("conv_filters", &mut self.conv_filters)?;
        r.num("kernel_width", &mut self.kernel_width)?;
        r.num("latency_scale", &mut self.normalizer.latency_scale)?;
        r.num("packets_scale", &mut self.normalizer.packets_scale)?;
        r.num("requests_scale", &mut self.normalizer.requests_scale)?;

        r.num("alpha", &mut self.alpha)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.init_weights.is_some() && self.agent.deep_kind().is_none() {
            return Err(Error::config(
                "init_weights is only valid for dqn/d3qn agents",
            ));
        }
        if !(self.trace_scale > 0.0) {
            return Err(Error::config("trace_scale must be > 0"));
        }
        self.env_config()?.validate()?;
        if self.agent.deep_kind().is_some() {
            self.agent_config(self.agent.deep_kind().unwrap())?.validate()?;
        }
        self.discretization.validate()?;
        Ok(())
    }

    /// Environment configuration (pricing resolved from the pricing file
    /// when one is set).
    pub fn env_config(&self) -> Result<EnvConfig> {
        let pricing = match &self.pricing_file {
            Some(path) => load_pricing(path, &self.instance_type)?,
            None => InstancePricing::new(self.instance_type.clone(), self.hourly_price)?,
        };
        Ok(EnvConfig {
            min_instances: self.min_instances,
            max_instances: self.max_instances,
            initial_instances: self.initial_instances,
            steps_per_hour: self.steps_per_hour,
            capacity_per_instance: self.capacity_per_instance,
            base_latency: self.base_latency,
            utilization_cap_for_latency: self.utilization_cap_for_latency,
            packets_per_request: self.packets_per_request,
            sigma_coeff: self.sigma_coeff,
            pricing,
            penalties: PenaltySchedule::default(),
            backend: self.backend,
            fidelity: self.fidelity.clone(),
        })
    }

    pub fn agent_config(&self, kind: DeepKind) -> Result<AgentConfig> {
        Ok(AgentConfig {
            gamma: self.gamma as f32,
            batch: self.batch_size,
            replay_capacity: self.replay_capacity,
            warmup: self.warmup,
            epsilon: self.epsilon,
            target_copy_period: self.target_copy_period,
            tau: self.tau as f32,
            learning_rate: self.learning_rate as f32,
            arch: ArchDescriptor {
                channels: 5,
                window: self.window,
                conv: vec![
                    ConvSpec {
                        filters: self.conv_filters,
                        width: self.kernel_width,
                    };
                    self.conv_layers
                ],
                head: kind.head(),
            },
            normalizer: self.normalizer,
        })
    }

    /// Loads, scales and (in quick mode) truncates the request schedule.
    pub fn load_schedule(&self) -> Result<TraceSchedule> {
        let schedule = match &self.trace {
            TraceSource::File(path) => trace::load_schedule(path, self.interval_seconds)?,
            TraceSource::Synthetic { days, seed } => {
                trace::synthetic_schedule(*days, self.interval_seconds, *seed)?
            }
        };
        let schedule = if self.trace_scale == 1.0 {
            schedule
        } else {
            schedule.scaled(self.trace_scale)?
        };
        Ok(if self.quick {
            let three_days = (3 * 86_400) / self.interval_seconds as usize;
            schedule.truncated(three_days)
        } else {
            schedule
        })
    }

    /// `<agent>_<backend>` directory label for this experiment.
    pub fn label(&self) -> String {
        format!("{}_{}", self.agent.label(), backend_label(self.backend))
    }
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let seeds: std::result::Result<Vec<u64>, _> =
        s.split(',').map(|p| p.trim().parse::<u64>()).collect();
    let seeds = seeds.map_err(|_| Error::config(format!("bad seed list '{s}'")))?;
    if seeds.is_empty() {
        return Err(Error::config("seed list must not be empty"));
    }
    Ok(seeds)
}

struct KeyReader {
    map: HashMap<String, (usize, String)>,
}

impl KeyReader {
    fn take(&mut self, key: &str) -> Result<Option<String>> {
        Ok(self.map.remove(key).map(|(_, v)| v))
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<bool> {
        if let Some((line, v)) = self.map.remove(key) {
            *slot = v.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad value '{v}' for {key}"),
            })?;
            return Ok(true);
        }
        Ok(false)
    }

    fn bool(&mut self, key: &str, slot: &mut bool) -> Result<bool> {
        if let Some((line, v)) = self.map.remove(key) {
            *slot = match v.as_str() {
                "true" | "on" | "1" => true,
                "false" | "off" | "0" => false,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("bad boolean '{v}' for {key}"),
                    })
                }
            };
            return Ok(true);
        }
        Ok(false)
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.map.into_iter().next() {
            return Err(Error::Parse {
                line,
                msg: format!("unknown config key '{key}'"),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_str_content(
            "# comment\n\
             agent = d3qn\n\
             env = fidelity\n\
             epochs = 7\n\
             seeds = 3, 4,5\n\
             trace = synthetic\n\
             synthetic_days = 2\n\
             learning_rate = 0.001  # trailing comment\n\
             episode_log = none\n",
        )
        .unwrap();
        assert_eq!(cfg.agent, AgentKind::D3qn);
        assert_eq!(cfg.backend, Backend::Fidelity);
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.seeds, vec![3, 4, 5]);
        assert_eq!(cfg.trace, TraceSource::Synthetic { days: 2, seed: 7 });
        assert!((cfg.learning_rate - 0.001).abs() < 1e-12);
        assert_eq!(cfg.episode_log, EpisodeLogMode::None);
        assert_eq!(cfg.label(), "d3qn_fidelity");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = ExperimentConfig::from_str_content("agent = dqn\nnot_a_key = 1\n");
        assert!(matches!(err, Err(Error::Parse { line: 2, .. })), "{err:?}");
    }

    #[test]
    fn bad_values_are_errors() {
        assert!(ExperimentConfig::from_str_content("epochs = zero\n").is_err());
        assert!(ExperimentConfig::from_str_content("agent = sarsa\n").is_err());
        assert!(ExperimentConfig::from_str_content("seeds = 1,x\n").is_err());
        assert!(ExperimentConfig::from_str_content("epochs = 0\n").is_err());
    }

    #[test]
    fn init_weights_require_deep_agent() {
        let err = ExperimentConfig::from_str_content("agent = threshold\ninit_weights = w.qnw\n");
        assert!(err.is_err());
        assert!(
            ExperimentConfig::from_str_content("agent = dqn\ninit_weights = w.qnw\n").is_ok()
        );
    }

    #[test]
    fn quick_mode_truncates_schedule() {
        let cfg = ExperimentConfig::from_str_content(
            "trace = synthetic\nsynthetic_days = 30\nquick = true\ntrace_scale = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.load_schedule().unwrap().len(), 864);
    }

    #[test]
    fn synthetic_keys_rejected_for_file_traces() {
        let err =
            ExperimentConfig::from_str_content("trace = bins.csv\nsynthetic_days = 3\n");
        assert!(err.is_err());
    }
}
