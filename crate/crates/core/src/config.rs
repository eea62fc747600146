//! Search configuration and its flat `key = value` text form.
//!
//! One pair per line, `#` starts a comment. `seed_genome` may repeat; every
//! other key keeps its last value, so appending overrides is enough to layer
//! command-line flags over a file.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{parse_genome, EncodingConfig};
use crate::evaluators::SurrogateParams;
use crate::operators::CrossoverScope;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExploitationSampler {
    #[default]
    Bn,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvaluatorSpec {
    Surrogate(SurrogateParams),
    External { command: String, timeout_secs: f64 },
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        EvaluatorSpec::Surrogate(SurrogateParams::default())
    }
}

impl EvaluatorSpec {
    pub fn timeout(&self) -> Option<Duration> {
        match self {
            EvaluatorSpec::External { timeout_secs, .. } => {
                Some(Duration::from_secs_f64(*timeout_secs))
            }
            EvaluatorSpec::Surrogate(_) => None,
        }
    }
}

/// Named ablation presets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    RandomSearch,
    NoCrossover,
    UniformExploitation,
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Ablation::None),
            "random-search" => Ok(Ablation::RandomSearch),
            "no-crossover" => Ok(Ablation::NoCrossover),
            "uniform-exploitation" => Ok(Ablation::UniformExploitation),
            _ => Err("expected none, random-search, no-crossover or uniform-exploitation".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub encoding: EncodingConfig,
    pub population_size: usize,
    pub exploration_generations: usize,
    pub exploitation_generations: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub crossover_scope: CrossoverScope,
    pub seed: u64,
    pub evaluator: EvaluatorSpec,
    /// Parallel evaluations per generation. Does not affect results.
    pub workers: usize,
    pub dedup_retry_limit: usize,
    /// Failed evaluations tolerated per generation before the run aborts.
    pub failure_budget: usize,
    pub survival_rate_switch_threshold: Option<f64>,
    pub seed_genomes: Vec<String>,
    pub disable_crossover: bool,
    pub exploitation_sampler: ExploitationSampler,
    pub random_search: bool,
    pub bn_alpha: f64,
    /// Fit the Bayesian network on the first k archive fronts only.
    pub bn_fronts: Option<usize>,
    pub exploitation_mutation: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            encoding: EncodingConfig::default(),
            population_size: 40,
            exploration_generations: 20,
            exploitation_generations: 10,
            crossover_probability: 0.9,
            mutation_probability: 0.02,
            crossover_scope: CrossoverScope::Genome,
            seed: 0,
            evaluator: EvaluatorSpec::default(),
            workers: 1,
            dedup_retry_limit: 10,
            failure_budget: 10,
            survival_rate_switch_threshold: None,
            seed_genomes: Vec::new(),
            disable_crossover: false,
            exploitation_sampler: ExploitationSampler::Bn,
            random_search: false,
            bn_alpha: 1.0,
            bn_fronts: None,
            exploitation_mutation: false,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "phases",
    "nodes",
    "resolution_schedule",
    "channel_width",
    "input_channels",
    "input_resolution",
    "population_size",
    "exploration_generations",
    "exploitation_generations",
    "crossover_probability",
    "mutation_probability",
    "crossover_scope",
    "seed",
    "evaluator",
    "external_cmd",
    "external_timeout_secs",
    "surrogate_e_min",
    "surrogate_e_max",
    "surrogate_beta",
    "surrogate_rho",
    "workers",
    "dedup_retry_limit",
    "failure_budget",
    "survival_rate_switch_threshold",
    "seed_genome",
    "disable_crossover",
    "exploitation_sampler",
    "random_search",
    "ablation",
    "bn_alpha",
    "bn_fronts",
    "exploitation_mutation",
];

/// Split config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        pairs.push((key.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: v.to_string(),
        reason: e.to_string(),
    })
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        value(key, v).map(Some)
    }
}

impl SearchConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_pairs(&parse_pairs(&text)?)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Apply pairs on top of the defaults; later pairs win.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut unknown: Vec<String> = pairs
            .iter()
            .map(|(k, _)| k.clone())
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .collect();
        unknown.dedup();
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }

        let mut cfg = SearchConfig::default();
        let mut schedule: Option<Vec<u64>> = None;
        let mut evaluator_kind = "surrogate".to_string();
        let mut external_cmd: Option<String> = None;
        let mut timeout_secs = 3600.0;
        let mut surrogate = SurrogateParams::default();
        let enc = &mut cfg.encoding;
        let (mut phases, mut nodes) = (enc.phases, enc.nodes);
        let (mut width, mut in_ch, mut in_res) =
            (enc.channel_width, enc.input_channels, enc.input_resolution);

        for (k, v) in pairs {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "phases" => phases = value(k, v)?,
                "nodes" => nodes = value(k, v)?,
                "resolution_schedule" => {
                    schedule = Some(
                        v.split(',')
                            .map(|s| value::<u64>(k, s.trim()))
                            .collect::<Result<_, _>>()?,
                    )
                }
                "channel_width" => width = value(k, v)?,
                "input_channels" => in_ch = value(k, v)?,
                "input_resolution" => in_res = value(k, v)?,
                "population_size" => cfg.population_size = value(k, v)?,
                "exploration_generations" => cfg.exploration_generations = value(k, v)?,
                "exploitation_generations" => cfg.exploitation_generations = value(k, v)?,
                "crossover_probability" => cfg.crossover_probability = value(k, v)?,
                "mutation_probability" => cfg.mutation_probability = value(k, v)?,
                "crossover_scope" => {
                    cfg.crossover_scope = match v {
                        "genome" => CrossoverScope::Genome,
                        "phase" => CrossoverScope::Phase,
                        _ => {
                            return Err(ConfigError::InvalidValue {
                                key: k.into(),
                                value: v.into(),
                                reason: "expected genome or phase".into(),
                            })
                        }
                    }
                }
                "seed" => cfg.seed = value(k, v)?,
                "evaluator" => evaluator_kind = v.to_string(),
                "external_cmd" => external_cmd = Some(v.to_string()),
                "external_timeout_secs" => timeout_secs = value(k, v)?,
                "surrogate_e_min" => surrogate.e_min = value(k, v)?,
                "surrogate_e_max" => surrogate.e_max = value(k, v)?,
                "surrogate_beta" => surrogate.beta = value(k, v)?,
                "surrogate_rho" => surrogate.rho = value(k, v)?,
                "workers" => cfg.workers = value(k, v)?,
                "dedup_retry_limit" => cfg.dedup_retry_limit = value(k, v)?,
                "failure_budget" => cfg.failure_budget = value(k, v)?,
                "survival_rate_switch_threshold" => {
                    cfg.survival_rate_switch_threshold = optional(k, v)?
                }
                "seed_genome" => cfg.seed_genomes.push(v.to_string()),
                "disable_crossover" => cfg.disable_crossover = value(k, v)?,
                "exploitation_sampler" => {
                    cfg.exploitation_sampler = match v {
                        "bn" => ExploitationSampler::Bn,
                        "uniform" => ExploitationSampler::Uniform,
                        _ => {
                            return Err(ConfigError::InvalidValue {
                                key: k.into(),
                                value: v.into(),
                                reason: "expected bn or uniform".into(),
                            })
                        }
                    }
                }
                "random_search" => cfg.random_search = value(k, v)?,
                "ablation" => cfg.apply_ablation(value(k, v)?),
                "bn_alpha" => cfg.bn_alpha = value(k, v)?,
                "bn_fronts" => cfg.bn_fronts = optional(k, v)?,
                "exploitation_mutation" => cfg.exploitation_mutation = value(k, v)?,
                _ => unreachable!("unknown keys rejected above"),
            }
        }

        cfg.encoding = EncodingConfig::halving(phases, nodes, in_res, in_ch, width);
        if let Some(s) = schedule {
            cfg.encoding.resolution_schedule = s;
        }
        cfg.evaluator = match evaluator_kind.as_str() {
            "surrogate" => EvaluatorSpec::Surrogate(surrogate),
            "external" => EvaluatorSpec::External {
                command: external_cmd.ok_or_else(|| {
                    ConfigError::Invalid("evaluator = external requires external_cmd".into())
                })?,
                timeout_secs,
            },
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "evaluator".into(),
                    value: other.into(),
                    reason: "expected surrogate or external".into(),
                })
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_ablation(&mut self, ablation: Ablation) {
        match ablation {
            Ablation::None => {}
            Ablation::RandomSearch => self.random_search = true,
            Ablation::NoCrossover => self.disable_crossover = true,
            Ablation::UniformExploitation => {
                self.exploitation_sampler = ExploitationSampler::Uniform
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.encoding
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(ConfigError::Invalid(
                "population_size must be even and at least 4".into(),
            ));
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if let Some(t) = self.survival_rate_switch_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::Invalid(
                    "survival_rate_switch_threshold must lie in [0, 1]".into(),
                ));
            }
        }
        if !self.bn_alpha.is_finite() || self.bn_alpha < 0.0 {
            return Err(ConfigError::Invalid("bn_alpha must be non-negative".into()));
        }
        if self.bn_fronts == Some(0) {
            return Err(ConfigError::Invalid("bn_fronts must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if let EvaluatorSpec::External { timeout_secs, .. } = &self.evaluator {
            if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                return Err(ConfigError::Invalid(
                    "external_timeout_secs must be positive".into(),
                ));
            }
        }
        for g in &self.seed_genomes {
            parse_genome(g, &self.encoding).map_err(|e| ConfigError::InvalidValue {
                key: "seed_genome".into(),
                value: g.clone(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Total genomes a default run creates: the initial population plus one batch per generation.
    pub fn evaluation_budget(&self) -> usize {
        self.population_size * (1 + self.exploration_generations + self.exploitation_generations)
    }

    /// Flat text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let e = &self.encoding;
        let sched: Vec<String> = e.resolution_schedule.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "phases = {}", e.phases);
        let _ = writeln!(out, "nodes = {}", e.nodes);
        let _ = writeln!(out, "input_resolution = {}", e.input_resolution);
        let _ = writeln!(out, "resolution_schedule = {}", sched.join(","));
        let _ = writeln!(out, "channel_width = {}", e.channel_width);
        let _ = writeln!(out, "input_channels = {}", e.input_channels);
        let _ = writeln!(out, "population_size = {}", self.population_size);
        let _ = writeln!(
            out,
            "exploration_generations = {}",
            self.exploration_generations
        );
        let _ = writeln!(
            out,
            "exploitation_generations = {}",
            self.exploitation_generations
        );
        let _ = writeln!(
            out,
            "crossover_probability = {}",
            self.crossover_probability
        );
        let _ = writeln!(out, "mutation_probability = {}", self.mutation_probability);
        let scope = match self.crossover_scope {
            CrossoverScope::Genome => "genome",
            CrossoverScope::Phase => "phase",
        };
        let _ = writeln!(out, "crossover_scope = {scope}");
        let _ = writeln!(out, "seed = {}", self.seed);
        match &self.evaluator {
            EvaluatorSpec::Surrogate(p) => {
                let _ = writeln!(out, "evaluator = surrogate");
                let _ = writeln!(out, "surrogate_e_min = {}", p.e_min);
                let _ = writeln!(out, "surrogate_e_max = {}", p.e_max);
                let _ = writeln!(out, "surrogate_beta = {}", p.beta);
                let _ = writeln!(out, "surrogate_rho = {}", p.rho);
            }
            EvaluatorSpec::External {
                command,
                timeout_secs,
            } => {
                let _ = writeln!(out, "evaluator = external");
                let _ = writeln!(out, "external_cmd = {command}");
                let _ = writeln!(out, "external_timeout_secs = {timeout_secs}");
            }
        }
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "dedup_retry_limit = {}", self.dedup_retry_limit);
        let _ = writeln!(out, "failure_budget = {}", self.failure_budget);
        let threshold = self
            .survival_rate_switch_threshold
            .map_or("none".to_string(), |t| t.to_string());
        let _ = writeln!(out, "survival_rate_switch_threshold = {threshold}");
        for g in &self.seed_genomes {
            let _ = writeln!(out, "seed_genome = {g}");
        }
        let _ = writeln!(out, "disable_crossover = {}", self.disable_crossover);
        let sampler = match self.exploitation_sampler {
            ExploitationSampler::Bn => "bn",
            ExploitationSampler::Uniform => "uniform",
        };
        let _ = writeln!(out, "exploitation_sampler = {sampler}");
        let _ = writeln!(out, "random_search = {}", self.random_search);
        let _ = writeln!(out, "bn_alpha = {}", self.bn_alpha);
        let fronts = self.bn_fronts.map_or("none".to_string(), |k| k.to_string());
        let _ = writeln!(out, "bn_fronts = {fronts}");
        let _ = writeln!(
            out,
            "exploitation_mutation = {}",
            self.exploitation_mutation
        );
        out
    }

    /// Whether a checkpoint written under `self` can be resumed under `other`.
    /// Worker count is a runtime knob and may differ.
    pub fn compatible_with(&self, other: &SearchConfig) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.workers = 1;
        b.workers = 1;
        a == b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_search_settings() {
        let c = SearchConfig::default();
        assert_eq!(c.population_size, 40);
        assert_eq!(c.exploration_generations, 20);
        assert_eq!(c.exploitation_generations, 10);
        assert_eq!(c.crossover_probability, 0.9);
        assert_eq!(c.mutation_probability, 0.02);
        assert_eq!(c.encoding.phases, 3);
        assert_eq!(c.encoding.nodes, 6);
        assert_eq!(c.encoding.resolution_schedule, vec![32, 16, 8]);
        assert_eq!(c.evaluation_budget(), 1240);
        c.validate().unwrap();
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "\
# small run
population_size = 8
exploration_generations = 3   # trailing comment
seed = 7
seed_genome = 1-01-001-0001-00001-1 0-00-000-0000-00000-1 1-11-111-1111-11111-0
survival_rate_switch_threshold = 0.1
ablation = no-crossover
";
        let c = SearchConfig::from_text(text).unwrap();
        assert_eq!(c.population_size, 8);
        assert_eq!(c.exploration_generations, 3);
        assert_eq!(c.seed, 7);
        assert_eq!(c.seed_genomes.len(), 1);
        assert!(c.disable_crossover);
        assert_eq!(c.survival_rate_switch_threshold, Some(0.1));
        assert_eq!(SearchConfig::from_text(&c.to_text()).unwrap(), c);
        let d = SearchConfig::default();
        assert_eq!(SearchConfig::from_text(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn later_pairs_override() {
        let c = SearchConfig::from_text("seed = 1\nseed = 9\n").unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn unknown_keys_listed_exhaustively() {
        let err = SearchConfig::from_text("popsize = 4\nseed = 1\ncolour = red\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKeys(vec!["popsize".into(), "colour".into()])
        );
        assert!(err.to_string().contains("popsize, colour"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(matches!(
            SearchConfig::from_text("population_size = many"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(SearchConfig::from_text("population_size = 5").is_err());
        assert!(SearchConfig::from_text("population_size = 2").is_err());
        assert!(SearchConfig::from_text("crossover_probability = 1.5").is_err());
        assert!(SearchConfig::from_text("evaluator = external").is_err());
        assert!(SearchConfig::from_text("seed_genome = 1-1").is_err());
        assert!(matches!(
            SearchConfig::from_text("just words"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            SearchConfig::from_file(Path::new("/nonexistent/default.cfg")),
            Err(ConfigError::Io { .. })
        ));
    }

    #[test]
    fn external_evaluator_settings() {
        let c = SearchConfig::from_text(
            "evaluator = external\nexternal_cmd = python3 train.py --fast\nexternal_timeout_secs = 5\n",
        )
        .unwrap();
        assert_eq!(
            c.evaluator,
            EvaluatorSpec::External {
                command: "python3 train.py --fast".into(),
                timeout_secs: 5.0
            }
        );
        assert_eq!(c.evaluator.timeout(), Some(Duration::from_secs(5)));
    }

    #[test]
    fn workers_do_not_affect_compatibility() {
        let a = SearchConfig::default();
        let mut b = a.clone();
        b.workers = 8;
        assert!(a.compatible_with(&b));
        b.population_size = 20;
        assert!(!a.compatible_with(&b));
    }
}
