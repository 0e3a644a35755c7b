//! Experiment configs: TOML (or JSON, by extension) with every section
//! checked against the catalog and the run invariants before any work.

use std::fmt;
use std::path::{Path, PathBuf};

use pure_core::environments::{lookup, EnvCatalogEntry};
use pure_core::pure::{check_variant, RunConfig, UpdateRule, Variant};
use pure_core::{compute_radii, MeasurementMode, SamplerSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub variant: Variant,
    pub env: EnvSection,
    pub run: RunSection,
    pub seeds: SeedSpec,
    /// Output root; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Measurement budget `N`.
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c_scale")]
    pub c_scale: f64,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerSpec,
    /// Defaults to the variant's own rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_rule: Option<UpdateRule>,
    #[serde(default = "default_planning_rollouts")]
    pub planning_rollouts: usize,
    #[serde(default)]
    pub noiseless_reward: bool,
    /// Overrides the environment's measurement mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_mode: Option<MeasurementMode>,
    /// Seed of the true-value estimates shared by all seeds.
    #[serde(default)]
    pub oracle_seed: u64,
}

fn default_delta() -> f64 {
    0.1
}

fn default_c_scale() -> f64 {
    1.0
}

fn default_sampler() -> SamplerSpec {
    SamplerSpec::UniformSingle
}

fn default_planning_rollouts() -> usize {
    pure_core::planner::PLANNING_ROLLOUTS
}

/// Either `base` + `count` (seeds `base + i`) or an explicit `list`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(default)]
    pub base: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<u64>>,
}

impl SeedSpec {
    pub fn expand(&self) -> Result<Vec<u64>, String> {
        match (&self.count, &self.list) {
            (Some(_), Some(_)) => Err("give either seeds.count or seeds.list, not both".into()),
            (None, None) => Err("seeds needs count or list".into()),
            (Some(0), None) => Err("seeds.count must be at least 1".into()),
            (Some(k), None) => Ok((0..*k as u64).map(|i| self.base + i).collect()),
            (None, Some(l)) if l.is_empty() => Err("seeds.list is empty".into()),
            (None, Some(l)) => Ok(l.clone()),
        }
    }
}

/// Config problem, anchored to a line of the source file when one can be
/// identified.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A config that passed every check, with its source text.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
    pub entry: EnvCatalogEntry,
    pub seeds: Vec<u64>,
    /// Run config for the first seed; the others differ only in `seed`.
    pub template: RunConfig,
}

impl Prepared {
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            ..self.template.clone()
        }
    }
}

/// Line (1-based) of the first `key = ...` or `"key": ...` in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        let bytes = line.as_bytes();
        let mut start = 0;
        while let Some(off) = line[start..].find(key) {
            let i = start + off;
            let j = i + key.len();
            let before_ok = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
            let rest = line[j..].trim_start_matches('"').trim_start();
            if before_ok && (rest.starts_with('=') || rest.starts_with(':')) {
                return true;
            }
            start = j;
        }
        false
    })
    .map(|i| i + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_str(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(text).map_err(|e| ConfigError {
            path: path.into(),
            line: Some(e.line()),
            message: e.to_string(),
        })
    } else {
        toml::from_str(text).map_err(|e| ConfigError {
            path: path.into(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })
    }
}

pub fn load(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.into(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;
    let cfg = parse_str(&text, path)?;
    Ok((cfg, text))
}

/// Parses and validates `path`; nothing is simulated except building the
/// environment.
pub fn prepare(path: &Path) -> Result<Prepared, ConfigError> {
    let (config, text) = load(path)?;
    validate(path, text, config)
}

pub fn validate(path: &Path, text: String, config: ExperimentConfig) -> Result<Prepared, ConfigError> {
    let fail = |keys: &[&str], message: String| ConfigError {
        path: path.into(),
        line: keys.iter().find_map(|k| key_line(&text, k)),
        message,
    };
    if config.name.is_empty() || config.name.contains(['/', '\\']) || config.name.starts_with('.') {
        return Err(fail(&["name"], format!("invalid experiment name {:?}", config.name)));
    }
    let seeds = config.seeds.expand().map_err(|m| fail(&["count", "list", "seeds"], m))?;
    let mut entry = lookup(&config.env.name, serde_json::Value::Object(config.env.params.clone())).map_err(|e| {
        let msg = e.to_string();
        // serde names the offending field in backticks.
        let field = msg.split('`').nth(1).map(str::to_owned);
        let mut keys: Vec<&str> = field.as_deref().into_iter().collect();
        keys.extend(["params", "env"]);
        fail(&keys, msg)
    })?;
    if let Some(mode) = config.run.measurement_mode {
        entry.measurement.mode = mode;
    }
    let update_rule = match (&config.run.update_rule, config.variant.default_rule()) {
        (Some(r), _) => r.clone(),
        (None, Some(r)) => r,
        (None, None) => {
            return Err(fail(
                &["variant"],
                format!("variant {} needs run.update_rule", config.variant.name()),
            ))
        }
    };
    let template = RunConfig {
        n: config.run.n,
        sampler: config.run.sampler,
        update_rule,
        seed: seeds[0],
        planning_rollouts: config.run.planning_rollouts,
        noiseless_reward: config.run.noiseless_reward,
    };
    check_variant(config.variant, &template).map_err(|e| {
        let msg = e.to_string().trim_start_matches("invalid configuration: ").to_string();
        let keys: &[&str] = if msg.contains("m must divide N") || msg.contains("m = 1") || msg.contains("m >= 1") {
            &["m", "sampler", "n"]
        } else if msg.contains("planning_rollouts") {
            &["planning_rollouts"]
        } else if msg.contains("N must") {
            &["n"]
        } else {
            &["update_rule", "variant"]
        };
        fail(keys, msg)
    })?;
    if let UpdateRule::Schedule { schedule } = &template.update_rule {
        schedule
            .boundaries(template.n / template.m())
            .map_err(|e| fail(&["schedule", "update_rule"], e.to_string()))?;
    }
    compute_radii(
        config.run.n,
        config.run.delta,
        entry.measurement.g_bound,
        &entry.drift_class,
        &entry.reward_class,
        config.run.c_scale,
    )
    .map_err(|e| fail(&["delta", "c_scale"], e.to_string()))?;
    Ok(Prepared {
        path: path.into(),
        text,
        config,
        entry,
        seeds,
        template,
    })
}
