//! Config file, planner flags and scenario loading.
//!
//! Planner settings are layered: a built-in scenario's own configuration, or
//! for documents and bare maps the `[planner]` table of the config file
//! under whatever the document sets itself; command-line flags go on top of
//! either.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gmha_service::ServiceConfig;
use guided_mha::scenario::{override_config, ConfigOverrides};
use guided_mha::{PlannerConfig, Scenario};
use serde::Deserialize;
use serde_json::Value;

use crate::script::{self, ScriptEntry};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub planner: ConfigOverrides,
    pub service: ServiceSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: Option<String>,
    pub log_dir: Option<PathBuf>,
    pub stream_batch: Option<usize>,
    pub default_advance: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        file.planner_defaults()?;
        Ok(file)
    }

    pub fn planner_defaults(&self) -> Result<PlannerConfig> {
        let config = override_config(&PlannerConfig::default(), &self.planner).context("config file [planner]")?;
        config.validate().context("config file [planner]")?;
        Ok(config)
    }

    pub fn service(&self, log_dir: Option<PathBuf>) -> Result<ServiceConfig> {
        let defaults = ServiceConfig::default();
        let s = &self.service;
        Ok(ServiceConfig {
            log_dir: log_dir.or_else(|| s.log_dir.clone()),
            stream_batch: s.stream_batch.unwrap_or(defaults.stream_batch),
            default_advance: s.default_advance.unwrap_or(defaults.default_advance),
            planner: self.planner_defaults()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Vacillation,
    Heuristic,
}

impl DetectorArg {
    pub fn name(self) -> &'static str {
        match self {
            Self::Vacillation => "vacillation",
            Self::Heuristic => "heuristic_based",
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct PlannerFlags {
    /// Stagnation detector.
    #[arg(long, value_enum)]
    pub detector: Option<DetectorArg>,
    /// Heuristic inflation.
    #[arg(long)]
    pub w1: Option<f64>,
    /// Anchor-priority factor.
    #[arg(long)]
    pub w2: Option<f64>,
    /// Vacillation window.
    #[arg(long)]
    pub omega: Option<usize>,
    /// Vacillation threshold on the mean expansion delay.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Heuristic-detector long window.
    #[arg(long)]
    pub omega1: Option<usize>,
    /// Heuristic-detector lag.
    #[arg(long)]
    pub omega2: Option<usize>,
    /// Heuristic-detector progress margin.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Expansion budget.
    #[arg(long)]
    pub budget: Option<u64>,
}

impl PlannerFlags {
    pub fn overrides(&self) -> ConfigOverrides {
        let mut o = ConfigOverrides::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                o.insert(k.to_string(), v);
            }
        };
        put("detector_kind", self.detector.map(|d| d.name().into()));
        put("w1", self.w1.map(Into::into));
        put("w2", self.w2.map(Into::into));
        put("omega", self.omega.map(Into::into));
        put("tau", self.tau.map(Into::into));
        put("omega1", self.omega1.map(Into::into));
        put("omega2", self.omega2.map(Into::into));
        put("epsilon", self.epsilon.map(Into::into));
        put("expansion_budget", self.budget.map(Into::into));
        o
    }
}

/// A scenario together with the guidance script that accompanies it, if any.
pub struct Loaded {
    pub scenario: Scenario,
    pub script: Option<Vec<ScriptEntry>>,
}

/// `builtin:NAME`, a JSON scenario document, or a bare map text file. A
/// document `x.json` picks up `x.guidance.json` beside it as its script.
pub fn load_scenario(spec: &str, file: &ConfigFile, flags: &ConfigOverrides) -> Result<Loaded> {
    let (mut scenario, script) = if let Some(name) = spec.strip_prefix("builtin:") {
        let Some(s) = Scenario::builtin(name) else {
            bail!("unknown builtin {name:?}, expected one of {}", Scenario::BUILTIN.join(", "));
        };
        let script = Scenario::builtin_guidance(name).map(|s| s.into_iter().map(ScriptEntry::Configuration).collect());
        (s, script)
    } else {
        let path = Path::new(spec);
        let text = fs::read_to_string(path).with_context(|| format!("reading scenario {spec}"))?;
        let defaults = file.planner_defaults()?;
        if path.extension().is_some_and(|e| e == "json") {
            let s = Scenario::from_json_with_defaults(&text, &defaults).with_context(|| format!("scenario {spec}"))?;
            let sibling = path.with_extension("guidance.json");
            let script = if sibling.exists() {
                Some(script::load(&sibling)?)
            } else {
                None
            };
            (s, script)
        } else {
            let mut s = Scenario::from_map_text(&text);
            s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned());
            s.config = defaults;
            (s, None)
        }
    };
    scenario.config = override_config(&scenario.config, flags)?;
    scenario.config.validate()?;
    Ok(Loaded { scenario, script })
}
