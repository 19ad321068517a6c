//! Scenario documents: a domain plus planner configuration.
//!
//! ```json
//! {
//!   "name": "corridor",
//!   "domain": { "kind": "grid", "map": "S..#\n...T" },
//!   "config": { "w1": 10, "detector_kind": "heuristic_based", "epsilon": 2 }
//! }
//! ```
//!
//! Arm scenarios use `"kind": "arm"` with `link_lengths`, `joint_step_deg`,
//! `obstacles`, `start_joints` and either `goal_pose` or `goal_joints`.
//! Every configuration field is optional.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::DetectorKind;
use crate::domains::arm::ArmError;
use crate::domains::grid::{GridError, UTrapLayout};
use crate::domains::{ArmDomain, CircleObstacle, Domain, GridCell, GridMap, Problem};
use crate::search::{ConfigError, Planner, PlannerConfig, SearchError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapText {
    Text(String),
    Rows(Vec<String>),
}

impl MapText {
    pub fn text(&self) -> String {
        match self {
            Self::Text(t) => t.clone(),
            Self::Rows(rows) => rows.join("\n"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub map: MapText,
    /// Overrides the `S` cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[u32; 2]>,
    /// Overrides the `T` cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[u32; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub link_lengths: Vec<f64>,
    pub joint_step_deg: f64,
    #[serde(default)]
    pub obstacles: Vec<CircleObstacle>,
    #[serde(default)]
    pub base: [f64; 2],
    /// Radians.
    pub start_joints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_pose: Option<[f64; 2]>,
    /// Radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_joints: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Grid(GridSpec),
    Arm(ArmSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub config: PlannerConfig,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("map: {0}")]
    Grid(#[from] GridError),
    #[error("arm: {0}")]
    Arm(#[from] ArmError),
    #[error("arm scenario needs goal_pose or goal_joints")]
    MissingArmGoal,
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("planner: {0}")]
    Planner(#[from] SearchError),
    #[error("scenario must be a JSON object with an object-valued config")]
    NotAnObject,
}

/// Planner configuration fields by name, as in a scenario's `config`.
pub type ConfigOverrides = serde_json::Map<String, serde_json::Value>;

/// `base` with the fields named in `overrides` replaced.
pub fn override_config(base: &PlannerConfig, overrides: &ConfigOverrides) -> Result<PlannerConfig, ScenarioError> {
    if overrides.is_empty() {
        return Ok(base.clone());
    }
    let serde_json::Value::Object(mut merged) = serde_json::to_value(base)? else {
        unreachable!("config serializes to an object")
    };
    for (k, v) in overrides {
        let k = if k == "detector" { "detector_kind" } else { k.as_str() };
        merged.insert(k.to_string(), v.clone());
    }
    Ok(serde_json::from_value(serde_json::Value::Object(merged))?)
}

/// The concrete domain behind a built scenario.
#[derive(Clone, Debug)]
pub enum DomainView {
    Grid(Arc<GridMap>),
    Arm(Arc<ArmDomain>),
}

impl DomainView {
    pub fn domain(&self) -> Arc<dyn Domain> {
        match self {
            Self::Grid(g) => g.clone(),
            Self::Arm(a) => a.clone(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Like [`Scenario::from_json`], but fields missing from the document's
    /// `config` come from `defaults`.
    pub fn from_json_with_defaults(text: &str, defaults: &PlannerConfig) -> Result<Self, ScenarioError> {
        Self::from_value_with_defaults(serde_json::from_str(text)?, defaults)
    }

    pub fn from_value_with_defaults(mut doc: serde_json::Value, defaults: &PlannerConfig) -> Result<Self, ScenarioError> {
        let obj = doc.as_object_mut().ok_or(ScenarioError::NotAnObject)?;
        let own = match obj.remove("config") {
            None => ConfigOverrides::new(),
            Some(serde_json::Value::Object(m)) => m,
            Some(_) => return Err(ScenarioError::NotAnObject),
        };
        let config = override_config(defaults, &own)?;
        let mut scenario: Self = serde_json::from_value(doc)?;
        scenario.config = config;
        Ok(scenario)
    }

    /// A grid scenario from bare map text with default configuration.
    pub fn from_map_text(text: &str) -> Self {
        Self {
            name: None,
            domain: DomainSpec::Grid(GridSpec {
                map: MapText::Text(text.to_string()),
                start: None,
                goal: None,
            }),
            config: PlannerConfig::default(),
        }
    }

    pub fn build_domain(&self) -> Result<DomainView, ScenarioError> {
        match &self.domain {
            DomainSpec::Grid(spec) => {
                let mut map = GridMap::parse(&spec.map.text())?;
                if spec.start.is_some() || spec.goal.is_some() {
                    let start = spec.start.map_or(map.start(), |[x, y]| GridCell::new(x, y));
                    let goal = spec.goal.map_or(map.goal(), |[x, y]| GridCell::new(x, y));
                    map = map.with_endpoints(start, goal)?;
                }
                Ok(DomainView::Grid(Arc::new(map)))
            }
            DomainSpec::Arm(spec) => {
                let goal_pose = match (&spec.goal_pose, &spec.goal_joints) {
                    (Some(p), _) => *p,
                    (None, Some(_)) => [0.0, 0.0],
                    (None, None) => return Err(ScenarioError::MissingArmGoal),
                };
                let arm = ArmDomain::new(
                    spec.link_lengths.clone(),
                    spec.joint_step_deg.to_radians(),
                    spec.obstacles.clone(),
                    spec.base,
                    &spec.start_joints,
                    goal_pose,
                    spec.goal_joints.as_deref(),
                )?;
                Ok(DomainView::Arm(Arc::new(arm)))
            }
        }
    }

    pub fn problem(&self) -> Result<(DomainView, Problem), ScenarioError> {
        let view = self.build_domain()?;
        let problem = match &view {
            DomainView::Grid(g) => g.problem(),
            DomainView::Arm(a) => a.problem(),
        };
        Ok((view, problem))
    }

    pub fn planner(&self) -> Result<Planner, ScenarioError> {
        self.config.validate()?;
        let (_, problem) = self.problem()?;
        Ok(Planner::new(problem, self.config.clone())?)
    }

    /// Names accepted by [`Scenario::builtin`].
    pub const BUILTIN: &'static [&'static str] = &["empty", "u_trap", "u_trap_vacillation", "two_cups", "arm_reach"];

    /// Built-in scenarios.
    pub fn builtin(name: &str) -> Option<Self> {
        let scenario = match name {
            "empty" => Self {
                name: Some("empty".into()),
                domain: grid_domain(&GridMap::empty(20, 20, GridCell::new(0, 0), GridCell::new(19, 19)).unwrap()),
                config: PlannerConfig::default(),
            },
            "u_trap" => Self {
                name: Some("u_trap".into()),
                domain: grid_domain(&GridMap::u_trap()),
                config: u_trap_config(DetectorKind::HeuristicBased),
            },
            "u_trap_vacillation" => Self {
                name: Some("u_trap_vacillation".into()),
                domain: grid_domain(&GridMap::u_trap()),
                config: u_trap_config(DetectorKind::Vacillation),
            },
            "two_cups" => Self {
                name: Some("two_cups".into()),
                domain: grid_domain(&GridMap::two_cups()),
                config: u_trap_config(DetectorKind::HeuristicBased),
            },
            "arm_reach" => Self {
                name: Some("arm_reach".into()),
                domain: DomainSpec::Arm(ArmSpec {
                    link_lengths: vec![1.0, 0.8, 0.6],
                    joint_step_deg: 5.0,
                    obstacles: vec![
                        CircleObstacle {
                            center: [0.4, 1.3],
                            radius: 0.25,
                        },
                        CircleObstacle {
                            center: [-1.2, 0.9],
                            radius: 0.3,
                        },
                    ],
                    base: [0.0, 0.0],
                    start_joints: vec![0.0, 0.0, 0.0],
                    goal_pose: Some([-2.2, 0.3]),
                    goal_joints: None,
                }),
                config: PlannerConfig {
                    w1: 5.0,
                    snap_tolerance: 0.2,
                    detector_kind: DetectorKind::HeuristicBased,
                    ..PlannerConfig::default()
                },
            },
            _ => return None,
        };
        Some(scenario)
    }

    /// Scripted guidance that accompanies a built-in scenario.
    pub fn builtin_guidance(name: &str) -> Option<Vec<Vec<f64>>> {
        match name {
            "empty" => Some(vec![]),
            "arm_reach" => Some(vec![arm_reach_guidance()]),
            "u_trap" | "u_trap_vacillation" => Some(vec![u_trap_guidance()]),
            "two_cups" => Some(vec![two_cups_guidance()]),
            _ => None,
        }
    }
}

/// Arm swung clockwise to point straight down, clear of both obstacles.
pub fn arm_reach_guidance() -> Vec<f64> {
    vec![3.0 * std::f64::consts::FRAC_PI_2, 0.0, 0.0]
}

fn grid_domain(map: &GridMap) -> DomainSpec {
    DomainSpec::Grid(GridSpec {
        map: MapText::Text(map.to_text()),
        start: None,
        goal: None,
    })
}

/// Greedy weighting, an anchor factor loose enough to let a dynamic queue
/// lead, and detector parameters scaled to grid units.
pub fn u_trap_config(kind: DetectorKind) -> PlannerConfig {
    PlannerConfig {
        w1: 10.0,
        w2: 5.0,
        detector_kind: kind,
        omega: 10,
        tau: 30.0,
        omega1: 40,
        omega2: 10,
        epsilon: 2.0,
        expansion_budget: 200_000,
        snap_tolerance: 1.0,
    }
}

/// Beside the cavity opening, just outside the upper arm's tip.
pub fn u_trap_guidance() -> Vec<f64> {
    let l = UTrapLayout::default();
    let x = l.margin as f64 - 3.0;
    let y = l.margin as f64 - 3.0;
    vec![x, y]
}

/// Above the deep cup's upper arm, short of its far end.
pub fn two_cups_guidance() -> Vec<f64> {
    vec![86.0, 12.0]
}
