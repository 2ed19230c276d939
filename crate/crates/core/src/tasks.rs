//! Prompt / target text pairs for each driving task.
//!
//! Prompt wording is fixed here and documented in `docs/prompts.md`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{
    decode_boxes, decode_roadgraph, decode_trajectory, encode_boxes, encode_roadgraph, encode_trajectory, Box3D,
    IntentCommand, RoadGraph, RoadgraphCodecConfig,
};
use crate::error::{Error, Result};
use crate::geometry::Trajectory;
use crate::rationale::{label_scenario, parse_rationale, CriticalConfig, DecisionThresholds, RationaleSections};
use crate::synth::{blockage_label, BlockageConfig, ScenarioLog};

pub const DETECTION_PROMPT: &str = "detect every object in 3D";
pub const BLOCKAGE_QUESTION: &str = "is the road ahead temporarily blocked?";
pub const ROADGRAPH_PROMPT: &str = "Describe the lanes around the ego vehicle as polylines in the ego frame.";
pub const PLANNING_PROMPT: &str = "Plan the future trajectory of the ego vehicle.";
pub const PLANNING_COT_PROMPT: &str =
    "Describe the scene, the critical objects, their behavior, and your decision, then plan the future trajectory of the ego vehicle.";

const INTENT_KEY: &str = "Intent: ";
const HISTORY_KEY: &str = "Ego history: ";
const DT_KEY: &str = "Time step: ";
const STEPS_KEY: &str = "Future steps: ";
const ROAD_USERS_KEY: &str = "Road users ahead: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    Planning,
    PlanningCot,
    #[serde(rename = "DETECTION_3D")]
    Detection3d,
    Roadgraph,
    Blockage,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Planning,
        TaskKind::PlanningCot,
        TaskKind::Detection3d,
        TaskKind::Roadgraph,
        TaskKind::Blockage,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Planning => "PLANNING",
            TaskKind::PlanningCot => "PLANNING_COT",
            TaskKind::Detection3d => "DETECTION_3D",
            TaskKind::Roadgraph => "ROADGRAPH",
            TaskKind::Blockage => "BLOCKAGE",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    /// Accepts the serialized names and their lowercase, dashed forms.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub kind: TaskKind,
    pub prompt: String,
    pub target: String,
    pub scenario_id: String,
}

/// Where the rationale goes relative to the waypoints in PLANNING_COT targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CotOrder {
    #[default]
    RationaleFirst,
    WaypointsFirst,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub roadgraph: RoadgraphCodecConfig,
    pub blockage: BlockageConfig,
    pub thresholds: DecisionThresholds,
    pub critical: CriticalConfig,
    pub cot_order: CotOrder,
}

fn planning_prompt(s: &ScenarioLog, header: &str) -> Result<String> {
    Ok(format!(
        "{header}\n{INTENT_KEY}{}\n{HISTORY_KEY}{}\n{DT_KEY}{}\n{STEPS_KEY}{}",
        s.intent.as_text(),
        encode_trajectory(&s.ego_history)?,
        s.ego_future.dt(),
        s.ego_future.len()
    ))
}

pub fn build_planning_sample(s: &ScenarioLog, with_rationale: bool) -> Result<TaskSample> {
    build_planning_sample_with(s, with_rationale, &SampleConfig::default())
}

pub fn build_planning_sample_with(s: &ScenarioLog, with_rationale: bool, cfg: &SampleConfig) -> Result<TaskSample> {
    if s.ego_history.is_empty() || s.ego_future.is_empty() {
        return Err(Error::InvalidScenario(format!("{}: empty history or future", s.id)));
    }
    let waypoints = encode_trajectory(&s.ego_future)?;
    let (kind, prompt, target) = if with_rationale {
        let rationale = label_scenario(s, &cfg.thresholds, &cfg.critical)?.to_text()?;
        let target = match cfg.cot_order {
            CotOrder::RationaleFirst => format!("{rationale}\n{waypoints}"),
            CotOrder::WaypointsFirst => format!("{waypoints}\n{rationale}"),
        };
        (TaskKind::PlanningCot, planning_prompt(s, PLANNING_COT_PROMPT)?, target)
    } else {
        (TaskKind::Planning, planning_prompt(s, PLANNING_PROMPT)?, waypoints)
    };
    Ok(TaskSample {
        kind,
        prompt,
        target,
        scenario_id: s.id.clone(),
    })
}

pub fn build_detection_sample(s: &ScenarioLog) -> Result<TaskSample> {
    Ok(TaskSample {
        kind: TaskKind::Detection3d,
        prompt: DETECTION_PROMPT.to_string(),
        target: encode_boxes(&s.plain_boxes())?,
        scenario_id: s.id.clone(),
    })
}

pub fn build_roadgraph_sample(
    s: &ScenarioLog,
    cfg: &RoadgraphCodecConfig,
    seed: u64,
    training_mode: bool,
) -> Result<TaskSample> {
    Ok(TaskSample {
        kind: TaskKind::Roadgraph,
        prompt: ROADGRAPH_PROMPT.to_string(),
        target: encode_roadgraph(&s.roadgraph, &s.ego_pose, cfg, seed, training_mode)?,
        scenario_id: s.id.clone(),
    })
}

/// Road users in front of the ego, used as blockage context.
pub fn road_users_ahead(s: &ScenarioLog, cfg: &BlockageConfig) -> Vec<Box3D> {
    s.plain_boxes()
        .into_iter()
        .filter(|b| b.x > 0.0 && b.x <= cfg.lookahead + 10.0)
        .collect()
}

pub fn build_blockage_sample(s: &ScenarioLog, cfg: &BlockageConfig) -> Result<TaskSample> {
    let ahead = road_users_ahead(s, cfg);
    let users = if ahead.is_empty() {
        "none".to_string()
    } else {
        encode_boxes(&ahead)?
    };
    Ok(TaskSample {
        kind: TaskKind::Blockage,
        prompt: format!("{BLOCKAGE_QUESTION}\n{ROAD_USERS_KEY}{users}"),
        target: if blockage_label(s, cfg) { "yes" } else { "no" }.to_string(),
        scenario_id: s.id.clone(),
    })
}

pub fn build_sample(
    s: &ScenarioLog,
    kind: TaskKind,
    cfg: &SampleConfig,
    seed: u64,
    training_mode: bool,
) -> Result<TaskSample> {
    match kind {
        TaskKind::Planning => build_planning_sample_with(s, false, cfg),
        TaskKind::PlanningCot => build_planning_sample_with(s, true, cfg),
        TaskKind::Detection3d => build_detection_sample(s),
        TaskKind::Roadgraph => build_roadgraph_sample(s, &cfg.roadgraph, seed, training_mode),
        TaskKind::Blockage => build_blockage_sample(s, &cfg.blockage),
    }
}

/// What a planning prompt carries.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningPrompt {
    pub intent: IntentCommand,
    pub history: Trajectory,
    pub future_steps: usize,
}

fn field<'a>(prompt: &'a str, key: &str) -> Result<(usize, &'a str)> {
    prompt
        .lines()
        .enumerate()
        .find_map(|(i, l)| l.strip_prefix(key).map(|v| (i, v)))
        .ok_or_else(|| Error::parse(0, format!("prompt has no `{}` line", key.trim_end())))
}

pub fn parse_planning_prompt(prompt: &str) -> Result<PlanningPrompt> {
    let (_, intent) = field(prompt, INTENT_KEY)?;
    let (line, dt) = field(prompt, DT_KEY)?;
    let dt: f64 = dt
        .trim()
        .parse()
        .map_err(|_| Error::parse_item(line, format!("bad time step `{dt}`")))?;
    let (line, steps) = field(prompt, STEPS_KEY)?;
    let future_steps = steps
        .trim()
        .parse()
        .map_err(|_| Error::parse_item(line, format!("bad step count `{steps}`")))?;
    let (_, history) = field(prompt, HISTORY_KEY)?;
    Ok(PlanningPrompt {
        intent: intent.parse()?,
        history: decode_trajectory(history, dt)?,
        future_steps,
    })
}

/// Splits a PLANNING_COT target into rationale sections and waypoints.
pub fn parse_cot_target(target: &str, dt: f64, order: CotOrder) -> Result<(RationaleSections, Trajectory)> {
    let (rationale, waypoints) = match order {
        CotOrder::RationaleFirst => target.rsplit_once('\n'),
        CotOrder::WaypointsFirst => target.split_once('\n').map(|(w, r)| (r, w)),
    }
    .ok_or_else(|| Error::parse(0, "chain-of-thought target has no line break"))?;
    Ok((parse_rationale(rationale)?, decode_trajectory(waypoints, dt)?))
}

/// Decoded form of a target, by task.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DecodedTarget {
    Trajectory { trajectory: Trajectory },
    Cot { rationale: Vec<String>, trajectory: Trajectory },
    Boxes { boxes: Vec<Box3D> },
    Roadgraph { roadgraph: RoadGraph },
    Answer { blocked: bool },
}

pub fn decode_target(kind: TaskKind, target: &str, dt: f64, order: CotOrder) -> Result<DecodedTarget> {
    Ok(match kind {
        TaskKind::Planning => DecodedTarget::Trajectory {
            trajectory: decode_trajectory(target, dt)?,
        },
        TaskKind::PlanningCot => {
            let (_, trajectory) = parse_cot_target(target, dt, order)?;
            let rationale_text = match order {
                CotOrder::RationaleFirst => target.rsplit_once('\n').map(|p| p.0),
                CotOrder::WaypointsFirst => target.split_once('\n').map(|p| p.1),
            }
            .unwrap_or_default();
            DecodedTarget::Cot {
                rationale: rationale_text.lines().map(str::to_string).collect(),
                trajectory,
            }
        }
        TaskKind::Detection3d => DecodedTarget::Boxes {
            boxes: decode_boxes(target)?,
        },
        TaskKind::Roadgraph => DecodedTarget::Roadgraph {
            roadgraph: decode_roadgraph(target)?,
        },
        TaskKind::Blockage => match target.trim() {
            "yes" => DecodedTarget::Answer { blocked: true },
            "no" => DecodedTarget::Answer { blocked: false },
            other => return Err(Error::parse(0, format!("expected `yes` or `no`, got `{other}`"))),
        },
    })
}
