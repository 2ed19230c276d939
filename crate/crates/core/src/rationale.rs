//! Heuristic chain-of-thought labels.
//!
//! A rationale has four one-line sections, always in this order:
//! scene description, critical objects (`<cls> at [X.XX,Y.YY]` items),
//! their behavior, and the meta driving decision.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{encode_waypoint, parse_waypoint, Box3D, BoxClass};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, point_chain_distance, Trajectory, Waypoint};
use crate::synth::ScenarioLog;

pub const CRITICAL_PREFIX: &str = "Critical objects: ";
pub const BEHAVIOR_PREFIX: &str = "Behavior: ";
pub const DECISION_PREFIX: &str = "Decision: ";
pub const NONE_TEXT: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpeedAction {
    KeepSpeed,
    Accelerate,
    Decelerate,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LateralAction {
    Straight,
    Left,
    Right,
}

/// One of the 4 x 3 high-level driving decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetaDecision {
    pub speed_action: SpeedAction,
    pub lateral_action: LateralAction,
}

impl MetaDecision {
    pub const SPEED_ACTIONS: [SpeedAction; 4] = [
        SpeedAction::KeepSpeed,
        SpeedAction::Accelerate,
        SpeedAction::Decelerate,
        SpeedAction::Stop,
    ];
    pub const LATERAL_ACTIONS: [LateralAction; 3] =
        [LateralAction::Straight, LateralAction::Left, LateralAction::Right];

    pub fn all() -> Vec<MetaDecision> {
        Self::SPEED_ACTIONS
            .iter()
            .flat_map(|&speed_action| {
                Self::LATERAL_ACTIONS.iter().map(move |&lateral_action| MetaDecision {
                    speed_action,
                    lateral_action,
                })
            })
            .collect()
    }

    /// Position in [`MetaDecision::all`], 0..12.
    pub fn category(&self) -> usize {
        self.speed_action as usize * 3 + self.lateral_action as usize
    }

    pub fn sentence(&self) -> String {
        let speed = match self.speed_action {
            SpeedAction::KeepSpeed => "keep my current speed",
            SpeedAction::Accelerate => "accelerate",
            SpeedAction::Decelerate => "decelerate",
            SpeedAction::Stop => "come to a stop",
        };
        let lateral = match self.lateral_action {
            LateralAction::Straight => "go straight",
            LateralAction::Left => "turn left",
            LateralAction::Right => "turn right",
        };
        format!("I should {speed} and {lateral}.")
    }
}

impl fmt::Display for MetaDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.speed_action, self.lateral_action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionThresholds {
    /// m/s
    pub speed_delta: f64,
    /// m/s
    pub stop_speed: f64,
    /// radians
    pub heading_delta: f64,
}

impl Default for DecisionThresholds {
    fn default() -> Self {
        Self {
            speed_delta: 1.0,
            stop_speed: 0.5,
            heading_delta: 15f64.to_radians(),
        }
    }
}

/// Segments shorter than this carry no usable heading.
const MIN_HEADING_STEP: f64 = 1e-6;

/// Meta decision from the ground-truth future.
///
/// Speeds are averaged over the first and last thirds of the segments;
/// the heading change is measured between the first and the last segment
/// that actually moves.
pub fn meta_decision(gt: &Trajectory, cfg: &DecisionThresholds) -> Result<MetaDecision> {
    if gt.len() < 3 {
        return Err(Error::InvalidScenario(format!(
            "meta decision needs >= 3 points, got {}",
            gt.len()
        )));
    }
    let segs: Vec<Waypoint> = gt.points().windows(2).map(|w| w[1].sub(&w[0])).collect();
    let speeds: Vec<f64> = segs.iter().map(|s| s.norm() / gt.dt()).collect();
    let third = (segs.len() / 3).max(1);
    let v0 = speeds[..third].iter().sum::<f64>() / third as f64;
    let v1 = speeds[speeds.len() - third..].iter().sum::<f64>() / third as f64;
    let speed_action = if v1 < cfg.stop_speed {
        SpeedAction::Stop
    } else if v1 - v0 > cfg.speed_delta {
        SpeedAction::Accelerate
    } else if v0 - v1 > cfg.speed_delta {
        SpeedAction::Decelerate
    } else {
        SpeedAction::KeepSpeed
    };

    let moving = |s: &&Waypoint| s.norm() > MIN_HEADING_STEP;
    let turn = match (segs.iter().find(moving), segs.iter().rev().find(moving)) {
        (Some(a), Some(b)) => normalize_angle(b.y.atan2(b.x) - a.y.atan2(a.x)),
        _ => 0.0,
    };
    let lateral_action = if turn > cfg.heading_delta {
        LateralAction::Left
    } else if turn < -cfg.heading_delta {
        LateralAction::Right
    } else {
        LateralAction::Straight
    };
    Ok(MetaDecision {
        speed_action,
        lateral_action,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    pub corridor_halfwidth: f64,
    pub max_count: usize,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            corridor_halfwidth: 2.5,
            max_count: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalObject {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    /// 1-based.
    pub rank: usize,
    /// Closest approach of the box center to the ego path, meters.
    pub min_gap: f64,
    /// Position of the box in the input list.
    pub source_index: usize,
}

/// Objects whose center lies within the corridor around the ego path
/// (current position followed by the future waypoints), nearest first.
pub fn critical_objects(
    ego_future: &Trajectory,
    boxes: &[Box3D],
    cfg: &CriticalConfig,
) -> Vec<CriticalObject> {
    let mut path = Vec::with_capacity(ego_future.len() + 1);
    path.push(Waypoint::ORIGIN);
    path.extend_from_slice(ego_future.points());
    let mut hits: Vec<(f64, f64, usize)> = boxes
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            let gap = point_chain_distance(&Waypoint::new(b.x, b.y), &path);
            (gap <= cfg.corridor_halfwidth).then_some((gap, b.depth(), i))
        })
        .collect();
    hits.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    hits.truncate(cfg.max_count);
    hits.into_iter()
        .enumerate()
        .map(|(r, (gap, _, i))| CriticalObject {
            bbox: boxes[i],
            rank: r + 1,
            min_gap: gap,
            source_index: i,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub scene_description: String,
    pub critical_objects: Vec<CriticalObject>,
    pub behavior_descriptions: Vec<String>,
    pub meta_decision: MetaDecision,
}

impl Rationale {
    /// The four sections, one per line.
    pub fn to_text(&self) -> Result<String> {
        let critical = if self.critical_objects.is_empty() {
            NONE_TEXT.to_string()
        } else {
            self.critical_objects
                .iter()
                .map(|c| {
                    Ok(format!(
                        "{} at {}",
                        c.bbox.cls,
                        encode_waypoint(&Waypoint::new(c.bbox.x, c.bbox.y))?
                    ))
                })
                .collect::<Result<Vec<_>>>()?
                .join(", ")
        };
        let behavior = if self.behavior_descriptions.is_empty() {
            NONE_TEXT.to_string()
        } else {
            self.behavior_descriptions.join(" ")
        };
        Ok(format!(
            "{}\n{CRITICAL_PREFIX}{critical}\n{BEHAVIOR_PREFIX}{behavior}\n{DECISION_PREFIX}{}",
            self.scene_description,
            self.meta_decision.sentence()
        ))
    }
}

const MOVING_SPEED: f64 = 0.5;

fn behavior_sentence(obj: &CriticalObject, velocity: Waypoint) -> String {
    let b = &obj.bbox;
    let place = if b.x > 2.0 {
        "ahead of me"
    } else if b.x < -2.0 {
        "behind me"
    } else if b.y >= 0.0 {
        "to my left"
    } else {
        "to my right"
    };
    let speed = velocity.norm();
    let motion = if speed < MOVING_SPEED {
        "is stationary".to_string()
    } else {
        let cos = velocity.x / speed;
        if cos > 0.5 {
            "is moving in the same direction as me".to_string()
        } else if cos < -0.5 {
            "is moving in the opposite direction".to_string()
        } else {
            "is crossing my path".to_string()
        }
    };
    format!("The {} {place} {motion}.", b.cls)
}

/// Deterministic rationale for a scenario. Behavior sentences use the
/// scenario's agent velocities via `source_index`.
pub fn build_rationale(
    s: &ScenarioLog,
    criticals: Vec<CriticalObject>,
    decision: MetaDecision,
) -> Rationale {
    let behavior_descriptions = criticals
        .iter()
        .map(|c| {
            let v = s
                .boxes
                .get(c.source_index)
                .map_or(Waypoint::ORIGIN, |a| a.velocity);
            behavior_sentence(c, v)
        })
        .collect();
    Rationale {
        scene_description: s.metadata.sentence(),
        critical_objects: criticals,
        behavior_descriptions,
        meta_decision: decision,
    }
}

pub fn compose_rationale(
    s: &ScenarioLog,
    criticals: &[CriticalObject],
    decision: MetaDecision,
) -> Result<String> {
    build_rationale(s, criticals.to_vec(), decision).to_text()
}

/// Labels a scenario end to end from its ground truth.
pub fn label_scenario(
    s: &ScenarioLog,
    thresholds: &DecisionThresholds,
    critical: &CriticalConfig,
) -> Result<Rationale> {
    let decision = meta_decision(&s.ego_future, thresholds)?;
    let criticals = critical_objects(&s.ego_future, &s.plain_boxes(), critical);
    Ok(build_rationale(s, criticals, decision))
}

/// Parsed rationale text: the raw section lines plus the R2 items.
#[derive(Debug, Clone, PartialEq)]
pub struct RationaleSections {
    pub scene: String,
    pub critical: Vec<(BoxClass, Waypoint)>,
    pub behavior: String,
    pub decision: String,
}

pub fn parse_critical_items(body: &str) -> Result<Vec<(BoxClass, Waypoint)>> {
    if body == NONE_TEXT {
        return Ok(Vec::new());
    }
    body.split(", ")
        .enumerate()
        .map(|(i, item)| {
            let (cls, at) = item
                .split_once(" at ")
                .ok_or_else(|| Error::parse_item(i, format!("`{item}` is not `<cls> at [x,y]`")))?;
            let cls: BoxClass = cls.parse()?;
            let p = parse_waypoint(at).map_err(|e| Error::parse_item(i, e.to_string()))?;
            Ok((cls, p))
        })
        .collect()
}

/// Splits four rationale lines into sections, checking their markers.
pub fn parse_rationale(text: &str) -> Result<RationaleSections> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != 4 {
        return Err(Error::parse(0, format!("rationale has {} lines, expected 4", lines.len())));
    }
    let strip = |i: usize, prefix: &str| {
        lines[i]
            .strip_prefix(prefix)
            .ok_or_else(|| Error::parse_item(i, format!("section must start with `{prefix}`")))
    };
    Ok(RationaleSections {
        scene: lines[0].to_string(),
        critical: parse_critical_items(strip(1, CRITICAL_PREFIX)?)?,
        behavior: strip(2, BEHAVIOR_PREFIX)?.to_string(),
        decision: strip(3, DECISION_PREFIX)?.to_string(),
    })
}
