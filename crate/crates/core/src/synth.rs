//! Seeded synthetic scenarios and baseline planners.
//!
//! Scenes are built in the ego frame (ego at the origin, heading 0) and the
//! roadgraph is then placed in a random global frame. Lanes are straight
//! segments and circular arcs, cut into chunks of at most
//! [`GeneratorConfig::chunk_length`] meters.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{Box3D, BoxClass, IntentCommand, RoadGraph};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, transform_to_global, Polyline, Pose2D, Trajectory, Waypoint};
use crate::planning::HorizonPreset;
use crate::rationale::{meta_decision, DecisionThresholds, LateralAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeOfDay {
    Day,
    Dusk,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadType {
    Highway,
    Urban,
    Residential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub time_of_day: TimeOfDay,
    pub road_type: RoadType,
    pub lane_count: u32,
}

impl SceneMetadata {
    pub fn sentence(&self) -> String {
        let time = match self.time_of_day {
            TimeOfDay::Day => "daytime",
            TimeOfDay::Dusk => "dusk",
            TimeOfDay::Night => "nighttime",
        };
        let road = match self.road_type {
            RoadType::Highway => "a highway",
            RoadType::Urban => "an urban road",
            RoadType::Residential => "a residential street",
        };
        let lanes = if self.lane_count == 1 {
            "1 lane".to_string()
        } else {
            format!("{} lanes", self.lane_count)
        };
        format!("It is {time} and I am driving on {road} with {lanes}.")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedProfile {
    Constant,
    Accel,
    Decel,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Maneuver {
    Straight,
    Left,
    Right,
}

impl Maneuver {
    pub fn intent(&self) -> IntentCommand {
        match self {
            Maneuver::Straight => IntentCommand::GoStraight,
            Maneuver::Left => IntentCommand::TurnLeft,
            Maneuver::Right => IntentCommand::TurnRight,
        }
    }

    fn lateral(&self) -> LateralAction {
        match self {
            Maneuver::Straight => LateralAction::Straight,
            Maneuver::Left => LateralAction::Left,
            Maneuver::Right => LateralAction::Right,
        }
    }
}

/// A box plus the ego-frame velocity it was generated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    #[serde(flatten)]
    pub bbox: Box3D,
    pub velocity: Waypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub speed_profile: SpeedProfile,
    pub maneuver: Maneuver,
    /// Ego speed at t = 0, m/s.
    pub initial_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub id: String,
    /// Global pose at t = 0.
    pub ego_pose: Pose2D,
    /// Ego frame, oldest first, ending with the current position.
    pub ego_history: Trajectory,
    /// Ego frame, first point one step ahead.
    pub ego_future: Trajectory,
    pub intent: IntentCommand,
    /// Ego frame.
    pub boxes: Vec<Agent>,
    /// Global frame.
    pub roadgraph: RoadGraph,
    /// Centerline of the lane the ego drives in, global frame.
    pub ego_lane: Polyline,
    pub lane_width: f64,
    pub metadata: SceneMetadata,
    pub kinematics: Kinematics,
    pub blockage: bool,
}

impl ScenarioLog {
    pub fn plain_boxes(&self) -> Vec<Box3D> {
        self.boxes.iter().map(|a| a.bbox).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ego_history.is_empty() || self.ego_future.is_empty() {
            return Err(Error::InvalidScenario(format!("{}: empty history or future", self.id)));
        }
        if self.ego_history.dt() != self.ego_future.dt() {
            return Err(Error::InvalidScenario(format!("{}: history and future dt differ", self.id)));
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::InvalidScenario(format!("{}: lane_width must be positive", self.id)));
        }
        for a in &self.boxes {
            a.bbox.validate()?;
            if !a.velocity.is_finite() {
                return Err(Error::InvalidScenario(format!("{}: non-finite velocity", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockageConfig {
    /// meters along the ego lane
    pub lookahead: f64,
    pub coverage_fraction: f64,
    /// m/s
    pub stationary_speed: f64,
}

impl Default for BlockageConfig {
    fn default() -> Self {
        Self {
            lookahead: 40.0,
            coverage_fraction: 0.6,
            stationary_speed: 0.2,
        }
    }
}

impl BlockageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lookahead > 0.0 && self.stationary_speed > 0.0) {
            return Err(Error::Config("blockage lookahead and speed must be positive".into()));
        }
        if !(self.coverage_fraction > 0.0 && self.coverage_fraction <= 1.0) {
            return Err(Error::Config("coverage_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Protocol shapes: `(dt, history steps, future steps)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Womd,
    Nuscenes,
}

impl Protocol {
    pub fn shape(&self) -> (f64, usize, usize) {
        match self {
            Protocol::Womd => (0.5, 2, 16),
            Protocol::Nuscenes => (0.5, 4, 6),
        }
    }

    pub fn horizons(&self) -> HorizonPreset {
        match self {
            Protocol::Womd => HorizonPreset::Womd,
            Protocol::Nuscenes => HorizonPreset::Nuscenes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dt: f64,
    /// Steps of history before t = 0; the history also holds the current point.
    pub history_steps: usize,
    pub future_steps: usize,
    pub max_agents: usize,
    pub max_lanes: u32,
    pub lane_width: f64,
    pub chunk_length: f64,
    pub blockage_probability: f64,
    pub speed_profile: Option<SpeedProfile>,
    pub maneuver: Option<Maneuver>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::for_protocol(Protocol::Womd)
    }
}

impl GeneratorConfig {
    pub fn for_protocol(p: Protocol) -> Self {
        let (dt, history_steps, future_steps) = p.shape();
        Self {
            dt,
            history_steps,
            future_steps,
            max_agents: 8,
            max_lanes: 3,
            lane_width: 3.5,
            chunk_length: 30.0,
            blockage_probability: 0.15,
            speed_profile: None,
            maneuver: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.history_steps == 0 || self.future_steps < 3 {
            return Err(Error::Config("need >= 1 history step and >= 3 future steps".into()));
        }
        if !(1..=4).contains(&self.max_lanes) {
            return Err(Error::Config("max_lanes must be 1..=4".into()));
        }
        if !(self.lane_width > 0.0 && self.chunk_length >= 5.0) {
            return Err(Error::Config("lane_width must be > 0 and chunk_length >= 5".into()));
        }
        if !(0.0..=1.0).contains(&self.blockage_probability) {
            return Err(Error::Config("blockage_probability must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn horizon(&self) -> f64 {
        self.future_steps as f64 * self.dt
    }
}

/// Ego path by arc length: a straight approach, an optional circular arc,
/// then a straight exit. Negative arc lengths extend the approach backwards.
#[derive(Debug, Clone, Copy)]
struct Path {
    approach: f64,
    radius: f64,
    /// Signed turn angle, positive to the left. Zero means straight.
    turn: f64,
}

impl Path {
    fn straight() -> Self {
        Self {
            approach: f64::INFINITY,
            radius: 1.0,
            turn: 0.0,
        }
    }

    fn arc_end(&self) -> f64 {
        self.approach + self.radius * self.turn.abs()
    }

    /// Position and heading at arc length `s`.
    fn pose(&self, s: f64) -> (Waypoint, f64) {
        if self.turn == 0.0 || s <= self.approach {
            return (Waypoint::new(s, 0.0), 0.0);
        }
        let sign = self.turn.signum();
        let on_arc = |alpha: f64| {
            let p = Waypoint::new(
                self.approach + self.radius * alpha.sin(),
                sign * self.radius * (1.0 - alpha.cos()),
            );
            (p, sign * alpha)
        };
        if s <= self.arc_end() {
            return on_arc((s - self.approach) / self.radius);
        }
        let (p, h) = on_arc(self.turn.abs());
        let d = s - self.arc_end();
        (Waypoint::new(p.x + d * h.cos(), p.y + d * h.sin()), h)
    }

    /// Point offset to the left of the path by `d`.
    fn offset(&self, s: f64, d: f64) -> (Waypoint, f64) {
        let (p, h) = self.pose(s);
        (Waypoint::new(p.x - d * h.sin(), p.y + d * h.cos()), h)
    }
}

/// Distance travelled at time `t` (negative `t` is history at `v0`).
fn travelled(profile: SpeedProfile, v0: f64, accel: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return v0 * t;
    }
    match profile {
        SpeedProfile::Constant => v0 * t,
        SpeedProfile::Accel => v0 * t + 0.5 * accel * t * t,
        SpeedProfile::Decel | SpeedProfile::Stop => {
            let t_stop = v0 / accel;
            let t = t.min(t_stop);
            v0 * t - 0.5 * accel * t * t
        }
    }
}

fn sample_polyline(path: &Path, d: f64, s0: f64, s1: f64) -> Result<Vec<Waypoint>> {
    let n = ((s1 - s0) / 1.0).ceil().max(1.0) as usize;
    Ok((0..=n)
        .map(|i| path.offset(s0 + (s1 - s0) * i as f64 / n as f64, d).0)
        .collect())
}

fn chunked(points: Vec<Waypoint>, chunk_length: f64) -> Result<Vec<Polyline>> {
    let full = Polyline::new(points)?;
    let n = (full.length() / chunk_length).ceil().max(1.0) as usize;
    let cum = full.cumulative_lengths();
    let step = full.length() / n as f64;
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let (a, b) = (step * c as f64, step * (c + 1) as f64);
        let mut pts = vec![full.point_at(a)];
        for (i, &s) in cum.iter().enumerate() {
            if s > a + 1e-6 && s < b - 1e-6 {
                pts.push(full.points()[i]);
            }
        }
        pts.push(full.point_at(b));
        out.push(Polyline::new(pts)?);
    }
    Ok(out)
}

struct Scene {
    lanes_ego: Vec<Polyline>,
    ego_lane_ego: Polyline,
    boxes: Vec<Agent>,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// Speed in multiples of 0.5 m/s so that `v * k * dt` stays exact for the
/// default dt.
fn half_step_speed(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    rng.random_range(lo..=hi) as f64 * 0.5
}

fn class_dims(rng: &mut ChaCha8Rng, cls: BoxClass) -> (f64, f64, f64) {
    match cls {
        BoxClass::Vehicle => (
            rng.random_range(4.0..5.2),
            rng.random_range(1.7..2.0),
            rng.random_range(1.4..1.9),
        ),
        BoxClass::Pedestrian => (
            rng.random_range(0.4..0.8),
            rng.random_range(0.4..0.8),
            rng.random_range(1.5..1.9),
        ),
        BoxClass::Cyclist | BoxClass::Motorcyclist => (
            rng.random_range(1.6..2.2),
            rng.random_range(0.6..0.9),
            rng.random_range(1.5..1.8),
        ),
        BoxClass::Sign => (0.2, rng.random_range(0.6..1.0), rng.random_range(2.0..3.0)),
        BoxClass::Other => (0.4, 0.4, 0.7),
    }
}

fn make_agent(cls: BoxClass, pos: Waypoint, heading: f64, speed: f64, dims: (f64, f64, f64)) -> Agent {
    let theta = normalize_angle(heading);
    Agent {
        bbox: Box3D {
            x: pos.x,
            y: pos.y,
            z: dims.2 / 2.0,
            l: dims.0,
            w: dims.1,
            h: dims.2,
            theta,
            cls,
        },
        velocity: Waypoint::new(speed * theta.cos(), speed * theta.sin()),
    }
}

/// One scenario, fully determined by `(cfg, seed)`.
pub fn gen_scenario(cfg: &GeneratorConfig, seed: u64) -> Result<ScenarioLog> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let road_type = pick(&mut rng, &[RoadType::Highway, RoadType::Urban, RoadType::Residential]);
    let time_of_day = pick(&mut rng, &[TimeOfDay::Day, TimeOfDay::Dusk, TimeOfDay::Night]);
    let lane_count = rng.random_range(1..=cfg.max_lanes);
    let ego_lane = rng.random_range(0..lane_count);
    let w = cfg.lane_width;
    // lane j sits (ego_lane - j) lane widths to the left of the ego lane
    let offsets: Vec<f64> = (0..lane_count).map(|j| (ego_lane as f64 - j as f64) * w).collect();
    let two_way = road_type != RoadType::Highway && lane_count >= 2 && ego_lane != 0 && rng.random_bool(0.5);
    let max_left = offsets.iter().cloned().fold(0.0, f64::max);
    let max_right = -offsets.iter().cloned().fold(0.0, f64::min);

    let (vlo, vhi) = match road_type {
        RoadType::Highway => (16, 40),
        RoadType::Urban => (4, 26),
        RoadType::Residential => (4, 16),
    };
    let want_blockage = cfg.max_agents > 0 && rng.random_bool(cfg.blockage_probability);
    let t_end = cfg.horizon();
    let thresholds = DecisionThresholds::default();

    let mut chosen = None;
    for attempt in 0..16 {
        let maneuver = cfg.maneuver.unwrap_or_else(|| {
            if road_type == RoadType::Highway {
                Maneuver::Straight
            } else {
                pick(&mut rng, &[Maneuver::Straight, Maneuver::Straight, Maneuver::Left, Maneuver::Right])
            }
        });
        let mut profile = cfg.speed_profile.unwrap_or_else(|| {
            pick(
                &mut rng,
                &[SpeedProfile::Constant, SpeedProfile::Accel, SpeedProfile::Decel, SpeedProfile::Stop],
            )
        });
        if want_blockage && cfg.speed_profile.is_none() {
            profile = SpeedProfile::Stop;
        }
        let turning = maneuver != Maneuver::Straight;
        let mut v0 = half_step_speed(&mut rng, if turning { 6 } else { vlo }, if turning { 20 } else { vhi });
        let mut accel = match profile {
            SpeedProfile::Constant => 0.0,
            SpeedProfile::Accel => rng.random_range(0.8..2.0),
            SpeedProfile::Decel => {
                v0 = v0.max(6.0);
                // keep the final speed well above a standstill
                let cap = ((v0 - 2.0) / t_end).min(2.5);
                rng.random_range(0.5 * cap..cap)
            }
            SpeedProfile::Stop => {
                let t_stop = rng.random_range(0.4..0.8) * t_end;
                v0 / t_stop
            }
        };
        let last_try = attempt == 15;
        let path = if !turning {
            Path::straight()
        } else {
            let inner = if maneuver == Maneuver::Left { max_left } else { max_right };
            let min_r = inner + 6.0;
            let travel = travelled(profile, v0, accel, t_end);
            if last_try {
                // slow constant turn that is guaranteed to register
                profile = SpeedProfile::Constant;
                accel = 0.0;
                v0 = 5.0;
                Path {
                    approach: 0.0,
                    radius: min_r.max(8.0),
                    turn: maneuver_sign(maneuver) * FRAC_PI_2,
                }
            } else {
                let approach = rng.random_range(0.0..(travel * 0.4).max(0.1));
                Path {
                    approach,
                    radius: rng.random_range(min_r..min_r + 15.0),
                    turn: maneuver_sign(maneuver) * FRAC_PI_2,
                }
            }
        };
        let future: Vec<Waypoint> = (1..=cfg.future_steps)
            .map(|k| path.pose(travelled(profile, v0, accel, k as f64 * cfg.dt)).0)
            .collect();
        let future = Trajectory::new(cfg.dt, future)?;
        let decision = meta_decision(&future, &thresholds)?;
        if decision.lateral_action == maneuver.lateral() || last_try {
            chosen = Some((maneuver, profile, v0, accel, path, future));
            break;
        }
    }
    let (maneuver, profile, v0, accel, path, ego_future) =
        chosen.ok_or_else(|| Error::InvalidScenario("generator retries exhausted".into()))?;

    let history: Vec<Waypoint> = (0..=cfg.history_steps)
        .rev()
        .map(|k| path.pose(travelled(profile, v0, accel, -(k as f64 * cfg.dt) + 0.0)).0)
        .collect();
    let ego_history = Trajectory::new(cfg.dt, history)?;

    let s_back = -15.0;
    let s_far = travelled(profile, v0, accel, t_end).max(0.0) + 20.0;
    // lanes are cropped ahead so a scene stays within the default polyline budget
    let s_end = if path.turn == 0.0 {
        s_far.clamp(45.0, 75.0)
    } else {
        s_far.max(path.arc_end() + 15.0).min(100.0)
    };

    let mut lanes_ego = Vec::new();
    let mut ego_lane_points = Vec::new();
    for (j, &d) in offsets.iter().enumerate() {
        let mut pts = sample_polyline(&path, d, s_back, s_end)?;
        if j == ego_lane as usize {
            ego_lane_points = pts.clone();
        }
        if two_way && j == 0 {
            pts.reverse();
        }
        lanes_ego.extend(chunked(pts, cfg.chunk_length)?);
    }
    let cross_at = (path.turn == 0.0 && road_type == RoadType::Urban && rng.random_bool(0.5))
        .then(|| rng.random_range(20.0..40.0));
    if let Some(cx) = cross_at {
        for (dx, up) in [(-w / 2.0, false), (w / 2.0, true)] {
            let mut pts: Vec<Waypoint> = (0..=60).map(|i| Waypoint::new(cx + dx, -30.0 + i as f64)).collect();
            if !up {
                pts.reverse();
            }
            lanes_ego.extend(chunked(pts, cfg.chunk_length)?);
        }
    }
    let ego_lane_ego = Polyline::new(ego_lane_points)?;

    let mut scene = Scene {
        lanes_ego,
        ego_lane_ego,
        boxes: Vec::new(),
    };
    if cfg.max_agents > 0 {
        let swept = swept_path(&ego_future);
        let s_end = travelled(profile, v0, accel, t_end);
        let cone_row = (want_blockage && profile == SpeedProfile::Stop)
            .then(|| s_end + rng.random_range(3.0..8.0))
            .filter(|&s_row| s_row <= 38.0);
        let cause = cone_row.is_none() && place_cause_agent(&mut rng, &path, &swept, profile, s_end, road_type, &mut scene);
        let budget = cfg.max_agents - usize::from(cause);
        place_agents(&mut rng, budget, w, &path, &swept, &offsets, two_way, road_type, &mut scene);
        if let Some(s_row) = cone_row {
            place_cone_row(&path, s_row, w, &mut scene);
        }
    }

    let ego_pose = Pose2D::new(
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
        rng.random_range(-PI..PI),
    );
    let to_global = |p: &Polyline| -> Result<Polyline> { Polyline::new(transform_to_global(p.points(), &ego_pose)?) };
    let roadgraph = RoadGraph::new(scene.lanes_ego.iter().map(to_global).collect::<Result<_>>()?);
    let ego_lane_global = to_global(&scene.ego_lane_ego)?;

    let mut log = ScenarioLog {
        id: format!("scn-{seed:06}"),
        ego_pose,
        ego_history,
        ego_future,
        intent: maneuver.intent(),
        boxes: scene.boxes,
        roadgraph,
        ego_lane: ego_lane_global,
        lane_width: w,
        metadata: SceneMetadata {
            time_of_day,
            road_type,
            lane_count,
        },
        kinematics: Kinematics {
            speed_profile: profile,
            maneuver,
            initial_speed: v0,
        },
        blockage: false,
    };
    log.blockage = blockage_label(&log, &BlockageConfig::default());
    log.validate()?;
    Ok(log)
}

fn maneuver_sign(m: Maneuver) -> f64 {
    match m {
        Maneuver::Left => 1.0,
        Maneuver::Right => -1.0,
        Maneuver::Straight => 0.0,
    }
}

const EGO_HALF_WIDTH: f64 = 1.0;

/// Origin plus future waypoints, densified to 0.5 m steps.
fn swept_path(future: &Trajectory) -> Vec<Waypoint> {
    let mut out = vec![Waypoint::ORIGIN];
    for &q in future.points() {
        let p = *out.last().expect("nonempty");
        let n = (p.distance(&q) / 0.5).ceil() as usize;
        out.extend((1..=n).map(|i| p.lerp(&q, i as f64 / n as f64)));
    }
    out
}

/// Distance from `q` to the footprint rectangle of `b`.
fn footprint_distance(b: &Box3D, q: &Waypoint) -> f64 {
    let (dx, dy) = (q.x - b.x, q.y - b.y);
    let (s, c) = b.theta.sin_cos();
    let lx = (c * dx + s * dy).abs() - b.l / 2.0;
    let ly = (-s * dx + c * dy).abs() - b.w / 2.0;
    lx.max(0.0).hypot(ly.max(0.0))
}

fn clear_of_path(b: &Box3D, swept: &[Waypoint]) -> bool {
    Waypoint::new(b.x, b.y).norm() > 6.0 && swept.iter().all(|q| footprint_distance(b, q) > EGO_HALF_WIDTH)
}

/// Optionally adds one agent close to the ego path that explains the
/// ego's behavior: a pedestrian crossing (debris on highways) just past a stop, or a cyclist
/// riding along the lane edge. Returns whether one was placed.
fn place_cause_agent(
    rng: &mut ChaCha8Rng,
    path: &Path,
    swept: &[Waypoint],
    profile: SpeedProfile,
    s_end: f64,
    road_type: RoadType,
    scene: &mut Scene,
) -> bool {
    let agent = if profile == SpeedProfile::Stop {
        if !rng.random_bool(0.7) {
            return false;
        }
        let (p, h) = path.offset(s_end + rng.random_range(1.6..2.4), rng.random_range(-0.8..0.8));
        if road_type == RoadType::Highway {
            // debris in the lane
            let size = rng.random_range(0.4..0.8);
            make_agent(BoxClass::Other, p, h, 0.0, (size, size, rng.random_range(0.3..0.8)))
        } else {
            let dims = class_dims(rng, BoxClass::Pedestrian);
            let side = if rng.random_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
            make_agent(BoxClass::Pedestrian, p, h + side, rng.random_range(0.6..1.4), dims)
        }
    } else {
        if !rng.random_bool(0.35) {
            return false;
        }
        let cls = if road_type == RoadType::Highway { BoxClass::Motorcyclist } else { BoxClass::Cyclist };
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (p, h) = path.offset(rng.random_range(8.0..30.0), side * rng.random_range(1.5..2.2));
        let dims = class_dims(rng, cls);
        make_agent(cls, p, h, rng.random_range(2.0..5.0), dims)
    };
    if !clear_of_path(&agent.bbox, swept) {
        return false;
    }
    scene.boxes.push(agent);
    true
}

#[allow(clippy::too_many_arguments)]
fn place_agents(
    rng: &mut ChaCha8Rng,
    max_agents: usize,
    lane_width: f64,
    path: &Path,
    swept: &[Waypoint],
    offsets: &[f64],
    two_way: bool,
    road_type: RoadType,
    scene: &mut Scene,
) {
    let n = rng.random_range(0..=max_agents);
    let w = lane_width;
    let curb_left = offsets.iter().cloned().fold(f64::MIN, f64::max) + w / 2.0 + 1.5;
    let curb_right = offsets.iter().cloned().fold(f64::MAX, f64::min) - w / 2.0 - 1.5;
    let classes: &[BoxClass] = if road_type == RoadType::Highway {
        &[BoxClass::Vehicle, BoxClass::Vehicle, BoxClass::Vehicle, BoxClass::Motorcyclist, BoxClass::Sign]
    } else {
        &[
            BoxClass::Vehicle,
            BoxClass::Vehicle,
            BoxClass::Vehicle,
            BoxClass::Pedestrian,
            BoxClass::Pedestrian,
            BoxClass::Cyclist,
            BoxClass::Motorcyclist,
            BoxClass::Sign,
            BoxClass::Other,
        ]
    };
    let mut placed = 0;
    let mut tries = 0;
    while placed < n && tries < n * 20 {
        tries += 1;
        let cls = pick(rng, classes);
        let dims = class_dims(rng, cls);
        let s = rng.random_range(-12.0..50.0);
        let agent = match cls {
            BoxClass::Pedestrian | BoxClass::Sign => {
                let side = if rng.random_bool(0.5) { curb_left } else { curb_right };
                let (p, h) = path.offset(s, side + rng.random_range(-0.5..0.5));
                if cls == BoxClass::Sign {
                    make_agent(cls, p, h + FRAC_PI_2, 0.0, dims)
                } else {
                    let speed = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.6..1.8) };
                    let crossing = rng.random_bool(0.3);
                    let heading = if crossing { h + FRAC_PI_2 } else { h + pick(rng, &[0.0, PI]) };
                    make_agent(cls, p, heading, speed, dims)
                }
            }
            _ => {
                let j = rng.random_range(0..offsets.len());
                let d = offsets[j] + rng.random_range(-0.3..0.3);
                let (p, h) = path.offset(s, d);
                let reversed = two_way && j == 0;
                let speed = if rng.random_bool(0.3) || cls == BoxClass::Other {
                    0.0
                } else {
                    rng.random_range(2.0..12.0)
                };
                make_agent(cls, p, if reversed { h + PI } else { h }, speed, dims)
            }
        };
        let c = Waypoint::new(agent.bbox.x, agent.bbox.y);
        // nothing may sit where the ego is about to drive
        let clear_of_ego = clear_of_path(&agent.bbox, swept);
        let clear_of_others = scene
            .boxes
            .iter()
            .all(|o| Waypoint::new(o.bbox.x, o.bbox.y).distance(&c) > 0.5 * (o.bbox.l.max(o.bbox.w) + agent.bbox.l.max(agent.bbox.w)));
        if clear_of_ego && clear_of_others {
            scene.boxes.push(agent);
            placed += 1;
        }
    }
}

/// Traffic cones across the ego lane at arc length `s`.
fn place_cone_row(path: &Path, s: f64, lane_width: f64, scene: &mut Scene) {
    let n = 8;
    let spacing = lane_width / n as f64;
    for i in 0..n {
        let d = -lane_width / 2.0 + spacing * (i as f64 + 0.5);
        let (p, h) = path.offset(s, d);
        scene.boxes.push(make_agent(BoxClass::Other, p, h, 0.0, (0.4, 0.4, 0.7)));
    }
}

/// Unit tangent of a polyline at arc length `s`.
fn tangent_at(p: &Polyline, s: f64) -> Waypoint {
    let eps = 0.05;
    let l = p.length();
    let a = p.point_at((s - eps).max(0.0));
    let b = p.point_at((s + eps).min(l));
    let d = b.sub(&a);
    d.scale(1.0 / d.norm())
}

/// Union length of intervals after clipping to `[lo, hi]`.
fn covered_length(mut iv: Vec<(f64, f64)>, lo: f64, hi: f64) -> f64 {
    iv.retain(|&(a, b)| b > lo && a < hi);
    iv.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite"));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        let (a, b) = (a.max(lo), b.min(hi));
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

/// True when stationary boxes ahead in the ego lane cover at least
/// `coverage_fraction` of its width at some station within `lookahead`.
pub fn blockage_label(s: &ScenarioLog, cfg: &BlockageConfig) -> bool {
    let lane = match s.ego_lane.points().len() {
        0 | 1 => return false,
        _ => match crate::geometry::transform_to_ego(s.ego_lane.points(), &s.ego_pose).and_then(Polyline::new) {
            Ok(p) => p,
            Err(_) => return false,
        },
    };
    let half = s.lane_width / 2.0;
    let (s0, _) = lane.closest_arclength(&Waypoint::ORIGIN);
    // (station lo, station hi, lateral lo, lateral hi)
    let mut spans = Vec::new();
    for a in &s.boxes {
        if a.velocity.norm() >= cfg.stationary_speed {
            continue;
        }
        let b = &a.bbox;
        let c = Waypoint::new(b.x, b.y);
        let (st, _) = lane.closest_arclength(&c);
        let t = tangent_at(&lane, st);
        let rel = c.sub(&lane.point_at(st));
        let lateral = t.x * rel.y - t.y * rel.x;
        let dpsi = b.theta - t.y.atan2(t.x);
        let along = (b.l / 2.0 * dpsi.cos()).abs() + (b.w / 2.0 * dpsi.sin()).abs();
        let across = (b.l / 2.0 * dpsi.sin()).abs() + (b.w / 2.0 * dpsi.cos()).abs();
        let (slo, shi) = (st - along - s0, st + along - s0);
        if shi < 0.0 || slo > cfg.lookahead {
            continue;
        }
        spans.push((slo.max(0.0), shi.min(cfg.lookahead), lateral - across, lateral + across));
    }
    spans.iter().any(|&(station, ..)| {
        let active: Vec<(f64, f64)> = spans
            .iter()
            .filter(|sp| sp.0 <= station && station <= sp.1)
            .map(|sp| (sp.2, sp.3))
            .collect();
        covered_length(active, -half, half) >= cfg.coverage_fraction * s.lane_width - 1e-9
    })
}

/// Extrapolates the last history step for `steps` future steps.
pub fn constant_velocity_planner(history: &Trajectory, steps: usize) -> Result<Trajectory> {
    let pts = history.points();
    if pts.len() < 2 {
        return Err(Error::InvalidScenario("constant-velocity planner needs >= 2 history points".into()));
    }
    let last = pts[pts.len() - 1];
    let v = last.sub(&pts[pts.len() - 2]);
    let future = (1..=steps)
        .map(|k| Waypoint::new(last.x + k as f64 * v.x, last.y + k as f64 * v.y))
        .collect();
    Trajectory::new(history.dt(), future)
}

/// Ground truth plus i.i.d. gaussian noise per coordinate.
pub fn noisy_oracle_planner(gt: &Trajectory, sigma: f64, seed: u64) -> Result<Trajectory> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(gt.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = gt
        .points()
        .iter()
        .map(|p| Waypoint::new(p.x + normal.sample(&mut rng), p.y + normal.sample(&mut rng)))
        .collect();
    Trajectory::new(gt.dt(), pts)
}

/// Mixes a base seed with indices into an independent child seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
