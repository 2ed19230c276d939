//! BEV geometry shared by the codecs and metrics.
//!
//! Frames: the ego frame has x forward, y to the left and headings measured
//! counter-clockwise. Global poses use the same handedness.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the BEV plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
}

impl Waypoint {
    pub const ORIGIN: Waypoint = Waypoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Waypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(&self, other: &Waypoint) -> Waypoint {
        Waypoint::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(&self, other: &Waypoint) -> Waypoint {
        Waypoint::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(&self, k: f64) -> Waypoint {
        Waypoint::new(self.x * k, self.y * k)
    }

    pub fn dot(&self, other: &Waypoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn lerp(&self, other: &Waypoint, t: f64) -> Waypoint {
        Waypoint::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl From<[f64; 2]> for Waypoint {
    fn from(v: [f64; 2]) -> Self {
        Waypoint::new(v[0], v[1])
    }
}

impl From<Waypoint> for [f64; 2] {
    fn from(p: Waypoint) -> Self {
        [p.x, p.y]
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Vehicle pose in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };

    /// Builds a pose, wrapping the heading into (-pi, pi].
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Waypoint {
        Waypoint::new(self.x, self.y)
    }

    fn check(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()) {
            return Err(Error::InvalidGeometry("pose is not finite".into()));
        }
        Ok(())
    }
}

/// Maps global-frame points into the frame of `ego`.
pub fn transform_to_ego(points: &[Waypoint], ego: &Pose2D) -> Result<Vec<Waypoint>> {
    ego.check()?;
    let (s, c) = ego.heading.sin_cos();
    points
        .iter()
        .map(|p| {
            if !p.is_finite() {
                return Err(Error::InvalidGeometry(format!("non-finite point {p:?}")));
            }
            let dx = p.x - ego.x;
            let dy = p.y - ego.y;
            Ok(Waypoint::new(c * dx + s * dy, -s * dx + c * dy))
        })
        .collect()
}

/// Inverse of [`transform_to_ego`].
pub fn transform_to_global(points: &[Waypoint], ego: &Pose2D) -> Result<Vec<Waypoint>> {
    ego.check()?;
    let (s, c) = ego.heading.sin_cos();
    points
        .iter()
        .map(|p| {
            if !p.is_finite() {
                return Err(Error::InvalidGeometry(format!("non-finite point {p:?}")));
            }
            Ok(Waypoint::new(
                ego.x + c * p.x - s * p.y,
                ego.y + s * p.x + c * p.y,
            ))
        })
        .collect()
}

/// Uniformly sampled sequence of waypoints. Point `i` of a future trajectory
/// sits at time `(i + 1) * dt`; history trajectories end at the current pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRepr")]
pub struct Trajectory {
    dt: f64,
    points: Vec<Waypoint>,
}

#[derive(Deserialize)]
struct TrajectoryRepr {
    dt: f64,
    points: Vec<Waypoint>,
}

impl TryFrom<TrajectoryRepr> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajectoryRepr) -> Result<Self> {
        Trajectory::new(r.dt, r.points)
    }
}

impl Trajectory {
    pub fn new(dt: f64, points: Vec<Waypoint>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGeometry(format!("dt must be > 0, got {dt}")));
        }
        if points.is_empty() {
            return Err(Error::InvalidGeometry("trajectory has no points".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite waypoint {p:?}")));
        }
        Ok(Self { dt, points })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Waypoint {
        self.points[self.points.len() - 1]
    }

    /// Adds `offset` to every point.
    pub fn translated(&self, offset: Waypoint) -> Trajectory {
        Trajectory {
            dt: self.dt,
            points: self.points.iter().map(|p| p.add(&offset)).collect(),
        }
    }

    /// Flattened `[x0, y0, x1, y1, ...]` coordinates.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub(crate) fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if self.points.len() != other.points.len() {
            return Err(Error::ShapeMismatch(format!(
                "trajectory lengths differ: {} vs {}",
                self.points.len(),
                other.points.len()
            )));
        }
        if (self.dt - other.dt).abs() > 1e-9 {
            return Err(Error::ShapeMismatch(format!(
                "trajectory dt differs: {} vs {}",
                self.dt, other.dt
            )));
        }
        Ok(())
    }
}

/// Mean per-timestamp Euclidean distance between two aligned trajectories.
pub fn trajectory_l2(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    a.check_compatible(b)?;
    let sum: f64 = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| p.distance(q))
        .sum();
    Ok(sum / a.points.len() as f64)
}

/// Directed chain of at least two points; traffic flows in index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Waypoint>", into = "Vec<Waypoint>")]
pub struct Polyline {
    points: Vec<Waypoint>,
}

impl TryFrom<Vec<Waypoint>> for Polyline {
    type Error = Error;

    fn try_from(points: Vec<Waypoint>) -> Result<Self> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Waypoint> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Waypoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegeneratePolyline(format!(
                "polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite point {p:?}")));
        }
        if let Some(w) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::DegeneratePolyline(format!(
                "points {w} and {} coincide",
                w + 1
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Waypoint {
        self.points[0]
    }

    pub fn last(&self) -> Waypoint {
        self.points[self.points.len() - 1]
    }

    /// Cumulative arc length at every vertex; starts at 0.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.points.windows(2) {
            acc += w[0].distance(&w[1]);
            out.push(acc);
        }
        out
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Point at arc length `s`, clamped to the polyline extent.
    pub fn point_at(&self, s: f64) -> Waypoint {
        let cum = self.cumulative_lengths();
        point_at_with(&self.points, &cum, s)
    }

    /// Arc length and distance of the point on the polyline closest to `q`.
    pub fn closest_arclength(&self, q: &Waypoint) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let seg = w[1].sub(&w[0]);
            let len2 = seg.dot(&seg);
            let t = if len2 > 0.0 {
                (q.sub(&w[0]).dot(&seg) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = w[0].lerp(&w[1], t).distance(q);
            if d < best.1 {
                best = (acc + t * len2.sqrt(), d);
            }
            acc += len2.sqrt();
        }
        best
    }

    /// Sum of absolute turning angles at interior vertices, per meter.
    pub fn mean_abs_curvature(&self) -> f64 {
        let length = self.length();
        if length <= 0.0 {
            return 0.0;
        }
        let turning: f64 = self
            .points
            .windows(3)
            .map(|w| {
                let a = w[1].sub(&w[0]);
                let b = w[2].sub(&w[1]);
                normalize_angle(b.y.atan2(b.x) - a.y.atan2(a.x)).abs()
            })
            .sum();
        turning / length
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }
}

fn point_at_with(points: &[Waypoint], cum: &[f64], s: f64) -> Waypoint {
    let total = cum[cum.len() - 1];
    if s <= 0.0 {
        return points[0];
    }
    if s >= total {
        return points[points.len() - 1];
    }
    // first vertex with cumulative length > s
    let hi = cum.partition_point(|&c| c <= s);
    let lo = hi - 1;
    let seg = cum[hi] - cum[lo];
    let t = if seg > 0.0 { (s - cum[lo]) / seg } else { 0.0 };
    points[lo].lerp(&points[hi], t)
}

/// Resamples `p` at arc lengths `anchor + k * interval` inside the polyline,
/// keeping both original endpoints.
pub fn arc_length_resample(p: &Polyline, interval: f64, anchor_arclength: f64) -> Result<Polyline> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(Error::Config(format!("interval must be > 0, got {interval}")));
    }
    if !(0.0..interval).contains(&anchor_arclength) {
        return Err(Error::Config(format!(
            "anchor {anchor_arclength} must lie in [0, {interval})"
        )));
    }
    let cum = p.cumulative_lengths();
    let total = cum[cum.len() - 1];
    if !(total > 0.0) {
        return Err(Error::DegeneratePolyline("polyline has zero length".into()));
    }
    let snap = 1e-9 * total.max(1.0);
    let mut stations = vec![0.0];
    let mut k = 0u64;
    loop {
        let s = anchor_arclength + k as f64 * interval;
        if s >= total - snap {
            break;
        }
        if s > snap {
            stations.push(s);
        }
        k += 1;
    }
    stations.push(total);
    let points = stations
        .iter()
        .map(|&s| point_at_with(&p.points, &cum, s))
        .collect();
    Polyline::new(points)
}

/// Distance from `q` to the segment `a`-`b`; degenerate segments collapse to a point.
pub fn point_segment_distance(q: &Waypoint, a: &Waypoint, b: &Waypoint) -> f64 {
    let seg = b.sub(a);
    let len2 = seg.dot(&seg);
    if len2 <= 0.0 {
        return q.distance(a);
    }
    let t = (q.sub(a).dot(&seg) / len2).clamp(0.0, 1.0);
    a.lerp(b, t).distance(q)
}

/// Distance from `q` to a chain of points (a single point is allowed).
pub fn point_chain_distance(q: &Waypoint, chain: &[Waypoint]) -> f64 {
    match chain {
        [] => f64::INFINITY,
        [only] => q.distance(only),
        _ => chain
            .windows(2)
            .map(|w| point_segment_distance(q, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}
