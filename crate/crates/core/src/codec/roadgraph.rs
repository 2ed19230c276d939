//! Roadgraph text targets.
//!
//! A scene renders as exactly `max_polylines` clauses of the form
//! `(x,y and x,y and ... and invalid) valid;`, each with exactly
//! `max_points_per_polyline` point slots. Encoding runs
//! ego transform -> per-lane sampling -> distance-binned ordering -> render.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{format_fixed2, parse_number, Cursor};
use crate::error::{Error, Result};
use crate::geometry::{arc_length_resample, transform_to_ego, Polyline, Pose2D, Waypoint};

pub const VALID_TOKEN: &str = "valid";
pub const INVALID_TOKEN: &str = "invalid";

/// Point count used when dynamic sampling is switched off.
pub const FIXED_POINT_COUNT: usize = 5;

/// Samples never get closer than this; below a few text quanta two samples
/// could render to the same `x,y` item.
const MIN_INTERVAL: f64 = 0.1;
/// Lattice samples this close to an endpoint are absorbed by it.
const ENDPOINT_GAP: f64 = 0.05;
const MAX_WIDENING_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadGraph {
    pub polylines: Vec<Polyline>,
}

impl RoadGraph {
    pub fn new(polylines: Vec<Polyline>) -> Self {
        Self { polylines }
    }

    pub fn len(&self) -> usize {
        self.polylines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    /// Same graph expressed in the frame of `ego`.
    pub fn to_ego(&self, ego: &Pose2D) -> Result<RoadGraph> {
        let polylines = self
            .polylines
            .iter()
            .map(|p| Polyline::new(transform_to_ego(p.points(), ego)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(RoadGraph { polylines })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadgraphCodecConfig {
    /// Base sample spacing in meters.
    pub interval: f64,
    /// Shrinks the spacing on curvy lanes: `interval / (1 + gain * mean|kappa|)`.
    pub curvature_gain: f64,
    pub max_polylines: usize,
    pub max_points_per_polyline: usize,
    /// Endpoint-distance bin boundaries in meters.
    pub bin_edges: Vec<f64>,
    pub shuffle_within_bins: bool,
    pub ego_origin_aligned: bool,
    pub dynamic_sampling: bool,
    /// Reject scenes with more than `max_polylines` lanes instead of dropping the farthest.
    pub strict_truncation: bool,
}

impl Default for RoadgraphCodecConfig {
    fn default() -> Self {
        Self {
            interval: 2.0,
            curvature_gain: 1.0,
            max_polylines: 16,
            max_points_per_polyline: 24,
            bin_edges: vec![20.0, 50.0],
            shuffle_within_bins: true,
            ego_origin_aligned: true,
            dynamic_sampling: true,
            strict_truncation: true,
        }
    }
}

impl RoadgraphCodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval.is_finite() && self.interval > 0.0) {
            return Err(Error::Config(format!("interval must be > 0, got {}", self.interval)));
        }
        if !(self.curvature_gain.is_finite() && self.curvature_gain >= 0.0) {
            return Err(Error::Config("curvature_gain must be >= 0".into()));
        }
        if self.max_polylines < 1 {
            return Err(Error::Config("max_polylines must be >= 1".into()));
        }
        if self.max_points_per_polyline < 2 {
            return Err(Error::Config("max_points_per_polyline must be >= 2".into()));
        }
        if self.bin_edges.windows(2).any(|w| !(w[0] < w[1]))
            || self.bin_edges.iter().any(|e| !e.is_finite())
        {
            return Err(Error::Config("bin_edges must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    fn bin_of(&self, key: f64) -> usize {
        self.bin_edges.partition_point(|&e| e <= key)
    }
}

fn evenly_spaced(p: &Polyline, count: usize) -> Result<Polyline> {
    let total = p.length();
    let n = count.max(2);
    let points = (0..n)
        .map(|i| {
            if i == n - 1 {
                p.last()
            } else {
                p.point_at(total * i as f64 / (n - 1) as f64)
            }
        })
        .collect();
    Polyline::new(points)
}

fn lattice_sample(p: &Polyline, interval: f64, anchor: f64) -> Result<Polyline> {
    let dense = arc_length_resample(p, interval, anchor)?;
    let (first, last) = (dense.first(), dense.last());
    let n = dense.len();
    let mut points = Vec::with_capacity(n);
    points.push(first);
    points.extend(
        dense.points()[1..n - 1]
            .iter()
            .filter(|q| q.distance(&first) >= ENDPOINT_GAP && q.distance(&last) >= ENDPOINT_GAP),
    );
    points.push(last);
    Polyline::new(points)
}

/// Samples one global-frame lane into the ego frame.
///
/// With dynamic sampling the spacing follows the lane's curvature and the
/// lattice is phased so a sample falls on the lane point nearest the ego
/// origin (when `ego_origin_aligned`). Without it the lane gets a fixed
/// [`FIXED_POINT_COUNT`] evenly spaced points. Either way the result never
/// exceeds `max_points_per_polyline`.
pub fn dynamic_sample_polyline(
    p: &Polyline,
    ego: &Pose2D,
    cfg: &RoadgraphCodecConfig,
) -> Result<Polyline> {
    cfg.validate()?;
    let local = Polyline::new(transform_to_ego(p.points(), ego)?)?;
    let total = local.length();
    if !(total > 0.0) {
        return Err(Error::DegeneratePolyline("lane has zero length".into()));
    }
    let cap = cfg.max_points_per_polyline;
    if !cfg.dynamic_sampling {
        return evenly_spaced(&local, FIXED_POINT_COUNT.min(cap));
    }

    let mut interval =
        (cfg.interval / (1.0 + cfg.curvature_gain * local.mean_abs_curvature())).max(MIN_INTERVAL);
    let anchor_station = cfg
        .ego_origin_aligned
        .then(|| local.closest_arclength(&Waypoint::ORIGIN).0);
    for _ in 0..MAX_WIDENING_ROUNDS {
        let anchor = match anchor_station {
            Some(s) => {
                let a = s.rem_euclid(interval);
                if a < interval {
                    a
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        let sampled = lattice_sample(&local, interval, anchor)?;
        if sampled.len() <= cap {
            return Ok(sampled);
        }
        interval *= 1.25;
    }
    evenly_spaced(&local, cap)
}

fn endpoint_key(points: &[Waypoint]) -> f64 {
    let first = points[0].norm();
    let last = points[points.len() - 1].norm();
    first.min(last)
}

fn order_indices(keys: &[f64], cfg: &RoadgraphCodecConfig, seed: u64, training: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| {
        cfg.bin_of(keys[a])
            .cmp(&cfg.bin_of(keys[b]))
            .then(keys[a].partial_cmp(&keys[b]).unwrap_or(Ordering::Equal))
    });
    if training && cfg.shuffle_within_bins {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = 0;
        while start < idx.len() {
            let bin = cfg.bin_of(keys[idx[start]]);
            let mut end = start;
            while end < idx.len() && cfg.bin_of(keys[idx[end]]) == bin {
                end += 1;
            }
            idx[start..end].shuffle(&mut rng);
            start = end;
        }
    }
    idx
}

/// Orders lanes by bins of endpoint distance to the ego; within a bin lanes
/// are sorted by distance (evaluation) or shuffled by `rng_seed` (training).
/// Returns the input polylines, unchanged, in the new order.
pub fn order_and_shuffle_polylines(
    rg: &RoadGraph,
    ego: &Pose2D,
    cfg: &RoadgraphCodecConfig,
    rng_seed: u64,
    training_mode: bool,
) -> Result<Vec<Polyline>> {
    cfg.validate()?;
    let keys = rg
        .polylines
        .iter()
        .map(|p| {
            let ends = transform_to_ego(&[p.first(), p.last()], ego)?;
            Ok(endpoint_key(&ends))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(order_indices(&keys, cfg, rng_seed, training_mode)
        .into_iter()
        .map(|i| rg.polylines[i].clone())
        .collect())
}

/// Sampled, ego-frame, ordered lanes ready to render.
pub fn prepare_roadgraph(
    rg: &RoadGraph,
    ego: &Pose2D,
    cfg: &RoadgraphCodecConfig,
    rng_seed: u64,
    training_mode: bool,
) -> Result<Vec<Polyline>> {
    cfg.validate()?;
    let mut sampled = rg
        .polylines
        .iter()
        .map(|p| dynamic_sample_polyline(p, ego, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut keys: Vec<f64> = sampled.iter().map(|p| endpoint_key(p.points())).collect();

    if sampled.len() > cfg.max_polylines {
        let dropped = sampled.len() - cfg.max_polylines;
        if cfg.strict_truncation {
            return Err(Error::Truncation { dropped });
        }
        let mut nearest: Vec<usize> = (0..sampled.len()).collect();
        nearest.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(Ordering::Equal));
        nearest.truncate(cfg.max_polylines);
        nearest.sort_unstable();
        sampled = nearest.iter().map(|&i| sampled[i].clone()).collect();
        keys = nearest.iter().map(|&i| keys[i]).collect();
    }

    Ok(order_indices(&keys, cfg, rng_seed, training_mode)
        .into_iter()
        .map(|i| sampled[i].clone())
        .collect())
}

fn render_clause(points: &[Waypoint], slots: usize, valid: bool) -> Result<String> {
    let mut items = points
        .iter()
        .map(|p| Ok(format!("{},{}", format_fixed2(p.x)?, format_fixed2(p.y)?)))
        .collect::<Result<Vec<_>>>()?;
    items.resize(slots, INVALID_TOKEN.to_string());
    let validity = if valid { VALID_TOKEN } else { INVALID_TOKEN };
    Ok(format!("({}) {};", items.join(" and "), validity))
}

/// Renders already prepared lanes, padding points and clauses to the fixed shape.
pub fn render_roadgraph(polylines: &[Polyline], cfg: &RoadgraphCodecConfig) -> Result<String> {
    cfg.validate()?;
    if polylines.len() > cfg.max_polylines {
        return Err(Error::Truncation {
            dropped: polylines.len() - cfg.max_polylines,
        });
    }
    let slots = cfg.max_points_per_polyline;
    if let Some(p) = polylines.iter().find(|p| p.len() > slots) {
        return Err(Error::Encode(format!(
            "polyline has {} points, more than the {slots} slots",
            p.len()
        )));
    }
    let mut clauses = polylines
        .iter()
        .map(|p| render_clause(p.points(), slots, true))
        .collect::<Result<Vec<_>>>()?;
    let pad = render_clause(&[], slots, false)?;
    clauses.resize(cfg.max_polylines, pad);
    Ok(clauses.join(" "))
}

/// Full roadgraph target: [`prepare_roadgraph`] followed by [`render_roadgraph`].
pub fn encode_roadgraph(
    rg: &RoadGraph,
    ego: &Pose2D,
    cfg: &RoadgraphCodecConfig,
    rng_seed: u64,
    training_mode: bool,
) -> Result<String> {
    let prepared = prepare_roadgraph(rg, ego, cfg, rng_seed, training_mode)?;
    render_roadgraph(&prepared, cfg)
}

fn parse_point_item(index: usize, item: &str) -> Result<Option<Waypoint>> {
    if item == INVALID_TOKEN {
        return Ok(None);
    }
    let (x, y) = item
        .split_once(',')
        .ok_or_else(|| Error::parse_item(index, format!("point item `{item}` is not `x,y`")))?;
    match (parse_number(x), parse_number(y)) {
        (Some(x), Some(y)) => Ok(Some(Waypoint::new(x, y))),
        _ => Err(Error::parse_item(index, format!("point item `{item}` is not `x,y`"))),
    }
}

/// Inverse of [`encode_roadgraph`]: drops padded clauses and padded slots,
/// keeping clause order as written.
pub fn decode_roadgraph(s: &str) -> Result<RoadGraph> {
    let mut cur = Cursor::new(s);
    let mut polylines = Vec::new();
    let mut index = 0;
    loop {
        cur.skip_ws();
        if cur.at_end() {
            break;
        }
        cur.expect(b'(')?;
        let (body_at, body) = cur.take_until(b")");
        if cur.at_end() {
            return Err(Error::parse(body_at, "unterminated `(`"));
        }
        cur.expect(b')')?;

        // Point items are separated by the word `and`; whitespace inside an
        // item (`x, y`) is tolerated.
        let mut items: Vec<String> = vec![String::new()];
        for tok in body.split_whitespace() {
            if tok == "and" {
                items.push(String::new());
            } else {
                items.last_mut().expect("nonempty").push_str(tok);
            }
        }
        if items.iter().any(String::is_empty) {
            return Err(Error::parse_item(index, "empty point item"));
        }
        let mut points: Vec<Waypoint> = Vec::with_capacity(items.len());
        for item in &items {
            if let Some(p) = parse_point_item(index, item)? {
                if points.last() != Some(&p) {
                    points.push(p);
                }
            }
        }

        cur.skip_ws();
        let (_, validity) = cur.take_until(b"; \t\r\n");
        let valid = match validity {
            VALID_TOKEN => true,
            INVALID_TOKEN => false,
            "" => return Err(Error::parse_item(index, "missing validity token")),
            other => {
                return Err(Error::parse_item(
                    index,
                    format!("validity must be `valid` or `invalid`, found `{other}`"),
                ))
            }
        };
        cur.skip_ws();
        if cur.expect(b';').is_err() {
            return Err(Error::parse_item(index, "missing `;` after validity token"));
        }
        if valid {
            let p = Polyline::new(points).map_err(|e| match e {
                Error::DegeneratePolyline(m) => {
                    Error::DegeneratePolyline(format!("polyline {index}: {m}"))
                }
                other => other,
            })?;
            polylines.push(p);
        }
        index += 1;
    }
    Ok(RoadGraph { polylines })
}
