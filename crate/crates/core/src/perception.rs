//! Roadgraph and detection quality at a single operating point.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::{Box3D, RoadGraph};
use crate::error::{Error, Result};
use crate::geometry::{arc_length_resample, Polyline, Waypoint};
use crate::matching::{assign, CostMatrix, MatchStrategy};

/// Spacing used to densify polylines before computing Chamfer distance.
pub const CHAMFER_SPACING: f64 = 0.5;
pub const DEFAULT_LANE_THRESHOLD: f64 = 1.0;
pub const DEFAULT_RASTER_RESOLUTION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PRReport {
    /// Precision and recall are 1 when there is nothing to predict and
    /// nothing was predicted; an empty side next to a nonempty one scores 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                if tp + fp + fn_ == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    /// Pools counts across scenes, then re-derives the ratios.
    pub fn merge(reports: &[PRReport]) -> PRReport {
        let (tp, fp, fn_) = reports
            .iter()
            .fold((0, 0, 0), |acc, r| (acc.0 + r.tp, acc.1 + r.fp, acc.2 + r.fn_));
        PRReport::from_counts(tp, fp, fn_)
    }
}

fn densify(p: &Polyline) -> Result<Vec<Waypoint>> {
    Ok(arc_length_resample(p, CHAMFER_SPACING, 0.0)?.points().to_vec())
}

fn mean_nearest(from: &[Waypoint], to: &[Waypoint]) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| to.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min))
        .sum();
    sum / from.len() as f64
}

/// Symmetric Chamfer distance between two lanes after densifying both at
/// [`CHAMFER_SPACING`].
pub fn chamfer(a: &Polyline, b: &Polyline) -> Result<f64> {
    let pa = densify(a)?;
    let pb = densify(b)?;
    Ok(0.5 * (mean_nearest(&pa, &pb) + mean_nearest(&pb, &pa)))
}

pub fn lane_pr(preds: &RoadGraph, gts: &RoadGraph, threshold: f64) -> Result<PRReport> {
    lane_pr_with(preds, gts, threshold, MatchStrategy::default())
}

/// Lane-level precision/recall: a pair matches when its Chamfer distance is
/// within `threshold`.
pub fn lane_pr_with(
    preds: &RoadGraph,
    gts: &RoadGraph,
    threshold: f64,
    strategy: MatchStrategy,
) -> Result<PRReport> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::Config(format!("lane threshold must be > 0, got {threshold}")));
    }
    let costs = lane_costs(preds, gts, threshold)?;
    let tp = assign(&costs, strategy).len();
    Ok(PRReport::from_counts(tp, preds.len() - tp, gts.len() - tp))
}

/// Chamfer costs with pairs above `threshold` forbidden.
pub fn lane_costs(preds: &RoadGraph, gts: &RoadGraph, threshold: f64) -> Result<CostMatrix> {
    let pd: Vec<Vec<Waypoint>> = preds.polylines.iter().map(densify).collect::<Result<_>>()?;
    let gd: Vec<Vec<Waypoint>> = gts.polylines.iter().map(densify).collect::<Result<_>>()?;
    Ok(pd
        .iter()
        .map(|p| {
            gd.iter()
                .map(|g| {
                    let d = 0.5 * (mean_nearest(p, g) + mean_nearest(g, p));
                    (d <= threshold).then_some(d)
                })
                .collect()
        })
        .collect())
}

/// Axis-aligned BEV region, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Roi {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let roi = Self {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        roi.validate()?;
        Ok(roi)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.min_x, self.min_y, self.max_x, self.max_y];
        if all.iter().any(|v| !v.is_finite()) || !(self.max_x > self.min_x && self.max_y > self.min_y) {
            return Err(Error::Config(format!("empty or invalid roi {self:?}")));
        }
        Ok(())
    }
}

impl Default for Roi {
    fn default() -> Self {
        Self {
            min_x: -50.0,
            min_y: -50.0,
            max_x: 50.0,
            max_y: 50.0,
        }
    }
}

pub type Cell = (i64, i64);

/// Cells whose half-open square `[i, i+1) x [j, j+1)` (grid units) the
/// segment touches. Walks crossings in parameter order; a crossing toward
/// +x/+y enters the next cell on the grid line itself, toward -x/-y only
/// strictly after it.
fn supercover(a: (f64, f64), b: (f64, f64), out: &mut impl FnMut(Cell)) {
    let mut i = a.0.floor() as i64;
    let mut j = a.1.floor() as i64;
    out((i, j));
    let (du, dv) = (b.0 - a.0, b.1 - a.1);
    let axis = |d: f64, start: f64, cell: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((cell + 1) as f64 - start) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (cell as f64 - start) / d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_x, dt_x) = axis(du, a.0, i);
    let (step_y, mut t_y, dt_y) = axis(dv, a.1, j);
    loop {
        let t = t_x.min(t_y);
        if t > 1.0 {
            break;
        }
        let cross_x = t_x == t;
        let cross_y = t_y == t;
        let mut moved = false;
        if cross_x && step_x > 0 {
            i += 1;
            t_x += dt_x;
            moved = true;
        }
        if cross_y && step_y > 0 {
            j += 1;
            t_y += dt_y;
            moved = true;
        }
        if moved {
            out((i, j));
        }
        let neg_x = cross_x && step_x < 0;
        let neg_y = cross_y && step_y < 0;
        if neg_x || neg_y {
            if t >= 1.0 {
                break;
            }
            if neg_x {
                i -= 1;
                t_x += dt_x;
            }
            if neg_y {
                j -= 1;
                t_y += dt_y;
            }
            out((i, j));
        }
    }
}

/// Occupied cells of a roadgraph drawn as 1-cell-wide centerlines.
pub fn raster_cells(rg: &RoadGraph, roi: &Roi, resolution: f64) -> Result<BTreeSet<Cell>> {
    roi.validate()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::Config(format!("resolution must be > 0, got {resolution}")));
    }
    let nx = ((roi.max_x - roi.min_x) / resolution).ceil() as i64;
    let ny = ((roi.max_y - roi.min_y) / resolution).ceil() as i64;
    // frame round-off must not push a point sitting on a grid line into the neighbour row
    let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
    let to_grid = |p: &Waypoint| (snap((p.x - roi.min_x) / resolution), snap((p.y - roi.min_y) / resolution));
    let mut cells = BTreeSet::new();
    let mut push = |c: Cell| {
        if (0..nx).contains(&c.0) && (0..ny).contains(&c.1) {
            cells.insert(c);
        }
    };
    for p in &rg.polylines {
        for w in p.points().windows(2) {
            supercover(to_grid(&w[0]), to_grid(&w[1]), &mut push);
        }
    }
    Ok(cells)
}

pub fn raster_pr_cells(pred: &BTreeSet<Cell>, gt: &BTreeSet<Cell>) -> PRReport {
    let tp = pred.intersection(gt).count();
    PRReport::from_counts(tp, pred.len() - tp, gt.len() - tp)
}

/// Pixel-level precision/recall over occupied BEV cells inside `roi`.
pub fn raster_pr(preds: &RoadGraph, gts: &RoadGraph, roi: &Roi, resolution: f64) -> Result<PRReport> {
    let p = raster_cells(preds, roi, resolution)?;
    let g = raster_cells(gts, roi, resolution)?;
    Ok(raster_pr_cells(&p, &g))
}

/// Simplified longitudinal-error-tolerant matching thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LetConfig {
    /// Allowed line-of-sight error as a fraction of the ground-truth range.
    pub longitudinal_tolerance_pct: f64,
    pub min_longitudinal_tolerance: f64,
    pub lateral_tolerance: f64,
}

impl Default for LetConfig {
    fn default() -> Self {
        Self {
            longitudinal_tolerance_pct: 0.10,
            min_longitudinal_tolerance: 0.5,
            lateral_tolerance: 1.0,
        }
    }
}

impl LetConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.longitudinal_tolerance_pct,
            self.min_longitudinal_tolerance,
            self.lateral_tolerance,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("LET tolerances must be > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Splits the center error of `pred` into the component along the sensor
/// line of sight to `gt` and the perpendicular remainder.
pub fn let_errors(pred: &Box3D, gt: &Box3D) -> (f64, f64) {
    let e = [pred.x - gt.x, pred.y - gt.y, pred.z - gt.z];
    let range = (gt.x * gt.x + gt.y * gt.y + gt.z * gt.z).sqrt();
    let norm_e = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    if range == 0.0 {
        return (0.0, norm_e);
    }
    let u = [gt.x / range, gt.y / range, gt.z / range];
    let along = e[0] * u[0] + e[1] * u[1] + e[2] * u[2];
    let perp = [e[0] - along * u[0], e[1] - along * u[1], e[2] - along * u[2]];
    (along, (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt())
}

pub fn let_candidate(pred: &Box3D, gt: &Box3D, cfg: &LetConfig) -> bool {
    if pred.cls != gt.cls {
        return false;
    }
    let range = (gt.x * gt.x + gt.y * gt.y + gt.z * gt.z).sqrt();
    let (along, perp) = let_errors(pred, gt);
    let tol = (cfg.longitudinal_tolerance_pct * range).max(cfg.min_longitudinal_tolerance);
    along.abs() <= tol && perp <= cfg.lateral_tolerance
}

/// Allowed detection pairs with their center distance as cost.
pub fn detection_costs(preds: &[Box3D], gts: &[Box3D], cfg: &LetConfig) -> CostMatrix {
    preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    let_candidate(p, g, cfg).then(|| {
                        ((p.x - g.x).powi(2) + (p.y - g.y).powi(2) + (p.z - g.z).powi(2)).sqrt()
                    })
                })
                .collect()
        })
        .collect()
}

pub fn detection_pr(preds: &[Box3D], gts: &[Box3D], cfg: &LetConfig) -> Result<PRReport> {
    detection_pr_with(preds, gts, cfg, MatchStrategy::default())
}

pub fn detection_pr_with(
    preds: &[Box3D],
    gts: &[Box3D],
    cfg: &LetConfig,
    strategy: MatchStrategy,
) -> Result<PRReport> {
    cfg.validate()?;
    let tp = assign(&detection_costs(preds, gts, cfg), strategy).len();
    Ok(PRReport::from_counts(tp, preds.len() - tp, gts.len() - tp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::BoxClass;

    fn wp(x: f64, y: f64) -> Waypoint {
        Waypoint::new(x, y)
    }

    fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> Polyline {
        Polyline::new(vec![wp(x0, y0), wp(x1, y1)]).unwrap()
    }

    fn bx(x: f64, y: f64, cls: BoxClass) -> Box3D {
        Box3D {
            x,
            y,
            z: 0.0,
            l: 4.0,
            w: 2.0,
            h: 1.5,
            theta: 0.0,
            cls,
        }
    }

    #[test]
    fn report_conventions() {
        let r = PRReport::from_counts(0, 0, 0);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = PRReport::from_counts(0, 3, 0);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = PRReport::from_counts(0, 0, 2);
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
        let r = PRReport::from_counts(3, 1, 2);
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.recall, 0.6);
        assert!((r.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        let merged = PRReport::merge(&[PRReport::from_counts(1, 0, 0), PRReport::from_counts(0, 1, 1)]);
        assert_eq!((merged.tp, merged.fp, merged.fn_), (1, 1, 1));
    }

    #[test]
    fn chamfer_identities() {
        let a = Polyline::new(vec![wp(0.0, 0.0), wp(3.0, 1.0), wp(7.0, -2.0)]).unwrap();
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let b = line(0.0, 0.7, 10.0, 0.7);
        let c = line(0.0, 0.0, 10.0, 0.0);
        assert!((chamfer(&b, &c).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn chamfer_matches_hand_brute_force() {
        // a: 0..1 on x (stations 0, 0.5, 1); b: single segment at x = 3 from y=0..0.5
        let a = line(0.0, 0.0, 1.0, 0.0);
        let b = line(3.0, 0.0, 3.0, 0.5);
        let a_pts = [wp(0.0, 0.0), wp(0.5, 0.0), wp(1.0, 0.0)];
        let b_pts = [wp(3.0, 0.0), wp(3.0, 0.5)];
        let ab: f64 = a_pts
            .iter()
            .map(|p| b_pts.iter().map(|q| p.distance(q)).fold(f64::MAX, f64::min))
            .sum::<f64>()
            / 3.0;
        let ba: f64 = b_pts
            .iter()
            .map(|p| a_pts.iter().map(|q| p.distance(q)).fold(f64::MAX, f64::min))
            .sum::<f64>()
            / 2.0;
        assert!((chamfer(&a, &b).unwrap() - 0.5 * (ab + ba)).abs() < 1e-12);
    }

    #[test]
    fn lane_pr_basic() {
        let g = RoadGraph::new(vec![line(0.0, 0.0, 10.0, 0.0)]);
        let r = lane_pr(&g, &g, 1.0).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let p = RoadGraph::new(vec![line(0.0, 2.0, 10.0, 2.0)]);
        let r = lane_pr(&p, &g, 1.0).unwrap();
        assert_eq!((r.precision, r.recall, r.tp), (0.0, 0.0, 0));
        assert!(lane_pr(&p, &g, 0.0).is_err());
    }

    #[test]
    fn raster_ignores_roundoff_at_grid_lines() {
        let roi = Roi::default();
        let exact = RoadGraph::new(vec![Polyline::new(vec![Waypoint::new(0.0, 0.0), Waypoint::new(10.0, 0.0)]).unwrap()]);
        let noisy =
            RoadGraph::new(vec![Polyline::new(vec![Waypoint::new(1e-14, -1e-14), Waypoint::new(10.0, -2e-14)]).unwrap()]);
        assert_eq!(raster_cells(&exact, &roi, 1.0).unwrap(), raster_cells(&noisy, &roi, 1.0).unwrap());
    }

    #[test]
    fn raster_basics() {
        let roi = Roi::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let dot = RoadGraph::new(vec![line(0.4, 0.4, 0.45, 0.45)]);
        let cells = raster_cells(&dot, &roi, 1.0).unwrap();
        assert_eq!(cells.into_iter().collect::<Vec<_>>(), vec![(0, 0)]);

        let p: BTreeSet<Cell> = [(0, 0), (1, 0)].into();
        let g: BTreeSet<Cell> = [(1, 0), (2, 0)].into();
        let r = raster_pr_cells(&p, &g);
        assert_eq!((r.precision, r.recall), (0.5, 0.5));

        let lanes = RoadGraph::new(vec![line(0.5, 0.5, 8.5, 3.2)]);
        let r = raster_pr(&lanes, &lanes, &roi, 1.0).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }

    #[test]
    fn supercover_walks() {
        let roi = Roi::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let cells = |a: (f64, f64), b: (f64, f64)| {
            raster_cells(&RoadGraph::new(vec![line(a.0, a.1, b.0, b.1)]), &roi, 1.0)
                .unwrap()
                .into_iter()
                .collect::<Vec<_>>()
        };
        assert_eq!(cells((0.5, 0.5), (2.5, 0.5)), vec![(0, 0), (1, 0), (2, 0)]);
        // diagonal through a corner touches only the two diagonal cells
        assert_eq!(cells((0.5, 0.5), (1.5, 1.5)), vec![(0, 0), (1, 1)]);
        // ends exactly on a grid line: half-open cells include the next cell going up
        assert_eq!(cells((0.5, 0.5), (0.5, 2.0)), vec![(0, 0), (0, 1), (0, 2)]);
        // ... but not going down
        assert_eq!(cells((0.5, 2.5), (0.5, 1.0)), vec![(0, 1), (0, 2)]);
        // +x, -y through a corner
        assert_eq!(cells((0.5, 1.5), (1.5, 0.5)), vec![(0, 1), (1, 0), (1, 1)]);
        // outside the roi is ignored
        assert_eq!(cells((-3.5, 0.5), (0.5, 0.5)), vec![(0, 0)]);
    }

    #[test]
    fn let_matching_examples() {
        let cfg = LetConfig::default();
        let g = bx(20.0, 0.0, BoxClass::Vehicle);
        let p = bx(21.5, 0.0, BoxClass::Vehicle);
        assert!(let_candidate(&p, &g, &cfg));
        let far = bx(22.5, 0.0, BoxClass::Vehicle);
        assert!(!let_candidate(&far, &g, &cfg));
        let lateral = bx(20.0, 1.2, BoxClass::Vehicle);
        assert!(!let_candidate(&lateral, &g, &cfg));
        let r = detection_pr(&[p], &[g], &cfg).unwrap();
        assert_eq!(r.f1, 1.0);

        let wrong = bx(20.0, 0.0, BoxClass::Pedestrian);
        let r = detection_pr(&[wrong], &[g], &cfg).unwrap();
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
    }

    #[test]
    fn let_near_range_uses_floor() {
        let cfg = LetConfig::default();
        let g = bx(2.0, 0.0, BoxClass::Cyclist);
        assert!(let_candidate(&bx(2.45, 0.0, BoxClass::Cyclist), &g, &cfg));
        assert!(!let_candidate(&bx(2.55, 0.0, BoxClass::Cyclist), &g, &cfg));
        let origin = bx(0.0, 0.0, BoxClass::Cyclist);
        assert!(let_candidate(&bx(0.0, 0.9, BoxClass::Cyclist), &origin, &cfg));
    }
}
