//! Open-loop planning metrics.
//!
//! Future trajectories start one step ahead: point `i` is at `(i + 1) * dt`.
//! The current pose (t = 0) is never scored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Trajectory;

const GRID_TOL: f64 = 1e-6;

/// Horizon presets (seconds) for the two evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonPreset {
    Womd,
    Nuscenes,
}

impl HorizonPreset {
    pub fn ade_horizons(&self) -> Vec<f64> {
        match self {
            HorizonPreset::Womd => vec![1.0, 3.0, 5.0, 8.0],
            HorizonPreset::Nuscenes => vec![1.0, 2.0, 3.0],
        }
    }

    pub fn l2_horizons(&self) -> Vec<f64> {
        self.ade_horizons()
    }
}

/// Number of future steps with time <= `horizon`.
fn steps_within(dt: f64, horizon: f64) -> usize {
    (horizon / dt + GRID_TOL).floor().max(0.0) as usize
}

/// Mean displacement over every future timestamp up to `horizon`.
pub fn ade(pred: &Trajectory, gt: &Trajectory, horizon: f64) -> Result<f64> {
    pred.check_compatible(gt)?;
    let n = steps_within(gt.dt(), horizon);
    if n == 0 || n > pred.len() || n > gt.len() {
        return Err(Error::Horizon {
            horizon,
            message: format!(
                "needs {n} steps of {}s, trajectories have {}",
                gt.dt(),
                gt.len().min(pred.len())
            ),
        });
    }
    let sum: f64 = pred.points()[..n]
        .iter()
        .zip(&gt.points()[..n])
        .map(|(p, q)| p.distance(q))
        .sum();
    Ok(sum / n as f64)
}

/// Displacement at exactly time `t`.
pub fn l2_at(pred: &Trajectory, gt: &Trajectory, t: f64) -> Result<f64> {
    pred.check_compatible(gt)?;
    let dt = gt.dt();
    let steps = t / dt;
    let k = steps.round();
    if k < 1.0 || (steps - k).abs() > GRID_TOL {
        return Err(Error::Grid { time: t, dt });
    }
    let k = k as usize;
    if k > gt.len() {
        return Err(Error::Horizon {
            horizon: t,
            message: format!("trajectory ends at {}s", gt.len() as f64 * dt),
        });
    }
    Ok(pred.points()[k - 1].distance(&gt.points()[k - 1]))
}

/// Format key for per-horizon maps: `"1s"`, `"2.5s"`.
pub fn horizon_key(h: f64) -> String {
    format!("{h}s")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningReport {
    /// Mean displacement over all timestamps up to the horizon.
    pub ade_at: BTreeMap<String, f64>,
    /// Instantaneous displacement at the horizon.
    pub l2_at: BTreeMap<String, f64>,
    /// Mean of the `l2_at` values.
    pub avg_l2: f64,
    /// Mean of `ade_at`-style cumulative averages over the L2 horizons.
    pub avg_l2_cumulative: f64,
    pub n_examples: usize,
}

impl PlanningReport {
    /// Aligned two-column table.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, f64)> = Vec::new();
        rows.extend(self.ade_at.iter().map(|(k, v)| (format!("ADE@{k}"), *v)));
        rows.extend(self.l2_at.iter().map(|(k, v)| (format!("L2@{k} (instant)"), *v)));
        rows.push(("Avg L2 (instant)".into(), self.avg_l2));
        rows.push(("Avg L2 (cumulative)".into(), self.avg_l2_cumulative));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = format!("{:<width$}  {:>10}\n", "metric", "meters");
        for (name, v) in rows {
            let _ = writeln!(out, "{name:<width$}  {v:>10.4}");
        }
        let _ = writeln!(out, "{:<width$}  {:>10}", "examples", self.n_examples);
        out
    }
}

/// Sort horizons and dedupe while keeping exact float keys.
fn horizon_list(hs: &[f64]) -> Vec<f64> {
    let mut out = hs.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite horizons"));
    out.dedup();
    out
}

/// Per-horizon means over all pairs. Pairs are reduced in the given order.
pub fn planning_report(
    pairs: &[(Trajectory, Trajectory)],
    ade_horizons: &[f64],
    l2_horizons: &[f64],
) -> Result<PlanningReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    if ade_horizons.iter().chain(l2_horizons).any(|h| !h.is_finite()) {
        return Err(Error::Config("horizons must be finite".into()));
    }
    let n = pairs.len() as f64;
    let ade_hs = horizon_list(ade_horizons);
    let l2_hs = horizon_list(l2_horizons);

    let mut ade_at = BTreeMap::new();
    for &h in &ade_hs {
        let mut sum = 0.0;
        for (p, g) in pairs {
            sum += ade(p, g, h)?;
        }
        ade_at.insert(horizon_key(h), sum / n);
    }
    let mut l2_map = BTreeMap::new();
    let mut inst = Vec::with_capacity(l2_hs.len());
    let mut cumulative = Vec::with_capacity(l2_hs.len());
    for &h in &l2_hs {
        let (mut s_inst, mut s_cum) = (0.0, 0.0);
        for (p, g) in pairs {
            s_inst += l2_at(p, g, h)?;
            s_cum += ade(p, g, h)?;
        }
        inst.push(s_inst / n);
        cumulative.push(s_cum / n);
        l2_map.insert(horizon_key(h), s_inst / n);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(PlanningReport {
        ade_at,
        l2_at: l2_map,
        avg_l2: mean(&inst),
        avg_l2_cumulative: mean(&cumulative),
        n_examples: pairs.len(),
    })
}
