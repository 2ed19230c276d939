//! Picking a final trajectory out of many sampled candidates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{trajectory_l2, Trajectory};
use crate::planning::ade;

/// Candidates sampled for one scenario; all share `dt` and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Trajectory>,
    #[serde(default)]
    pub source_seed: u64,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Trajectory>, source_seed: u64) -> Result<Self> {
        let cs = Self {
            candidates,
            source_seed,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .candidates
            .first()
            .ok_or_else(|| Error::InvalidK("candidate set is empty".into()))?;
        for c in &self.candidates[1..] {
            first.check_compatible(c)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    fn prefix(&self, k: usize) -> CandidateSet {
        CandidateSet {
            candidates: self.candidates[..k].to_vec(),
            source_seed: self.source_seed,
        }
    }
}

/// The candidate with the lowest mean L2 distance to all others.
/// Ties resolve to the lowest index.
pub fn median_trajectory(cs: &CandidateSet) -> Result<(usize, Trajectory)> {
    cs.validate()?;
    let n = cs.len();
    if n == 1 {
        return Ok((0, cs.candidates[0].clone()));
    }
    let mut sums = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = trajectory_l2(&cs.candidates[i], &cs.candidates[j])?;
            sums[i] += d;
            sums[j] += d;
        }
    }
    let mut best = 0;
    for i in 1..n {
        if sums[i] < sums[best] {
            best = i;
        }
    }
    Ok((best, cs.candidates[best].clone()))
}

/// One k-means cluster, represented by its member nearest the centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub index: usize,
    pub trajectory: Trajectory,
    pub count: usize,
    pub probability: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            weights
                .iter()
                .position(|w| {
                    acc += w;
                    acc > r
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
    }
    centers
}

fn mean_of(points: &[Vec<f64>], members: impl Iterator<Item = usize>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for i in members {
        let a = acc.get_or_insert_with(|| vec![0.0; points[i].len()]);
        for (s, v) in a.iter_mut().zip(&points[i]) {
            *s += v;
        }
        n += 1;
    }
    acc.map(|mut a| {
        a.iter_mut().for_each(|s| *s /= n as f64);
        a
    })
}

/// k-means over flattened waypoint vectors with k-means++ seeding.
///
/// An empty cluster is re-seeded once at the point farthest from its
/// centroid; if it empties again it is reported with count 0 and a
/// (duplicate) representative nearest its centroid. Output is sorted by
/// descending count, ties by cluster order.
pub fn kmeans_representatives(
    cs: &CandidateSet,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Vec<Representative>> {
    cs.validate()?;
    let n = cs.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK(format!("k = {k} with {n} candidates")));
    }
    let points: Vec<Vec<f64>> = cs.candidates.iter().map(Trajectory::flatten).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp_init(&points, k, &mut rng);
    let mut reseeded = vec![false; k];
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();

    for _ in 0..max_iters {
        for c in 0..k {
            match mean_of(&points, (0..n).filter(|&i| assignment[i] == c)) {
                Some(m) => centers[c] = m,
                None if !reseeded[c] => {
                    reseeded[c] = true;
                    let far = (0..n)
                        .map(|i| (i, sq_dist(&points[i], &centers[assignment[i]])))
                        .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
                    centers[c] = points[far.0].clone();
                }
                None => {}
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let mut reps: Vec<(usize, Representative)> = (0..k)
        .map(|c| {
            let count = assignment.iter().filter(|&&a| a == c).count();
            let center = mean_of(&points, (0..n).filter(|&i| assignment[i] == c))
                .unwrap_or_else(|| centers[c].clone());
            let pool: Vec<usize> = if count > 0 {
                (0..n).filter(|&i| assignment[i] == c).collect()
            } else {
                (0..n).collect()
            };
            let mut index = pool[0];
            for &i in &pool[1..] {
                if sq_dist(&points[i], &center) < sq_dist(&points[index], &center) {
                    index = i;
                }
            }
            (
                c,
                Representative {
                    index,
                    trajectory: cs.candidates[index].clone(),
                    count,
                    probability: count as f64 / n as f64,
                },
            )
        })
        .collect();
    reps.sort_by(|a, b| b.1.count.cmp(&a.1.count).then(a.0.cmp(&b.0)));
    Ok(reps.into_iter().map(|(_, r)| r).collect())
}

/// Per-scenario ADE of the median of the first `k` candidates, for every `k`.
pub fn sampling_ablation_detail(
    per_scenario_candidates: &[CandidateSet],
    gts: &[Trajectory],
    ks: &[usize],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    if per_scenario_candidates.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} candidate sets for {} ground truths",
            per_scenario_candidates.len(),
            gts.len()
        )));
    }
    if per_scenario_candidates.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    if ks.contains(&0) {
        return Err(Error::InvalidK("k must be >= 1".into()));
    }
    if let Some(short) = per_scenario_candidates.iter().find(|cs| cs.len() < max_k) {
        return Err(Error::InvalidK(format!(
            "k = {max_k} but a scenario has only {} candidates",
            short.len()
        )));
    }
    let mut out = BTreeMap::new();
    for &k in ks {
        let mut per = Vec::with_capacity(gts.len());
        for (cs, gt) in per_scenario_candidates.iter().zip(gts) {
            let (_, chosen) = median_trajectory(&cs.prefix(k))?;
            per.push(ade(&chosen, gt, gt.len() as f64 * gt.dt())?);
        }
        out.insert(k, per);
    }
    Ok(out)
}

/// Mean full-horizon ADE of the median trajectory as a function of `k`.
pub fn sampling_ablation(
    per_scenario_candidates: &[CandidateSet],
    gts: &[Trajectory],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    Ok(sampling_ablation_detail(per_scenario_candidates, gts, ks)?
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect())
}

/// Unicode sparkline of a curve, one glyph per point.
pub fn sparkline(values: &[f64]) -> String {
    const BARS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| {
            if hi > lo {
                BARS[(((v - lo) / (hi - lo)) * 7.0).round() as usize]
            } else {
                BARS[0]
            }
        })
        .collect()
}
