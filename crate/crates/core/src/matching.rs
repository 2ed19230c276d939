//! One-to-one matching of predictions to ground truth.
//!
//! `Optimal` maximizes the number of matched pairs and, among maximum
//! matchings, minimizes the summed cost (Hungarian algorithm on a padded
//! square matrix). `Greedy` takes allowed pairs in ascending cost order; it
//! is kept for comparison because it can miss pairs when a cheap match
//! blocks two others.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStrategy {
    #[default]
    Optimal,
    Greedy,
}

/// Cost matrix with `None` for forbidden pairs; rows are predictions.
pub type CostMatrix = Vec<Vec<Option<f64>>>;

pub fn assign(costs: &CostMatrix, strategy: MatchStrategy) -> Vec<(usize, usize)> {
    match strategy {
        MatchStrategy::Optimal => optimal_assignment(costs),
        MatchStrategy::Greedy => greedy_assignment(costs),
    }
}

pub fn greedy_assignment(costs: &CostMatrix) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = costs
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().filter_map(move |(c, v)| v.map(|v| (v, r, c))))
        .collect();
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let cols = costs.first().map_or(0, Vec::len);
    let mut row_used = vec![false; costs.len()];
    let mut col_used = vec![false; cols];
    let mut out = Vec::new();
    for (_, r, c) in pairs {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            out.push((r, c));
        }
    }
    out.sort_unstable();
    out
}

pub fn optimal_assignment(costs: &CostMatrix) -> Vec<(usize, usize)> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let max_cost = costs
        .iter()
        .flatten()
        .flatten()
        .fold(0.0_f64, |m, &v| m.max(v.abs()));
    // Any matching with one more real pair beats every cost difference.
    let forbidden = 1.0 + (n as f64 + 1.0) * (max_cost + 1.0);
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            costs[r][c].unwrap_or(forbidden)
        } else {
            forbidden
        }
    };

    // Shortest augmenting path Hungarian, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let (r, c) = (p[j] - 1, j - 1);
            (r < rows && c < cols && costs[r][c].is_some()).then_some((r, c))
        })
        .collect();
    out.sort_unstable();
    out
}
