//! Multi-task training mixture: each task is drawn with probability
//! proportional to its dataset size.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub sizes: Vec<u64>,
    pub epochs: f64,
    pub total_iterations: u64,
    pub probabilities: Vec<f64>,
}

pub fn plan(sizes: &[u64], epochs: f64) -> Result<MixturePlan> {
    if sizes.is_empty() {
        return Err(Error::EmptyMixture);
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Config(format!("dataset {i} has size 0")));
    }
    if !(epochs.is_finite() && epochs > 0.0) {
        return Err(Error::Config(format!("epochs must be positive, got {epochs}")));
    }
    let total: u64 = sizes.iter().sum();
    let probabilities = sizes.iter().map(|&s| s as f64 / total as f64).collect();
    Ok(MixturePlan {
        sizes: sizes.to_vec(),
        epochs,
        // half-up rounding
        total_iterations: (epochs * total as f64 + 0.5).floor() as u64,
        probabilities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Independent draws with replacement.
    #[default]
    Iid,
    /// Every example appears once per epoch, order shuffled. The stream
    /// is cut at `total_iterations`.
    EpochShuffled,
}

/// Deterministic `(task_index, example_index)` stream of length
/// `plan.total_iterations`.
pub struct MixtureStream {
    plan: MixturePlan,
    mode: SamplingMode,
    rng: ChaCha8Rng,
    weights: WeightedIndex<u64>,
    emitted: u64,
    epoch_buf: Vec<(usize, u64)>,
}

impl MixtureStream {
    fn refill(&mut self) {
        self.epoch_buf = self
            .plan
            .sizes
            .iter()
            .enumerate()
            .flat_map(|(t, &n)| (0..n).map(move |e| (t, e)))
            .collect();
        self.epoch_buf.shuffle(&mut self.rng);
        // pop() takes from the back
        self.epoch_buf.reverse();
    }
}

impl Iterator for MixtureStream {
    type Item = (usize, u64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.emitted >= self.plan.total_iterations {
            return None;
        }
        self.emitted += 1;
        match self.mode {
            SamplingMode::Iid => {
                let t = self.weights.sample(&mut self.rng);
                let e = self.rng.random_range(0..self.plan.sizes[t]);
                Some((t, e))
            }
            SamplingMode::EpochShuffled => {
                if self.epoch_buf.is_empty() {
                    self.refill();
                }
                self.epoch_buf.pop()
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.plan.total_iterations - self.emitted) as usize;
        (left, Some(left))
    }
}

pub fn sample_stream(plan: &MixturePlan, seed: u64) -> Result<MixtureStream> {
    sample_stream_with(plan, seed, SamplingMode::Iid)
}

pub fn sample_stream_with(plan: &MixturePlan, seed: u64, mode: SamplingMode) -> Result<MixtureStream> {
    if plan.sizes.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let weights = WeightedIndex::new(&plan.sizes).map_err(|e| Error::Config(e.to_string()))?;
    Ok(MixtureStream {
        plan: plan.clone(),
        mode,
        rng: ChaCha8Rng::seed_from_u64(seed),
        weights,
        emitted: 0,
        epoch_buf: Vec::new(),
    })
}

/// Per-task share of a stream prefix. An empty prefix gives all zeros.
pub fn empirical_ratios(draws: &[(usize, u64)], n_tasks: usize) -> Vec<f64> {
    let mut counts = vec![0u64; n_tasks];
    for &(t, _) in draws {
        counts[t] += 1;
    }
    if draws.is_empty() {
        return vec![0.0; n_tasks];
    }
    counts.iter().map(|&c| c as f64 / draws.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        let p = plan(&[30, 70], 2.0).unwrap();
        assert_eq!(p.total_iterations, 200);
        assert!((p.probabilities[0] - 0.3).abs() < 1e-15);
        assert!((p.probabilities[1] - 0.7).abs() < 1e-15);
        assert_eq!(plan(&[5], 1.0).unwrap().probabilities, vec![1.0]);
        let third = plan(&[1, 1, 1], 1.0).unwrap();
        assert_eq!(third.total_iterations, 3);
        assert!(third.probabilities.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn plan_rounds_half_up() {
        assert_eq!(plan(&[1], 2.5).unwrap().total_iterations, 3);
        assert_eq!(plan(&[3], 0.5).unwrap().total_iterations, 2);
        assert_eq!(plan(&[10], 0.04).unwrap().total_iterations, 0);
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(plan(&[], 1.0), Err(Error::EmptyMixture)));
        assert!(matches!(plan(&[1, 0], 1.0), Err(Error::Config(_))));
        assert!(matches!(plan(&[1], 0.0), Err(Error::Config(_))));
        assert!(matches!(plan(&[1], f64::NAN), Err(Error::Config(_))));
    }

    #[test]
    fn single_example_stream() {
        let p = plan(&[1], 50.0).unwrap();
        let draws: Vec<_> = sample_stream(&p, 9).unwrap().collect();
        assert_eq!(draws.len(), 50);
        assert!(draws.iter().all(|&d| d == (0, 0)));
    }

    #[test]
    fn stream_is_reproducible() {
        let p = plan(&[3, 7, 11], 10.0).unwrap();
        let a: Vec<_> = sample_stream(&p, 5).unwrap().collect();
        let b: Vec<_> = sample_stream(&p, 5).unwrap().collect();
        assert_eq!(a, b);
        let c: Vec<_> = sample_stream(&p, 6).unwrap().collect();
        assert_ne!(a, c);
        assert!(a.iter().all(|&(t, e)| e < p.sizes[t]));
    }

    #[test]
    fn equal_tasks_balance() {
        let p = plan(&[50_000, 50_000], 1.0).unwrap();
        let draws: Vec<_> = sample_stream(&p, 1).unwrap().collect();
        let r = empirical_ratios(&draws, 2);
        assert!((r[0] - 0.5).abs() <= 0.02, "{r:?}");
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epoch_shuffled_covers_each_example_once() {
        let p = plan(&[3, 4], 2.0).unwrap();
        let draws: Vec<_> = sample_stream_with(&p, 2, SamplingMode::EpochShuffled).unwrap().collect();
        assert_eq!(draws.len(), 14);
        for epoch in draws.chunks(7) {
            let mut e = epoch.to_vec();
            e.sort_unstable();
            assert_eq!(e, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (1, 3)]);
        }
    }

    #[test]
    fn ratio_indicator() {
        assert_eq!(empirical_ratios(&[(1, 0)], 3), vec![0.0, 1.0, 0.0]);
    }
}
