//! Sample-efficiency metrics over per-environment reward series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("reward series is empty")]
    Empty,
    #[error("runs are not paired: {0}")]
    Unpaired(String),
}

/// Element `t` is the mean of `rewards[0..=t]`.
pub fn cumulative_average(rewards: &[f64]) -> Result<Vec<f64>, MetricError> {
    if rewards.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0.0;
    Ok(rewards
        .iter()
        .enumerate()
        .map(|(t, r)| {
            sum += r;
            sum / (t + 1) as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSeries {
    pub env_seed: u64,
    pub rewards: Vec<f64>,
}

/// Reward series of one run, with the settings that must match for pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub strategy: String,
    pub goal_seed: u64,
    pub series: Vec<EnvSeries>,
}

impl RewardTable {
    /// Per-environment cumulative averages, then their mean at each episode.
    pub fn mean_cumulative_average(&self) -> Result<Vec<f64>, MetricError> {
        mean_over_envs(self.series.iter().map(|s| cumulative_average(&s.rewards)))
    }

    fn check_pairing(&self, other: &RewardTable) -> Result<(), MetricError> {
        if self.goal_seed != other.goal_seed {
            return Err(MetricError::Unpaired(format!("goal seeds {} and {}", self.goal_seed, other.goal_seed)));
        }
        let seeds = |t: &RewardTable| t.series.iter().map(|s| s.env_seed).collect::<Vec<_>>();
        if seeds(self) != seeds(other) {
            return Err(MetricError::Unpaired(format!("env seeds {:?} and {:?}", seeds(self), seeds(other))));
        }
        for (a, b) in self.series.iter().zip(&other.series) {
            if a.rewards.len() != b.rewards.len() {
                return Err(MetricError::Unpaired(format!(
                    "env {} has {} and {} episodes",
                    a.env_seed,
                    a.rewards.len(),
                    b.rewards.len()
                )));
            }
        }
        Ok(())
    }
}

fn mean_over_envs(curves: impl Iterator<Item = Result<Vec<f64>, MetricError>>) -> Result<Vec<f64>, MetricError> {
    let curves = curves.collect::<Result<Vec<_>, _>>()?;
    let first = curves.first().ok_or(MetricError::Empty)?;
    let len = first.len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(MetricError::Unpaired("environments have different episode counts".into()));
    }
    Ok((0..len).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64).collect())
}

/// Cumulative-average gain of `method` over `baseline`, computed per
/// environment and then averaged across environments.
pub fn gain_over_baseline(method: &RewardTable, baseline: &RewardTable) -> Result<Vec<f64>, MetricError> {
    method.check_pairing(baseline)?;
    mean_over_envs(method.series.iter().zip(&baseline.series).map(|(m, b)| {
        let cm = cumulative_average(&m.rewards)?;
        let cb = cumulative_average(&b.rewards)?;
        Ok(cm.iter().zip(&cb).map(|(x, y)| x - y).collect())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(goal_seed: u64, series: &[&[f64]]) -> RewardTable {
        RewardTable {
            strategy: "x".into(),
            goal_seed,
            series: series
                .iter()
                .enumerate()
                .map(|(i, r)| EnvSeries { env_seed: i as u64, rewards: r.to_vec() })
                .collect(),
        }
    }

    #[test]
    fn formula_examples() {
        let c = cumulative_average(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(c[..2], [1.0, 0.5]);
        assert!((c[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cumulative_average(&[0.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(cumulative_average(&[]), Err(MetricError::Empty));
    }

    proptest! {
        #[test]
        fn matches_resummation(rewards in prop::collection::vec(prop::bool::ANY, 1..64)) {
            let r: Vec<f64> = rewards.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let c = cumulative_average(&r).unwrap();
            for tau in 0..r.len() {
                let direct = r[..=tau].iter().sum::<f64>() / (tau as f64 + 1.0);
                prop_assert!((c[tau] - direct).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gains() {
        let a = table(1, &[&[1.0, 0.0, 1.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(gain_over_baseline(&a, &a).unwrap(), vec![0.0; 3]);
        let ones = table(1, &[&[1.0; 4], &[1.0; 4]]);
        let zeros = table(1, &[&[0.0; 4], &[0.0; 4]]);
        assert_eq!(gain_over_baseline(&ones, &zeros).unwrap(), vec![1.0; 4]);

        // env 0: [1, .5, 2/3] - [0, 0, 0]; env 1: [0, 0, 1/3] - [1, 1, 1]
        let g = gain_over_baseline(&a, &table(1, &[&[0.0; 3], &[1.0; 3]])).unwrap();
        let expected = [(1.0 - 1.0) / 2.0, (0.5 - 1.0) / 2.0, (2.0 / 3.0 - 2.0 / 3.0) / 2.0];
        for (x, y) in g.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn unpaired_runs_are_rejected() {
        let a = table(1, &[&[1.0, 0.0]]);
        assert!(matches!(gain_over_baseline(&a, &table(2, &[&[1.0, 0.0]])), Err(MetricError::Unpaired(_))));
        assert!(matches!(gain_over_baseline(&a, &table(1, &[&[1.0]])), Err(MetricError::Unpaired(_))));
        assert!(matches!(
            gain_over_baseline(&a, &table(1, &[&[1.0, 0.0], &[0.0, 0.0]])),
            Err(MetricError::Unpaired(_))
        ));
    }
}
