use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::par::{self, Execution};
use crate::{seed, Error, MetricDirection, Result};

use super::rank_methods;

/// Complete scores of a shared method list on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores {
    pub task: String,
    pub direction: MetricDirection,
    pub methods: Vec<String>,
    /// `scores[m][i]`.
    pub scores: Vec<Vec<f64>>,
}

impl TaskScores {
    fn family_size(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Score on a lower-is-better scale.
    fn signed(&self, method: usize, point: usize) -> f64 {
        match self.direction {
            MetricDirection::LowerBetter => self.scores[method][point],
            MetricDirection::HigherBetter => -self.scores[method][point],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CombinationPolicy {
    /// Every combination of one point per task.
    Exhaustive,
    /// `n` combinations drawn uniformly with replacement.
    Sampled { n: usize, seed: u64 },
}

/// Largest combination count enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTaskRankTable {
    pub methods: Vec<String>,
    /// `counts[m][r]`: combinations in which method `m` took rank `r` (0 = best).
    pub counts: Vec<Vec<u64>>,
    pub percentages: Vec<Vec<f64>>,
    pub combination_count: u64,
    pub policy: CombinationPolicy,
}

impl CrossTaskRankTable {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_string()];
        header.extend((1..=self.methods.len()).map(|r| format!("rank_{r}")));
        w.write_record(&header)?;
        for (m, name) in self.methods.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.percentages[m].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

const CHUNK: usize = 4096;

/// Ranks methods on every chosen combination of one point per task by the
/// mean of their direction-aligned scores, and tallies how often each method
/// lands at each rank. Ties fall back to method id order.
pub fn cross_task_ranks(
    tasks: &[TaskScores],
    policy: CombinationPolicy,
    exec: Execution,
) -> Result<CrossTaskRankTable> {
    let first = tasks
        .first()
        .ok_or_else(|| Error::InvalidConfig(vec!["cross-task ranking needs at least one task".into()]))?;
    let methods = first.methods.clone();
    let k = methods.len();
    let mut sizes = Vec::with_capacity(tasks.len());
    for t in tasks {
        if t.methods != methods {
            return Err(Error::MismatchedProfiles(format!(
                "task `{}` lists methods {:?}, expected {:?}",
                t.task, t.methods, methods
            )));
        }
        let m = t.family_size();
        for (j, row) in t.scores.iter().enumerate() {
            let missing: Vec<usize> = (0..row.len()).filter(|&i| !row[i].is_finite()).collect();
            if row.len() != m || !missing.is_empty() {
                return Err(Error::IncompleteScores {
                    method: format!("{}/{}", t.task, methods[j]),
                    missing,
                });
            }
        }
        if m == 0 {
            return Err(Error::SizeMismatch(format!("task `{}` has no points", t.task)));
        }
        sizes.push(m);
    }
    let total: u128 = sizes.iter().map(|&s| s as u128).product();
    let n = match policy {
        CombinationPolicy::Exhaustive if total > EXHAUSTIVE_LIMIT => {
            return Err(Error::InvalidPlan(format!(
                "{total} combinations exceed the exhaustive limit of {EXHAUSTIVE_LIMIT}; use sampling"
            )))
        }
        CombinationPolicy::Exhaustive => total as usize,
        CombinationPolicy::Sampled { n: 0, .. } => {
            return Err(Error::InvalidPlan("sampled cross-task ranking needs n >= 1".into()))
        }
        CombinationPolicy::Sampled { n, .. } => n,
    };

    let combination = |c: usize, buf: &mut Vec<usize>| {
        buf.clear();
        match policy {
            CombinationPolicy::Exhaustive => {
                let mut rest = c;
                for &s in sizes.iter().rev() {
                    buf.push(rest % s);
                    rest /= s;
                }
                buf.reverse();
            }
            CombinationPolicy::Sampled { seed: root, .. } => {
                let mut rng = seed::rng(seed::derive_indexed(root, "cross-task", c as u64));
                buf.extend(sizes.iter().map(|&s| rng.random_range(0..s)));
            }
        }
    };

    let chunks = n.div_ceil(CHUNK);
    let partial = par::map_range(exec, chunks, |ch| {
        let mut counts = vec![vec![0u64; k]; k];
        let mut points = Vec::with_capacity(tasks.len());
        let mut combined = vec![0.0; k];
        for c in ch * CHUNK..((ch + 1) * CHUNK).min(n) {
            combination(c, &mut points);
            for (m, v) in combined.iter_mut().enumerate() {
                *v = tasks.iter().zip(&points).map(|(t, &i)| t.signed(m, i)).sum::<f64>() / tasks.len() as f64;
            }
            for (r, m) in rank_methods(&methods, &combined, MetricDirection::LowerBetter)
                .into_iter()
                .enumerate()
            {
                counts[m][r] += 1;
            }
        }
        counts
    });
    let mut counts = vec![vec![0u64; k]; k];
    for p in partial {
        for (row, prow) in counts.iter_mut().zip(p) {
            for (c, x) in row.iter_mut().zip(prow) {
                *c += x;
            }
        }
    }
    let percentages = counts
        .iter()
        .map(|row| row.iter().map(|&c| 100.0 * c as f64 / n as f64).collect())
        .collect();
    Ok(CrossTaskRankTable {
        methods,
        counts,
        percentages,
        combination_count: n as u64,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn task(name: &str, direction: MetricDirection, scores: Vec<Vec<f64>>) -> TaskScores {
        TaskScores {
            task: name.into(),
            direction,
            methods: (0..scores.len()).map(|i| ["A", "B", "C", "D"][i].to_string()).collect(),
            scores,
        }
    }

    #[test]
    fn one_point_one_task() {
        let t = task("t", MetricDirection::LowerBetter, vec![vec![2.0], vec![1.0], vec![3.0]]);
        let r = cross_task_ranks(&[t], CombinationPolicy::Exhaustive, Execution::Sequential).unwrap();
        assert_eq!(
            r.percentages,
            vec![vec![0.0, 100.0, 0.0], vec![100.0, 0.0, 0.0], vec![0.0, 0.0, 100.0]]
        );
    }

    #[test]
    fn two_by_two_hand_oracle() {
        // Cost task: A = (1, 3), B = (2, 2). Reward task: A = (0.5, 2), B = (1, 1).
        // Combined (cost, -reward) / 2 per combination (i, j):
        //   (0,0): A = 0.25, B = 0.5  -> A first
        //   (0,1): A = -0.5, B = 0.5  -> A first
        //   (1,0): A = 1.25, B = 0.5  -> B first
        //   (1,1): A = 0.5,  B = 0.5  -> tie, A first by id
        let cost = task(
            "cost",
            MetricDirection::LowerBetter,
            vec![vec![1.0, 3.0], vec![2.0, 2.0]],
        );
        let reward = task(
            "reward",
            MetricDirection::HigherBetter,
            vec![vec![0.5, 2.0], vec![1.0, 1.0]],
        );
        let r = cross_task_ranks(&[cost, reward], CombinationPolicy::Exhaustive, Execution::Parallel).unwrap();
        assert_eq!(r.combination_count, 4);
        assert_eq!(r.counts, vec![vec![3, 1], vec![1, 3]]);
        assert_eq!(r.percentages, vec![vec![75.0, 25.0], vec![25.0, 75.0]]);
    }

    #[test]
    fn method_lists_must_match() {
        let a = task("a", MetricDirection::LowerBetter, vec![vec![1.0], vec![2.0]]);
        let mut b = a.clone();
        b.methods.reverse();
        assert!(cross_task_ranks(&[a, b], CombinationPolicy::Exhaustive, Execution::Sequential).is_err());
    }

    #[test]
    fn large_products_need_sampling() {
        let big = task(
            "t",
            MetricDirection::LowerBetter,
            vec![vec![0.0; 1001], vec![1.0; 1001]],
        );
        let tasks = vec![big.clone(), big];
        assert!(cross_task_ranks(&tasks, CombinationPolicy::Exhaustive, Execution::Sequential).is_err());
        let p = CombinationPolicy::Sampled { n: 5000, seed: 1 };
        let a = cross_task_ranks(&tasks, p, Execution::Parallel).unwrap();
        let b = cross_task_ranks(&tasks, p, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts[0][0], 5000);
    }

    proptest! {
        #[test]
        fn rows_and_columns_sum_to_100(
            a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 3),
            b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 3),
        ) {
            let tasks = [task("a", MetricDirection::LowerBetter, a), task("b", MetricDirection::HigherBetter, b)];
            let r = cross_task_ranks(&tasks, CombinationPolicy::Exhaustive, Execution::Sequential).unwrap();
            for row in &r.percentages {
                prop_assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
            }
            for c in 0..3 {
                prop_assert!((r.percentages.iter().map(|row| row[c]).sum::<f64>() - 100.0).abs() < 1e-9);
            }
        }
    }
}
